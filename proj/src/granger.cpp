#include "cora/granger.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "cora/errors.hpp"

namespace cora {

namespace {

void check_inputs(std::span<const double> target, std::span<const double> covariate, std::size_t lag,
                  const FitOptions& options) {
  if (lag == 0) throw InputError("granger: lag must be >= 1");
  if (!covariate.empty() && covariate.size() != target.size()) {
    throw InputError("granger: covariate length " + std::to_string(covariate.size()) + " != target length " +
                     std::to_string(target.size()));
  }
  if (target.size() < lag + options.min_rows) {
    throw InputError("granger: series of length " + std::to_string(target.size()) + " is too short for lag " +
                     std::to_string(lag) + " (needs " + std::to_string(lag + options.min_rows) + ")");
  }
}

double criterion_value(const FitOptions& options, std::size_t n_eff, double sigma2, std::size_t params) {
  const double n = static_cast<double>(n_eff);
  const double penalty = options.criterion == Criterion::kAic ? 2.0 : std::log(n);
  return n * std::log(sigma2) + penalty * static_cast<double>(params);
}

}  // namespace

ArFit fit_ar_ols(std::span<const double> target, std::span<const double> covariate, std::size_t lag,
                 const FitOptions& options) {
  check_inputs(target, covariate, lag, options);
  const std::size_t n_eff = target.size() - lag;
  const std::size_t p = 1 + lag * (covariate.empty() ? 1 : 2);

  Eigen::MatrixXd x(static_cast<Eigen::Index>(n_eff), static_cast<Eigen::Index>(p));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n_eff));
  for (std::size_t r = 0; r < n_eff; ++r) {
    const std::size_t t = r + lag;
    const auto row = static_cast<Eigen::Index>(r);
    y(row) = target[t];
    x(row, 0) = 1.0;
    for (std::size_t k = 1; k <= lag; ++k) {
      x(row, static_cast<Eigen::Index>(k)) = target[t - k];
      if (!covariate.empty()) x(row, static_cast<Eigen::Index>(lag + k)) = covariate[t - k];
    }
  }
  if (!x.allFinite() || !y.allFinite()) throw NumericError("granger: non-finite input");

  Eigen::MatrixXd gram = x.transpose() * x;
  gram.diagonal().array() += options.ridge;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) throw NumericError("granger: Gram matrix singular after ridge");
  const Eigen::VectorXd beta = llt.solve(x.transpose() * y);
  if (!beta.allFinite()) throw NumericError("granger: non-finite coefficients");

  const double rss = (y - x * beta).squaredNorm();
  ArFit fit;
  fit.lag = lag;
  fit.coefficients.assign(beta.data(), beta.data() + beta.size());
  fit.n_eff = n_eff;
  fit.sigma2 = std::max(rss / static_cast<double>(n_eff), kSigmaFloor);
  fit.criterion = criterion_value(options, n_eff, fit.sigma2, p);
  return fit;
}

std::size_t select_lag(std::span<const double> target, std::span<const double> covariate, std::size_t l_max,
                       const FitOptions& options) {
  if (l_max == 0) throw InputError("select_lag: l_max must be >= 1");
  check_inputs(target, covariate, l_max, options);
  std::size_t best = 1;
  double best_value = fit_ar_ols(target, covariate, 1, options).criterion;
  for (std::size_t l = 2; l <= l_max; ++l) {
    const double v = fit_ar_ols(target, covariate, l, options).criterion;
    if (v < best_value) {
      best_value = v;
      best = l;
    }
  }
  return best;
}

double gc_from_variances(double sigma2_restricted, double sigma2_unrestricted) {
  if (!(sigma2_restricted > 0.0) || !(sigma2_unrestricted > 0.0)) {
    throw DomainError("gc_from_variances: variances must be positive");
  }
  return std::log(std::max(sigma2_restricted, kSigmaFloor) / std::max(sigma2_unrestricted, kSigmaFloor));
}

GrangerResult granger_geweke(std::span<const double> target, std::span<const double> covariate, std::size_t l_max,
                             const FitOptions& options) {
  if (covariate.empty()) throw InputError("granger_geweke: covariate is empty");
  GrangerResult out;
  out.lag = select_lag(target, covariate, l_max, options);
  out.sigma2_restricted = fit_ar_ols(target, {}, out.lag, options).sigma2;
  out.sigma2_unrestricted = fit_ar_ols(target, covariate, out.lag, options).sigma2;
  out.gc = gc_from_variances(out.sigma2_restricted, out.sigma2_unrestricted);
  return out;
}

Correlation pearson_corr(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InputError("pearson_corr: lengths differ (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                     ")");
  }
  if (a.size() < 2) throw InputError("pearson_corr: needs at least 2 values");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa / n <= 1e-12 || sbb / n <= 1e-12) return {0.0, true};
  return {std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0), false};
}

std::vector<std::size_t> correlation_histogram(std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw InputError("histogram: bins must be >= 1");
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    const double c = std::clamp(v, -1.0, 1.0);
    auto idx = static_cast<std::size_t>(std::floor((c + 1.0) / 2.0 * static_cast<double>(bins)));
    counts[std::min(idx, bins - 1)] += 1;
  }
  return counts;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 == 1 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

std::vector<double> scalar_proxy(const Channel& channel) {
  const std::size_t n = channel.steps();
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    double s = 0.0;
    for (double v : channel.at(t)) s += v;
    out[t] = s / static_cast<double>(channel.width);
  }
  return out;
}

std::vector<CovariateGc> series_gc(const SeriesFrame& frame, std::span<const std::string> covariates,
                                   std::size_t l_max, const FitOptions& options) {
  const auto target = scalar_proxy(frame.target());
  std::vector<CovariateGc> out;
  for (const auto& name : covariates) {
    const auto cov = scalar_proxy(frame.channel(name));
    const auto r = granger_geweke(target, cov, l_max, options);
    out.push_back({name, r.gc, r.lag});
  }
  return out;
}

GrangerReport windowed_gc_report(const SeriesFrame& frame, std::span<const std::string> covariates,
                                 std::span<const std::size_t> window_starts, std::size_t span,
                                 std::span<const double> gate_weights, std::size_t l_max,
                                 const FitOptions& options) {
  if (covariates.size() < 2) throw InputError("windowed_gc_report: needs at least 2 covariates");
  if (gate_weights.size() != covariates.size()) {
    throw InputError("windowed_gc_report: " + std::to_string(gate_weights.size()) + " gate weights for " +
                     std::to_string(covariates.size()) + " covariates");
  }
  if (window_starts.size() < 30) {
    throw InputError("windowed_gc_report: needs at least 30 windows, got " + std::to_string(window_starts.size()));
  }

  const auto target = scalar_proxy(frame.target());
  std::vector<std::vector<double>> covs;
  for (const auto& name : covariates) covs.push_back(scalar_proxy(frame.channel(name)));

  GrangerReport report;
  report.l_max = l_max;
  report.gate_weights.assign(gate_weights.begin(), gate_weights.end());
  report.covariates = series_gc(frame, covariates, l_max, options);

  std::vector<double> rs;
  for (std::size_t start : window_starts) {
    if (start + span > target.size() || span < l_max + options.min_rows) {
      ++report.skipped;
      continue;
    }
    const std::span<const double> tw(target.data() + start, span);
    WindowGc w;
    w.start = start;
    try {
      for (const auto& c : covs) {
        const auto r = granger_geweke(tw, std::span<const double>(c.data() + start, span), l_max, options);
        w.gc.push_back(r.gc);
        w.lags.push_back(r.lag);
      }
    } catch (const NumericError&) {
      ++report.skipped;
      continue;
    }
    w.corr = pearson_corr(w.gc, gate_weights);
    if (w.corr.degenerate) ++report.degenerate;
    rs.push_back(w.corr.r);
    report.windows.push_back(std::move(w));
  }
  report.median_r = median(rs);
  report.histogram = correlation_histogram(rs);
  return report;
}

Json report_to_json(const GrangerReport& report) {
  Json covs = Json::array();
  for (const auto& c : report.covariates) covs.push_back({{"name", c.name}, {"gc", c.gc}, {"lag", c.lag}});
  Json windows = Json::array();
  for (const auto& w : report.windows) {
    windows.push_back(
        {{"start", w.start}, {"gc", w.gc}, {"lags", w.lags}, {"r", w.corr.r}, {"degenerate", w.corr.degenerate}});
  }
  return {{"format", "cora-granger-report"},
          {"version", 1},
          {"l_max", report.l_max},
          {"covariates", covs},
          {"gate_weights", report.gate_weights},
          {"windows", windows},
          {"skipped", report.skipped},
          {"degenerate", report.degenerate},
          {"median_r", report.median_r},
          {"histogram", {{"lo", -1.0}, {"hi", 1.0}, {"counts", report.histogram}}}};
}

}  // namespace cora
