#include "cora/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "cora/errors.hpp"
#include "cora/random.hpp"

namespace cora {

using nlohmann::json;

namespace {

constexpr int kMaxResampleAttempts = 100;

enum StreamTag : std::uint64_t {
  kArTag = 1,
  kTargetNoiseTag = 2,
  kDriverTag = 100,
  kReverseTag = 200,
  kWhiteTag = 300,
  kTextTag = 400,
};

}  // namespace

std::string_view to_string(CovariateKind k) {
  switch (k) {
    case CovariateKind::kDriver:
      return "driver";
    case CovariateKind::kReverseDecoy:
      return "reverse_decoy";
    case CovariateKind::kWhiteDecoy:
      return "white_decoy";
    case CovariateKind::kTextView:
      return "text_view";
  }
  return "white_decoy";
}

void GeneratorConfig::validate() const {
  if (length < 2000) throw ConfigError("generator: length must be >= 2000, got " + std::to_string(length));
  if (drivers.empty()) throw ConfigError("generator: at least one causal driver is required");
  if (reverse_decoys.empty()) throw ConfigError("generator: at least one reverse-coupled decoy is required");
  if (white_decoys == 0) throw ConfigError("generator: at least one white-noise decoy is required");
  if (!(noise_std > 0.0)) throw ConfigError("generator: noise_std must be > 0");
  if (ar_coefficients.empty() && ar_order == 0) throw ConfigError("generator: AR order must be >= 1");
  for (const auto& d : drivers) {
    if (d.coefficients.empty()) throw ConfigError("generator: driver '" + d.name + "' has no coefficients");
    if (!(std::abs(d.persistence) < 1.0)) {
      throw ConfigError("generator: driver '" + d.name + "' persistence must satisfy |phi| < 1");
    }
  }
  if (text_channel && text_width == 0) throw ConfigError("generator: text_width must be >= 1");
}

std::size_t GroundTruthCausality::strongest_causal() const {
  std::size_t best = 0;
  double best_strength = -1.0;
  for (std::size_t i = 0; i < covariates.size(); ++i) {
    const auto& c = covariates[i];
    if (c.kind != CovariateKind::kDriver) continue;
    double s = 0.0;
    for (double v : c.coefficients) s += std::abs(v);
    if (s > best_strength) {
      best_strength = s;
      best = i;
    }
  }
  return best;
}

bool is_stable_ar(std::span<const double> coefficients) {
  std::vector<double> a(coefficients.begin(), coefficients.end());
  for (std::size_t k = a.size(); k >= 1; --k) {
    const double kappa = a[k - 1];
    if (!(std::abs(kappa) < 1.0)) return false;
    std::vector<double> lower(k - 1);
    for (std::size_t j = 1; j < k; ++j) lower[j - 1] = (a[j - 1] + kappa * a[k - j - 1]) / (1.0 - kappa * kappa);
    a = std::move(lower);
  }
  return true;
}

GeneratedData generate_var_dataset(const GeneratorConfig& config, std::uint64_t seed) {
  config.validate();

  std::vector<double> ar = config.ar_coefficients;
  {
    Rng rng(derive_seed(seed, kArTag));
    std::uniform_real_distribution<double> dist(-config.ar_scale, config.ar_scale);
    bool stable = false;
    for (int attempt = 0; attempt < kMaxResampleAttempts && !stable; ++attempt) {
      if (config.ar_coefficients.empty()) {
        ar.assign(config.ar_order, 0.0);
        for (auto& c : ar) c = dist(rng);
      }
      stable = is_stable_ar(ar);
    }
    if (!stable) {
      throw GenerationError("generator: no stable AR polynomial after " +
                            std::to_string(kMaxResampleAttempts) + " attempts");
    }
  }

  const std::size_t total = config.length + config.burn_in;
  std::normal_distribution<double> std_normal(0.0, 1.0);

  std::vector<std::vector<double>> drivers;
  for (std::size_t d = 0; d < config.drivers.size(); ++d) {
    const auto& spec = config.drivers[d];
    Rng rng(derive_seed(seed, kDriverTag + d));
    const double innovation = std::sqrt(1.0 - spec.persistence * spec.persistence);
    std::vector<double> u(total);
    u[0] = std_normal(rng);
    for (std::size_t t = 1; t < total; ++t) u[t] = spec.persistence * u[t - 1] + innovation * std_normal(rng);
    drivers.push_back(std::move(u));
  }

  std::vector<double> x(total, 0.0);
  {
    Rng rng(derive_seed(seed, kTargetNoiseTag));
    for (std::size_t t = 0; t < total; ++t) {
      double v = 0.0;
      for (std::size_t j = 1; j <= ar.size() && j <= t; ++j) v += ar[j - 1] * x[t - j];
      for (std::size_t d = 0; d < drivers.size(); ++d) {
        const auto& c = config.drivers[d].coefficients;
        for (std::size_t j = 1; j <= c.size() && j <= t; ++j) v += c[j - 1] * drivers[d][t - j];
      }
      x[t] = v + config.noise_std * std_normal(rng);
    }
  }

  std::vector<std::vector<double>> reverse;
  for (std::size_t k = 0; k < config.reverse_decoys.size(); ++k) {
    const auto& spec = config.reverse_decoys[k];
    Rng rng(derive_seed(seed, kReverseTag + k));
    std::vector<double> v(total);
    for (std::size_t t = 0; t < total; ++t) {
      const double prev = t == 0 ? 0.0 : x[t - 1];
      v[t] = spec.coupling * prev + spec.noise_std * std_normal(rng);
    }
    reverse.push_back(std::move(v));
  }

  std::vector<std::vector<double>> white;
  for (std::size_t k = 0; k < config.white_decoys; ++k) {
    Rng rng(derive_seed(seed, kWhiteTag + k));
    std::vector<double> w(total);
    for (auto& value : w) value = std_normal(rng);
    white.push_back(std::move(w));
  }

  const std::size_t skip = config.burn_in;
  auto tail = [&](const std::vector<double>& s) {
    return std::vector<double>(s.begin() + static_cast<std::ptrdiff_t>(skip), s.end());
  };

  std::vector<Channel> channels;
  GroundTruthCausality truth;
  truth.target_ar = ar;
  truth.noise_std = config.noise_std;

  channels.push_back({"x", Modality::kTs, Role::kTarget, false, 1, tail(x)});
  for (std::size_t d = 0; d < drivers.size(); ++d) {
    const auto& spec = config.drivers[d];
    channels.push_back({spec.name, Modality::kTs, Role::kCovariate, spec.future_known, 1, tail(drivers[d])});
    CovariateTruth ct{spec.name, CovariateKind::kDriver, false, spec.coefficients, 0};
    for (std::size_t j = 0; j < spec.coefficients.size(); ++j) {
      if (spec.coefficients[j] != 0.0) {
        ct.causal = true;
        ct.lag = j + 1;
      }
    }
    truth.covariates.push_back(std::move(ct));
  }
  for (std::size_t k = 0; k < reverse.size(); ++k) {
    const auto& spec = config.reverse_decoys[k];
    channels.push_back({spec.name, Modality::kTs, Role::kCovariate, false, 1, tail(reverse[k])});
    truth.covariates.push_back({spec.name, CovariateKind::kReverseDecoy, false, {}, 0});
  }
  for (std::size_t k = 0; k < white.size(); ++k) {
    const std::string name = "w" + std::to_string(k + 1);
    channels.push_back({name, Modality::kTs, Role::kCovariate, config.white_future_known, 1, tail(white[k])});
    truth.covariates.push_back({name, CovariateKind::kWhiteDecoy, false, {}, 0});
  }
  if (config.text_channel) {
    Rng rng(derive_seed(seed, kTextTag));
    const std::size_t width = config.text_width;
    std::vector<double> proj(width), offset(width);
    for (auto& p : proj) p = std_normal(rng);
    for (auto& o : offset) o = 0.5 * std_normal(rng);
    const auto& u = drivers.front();
    std::vector<double> features;
    features.reserve(config.length * width);
    for (std::size_t t = skip; t < total; ++t)
      for (std::size_t k = 0; k < width; ++k) features.push_back(std::tanh(proj[k] * u[t] + offset[k]));
    const auto& source = config.drivers.front();
    channels.push_back({config.text_name, Modality::kTxt, Role::kCovariate, source.future_known, width,
                        std::move(features)});
    // The text view carries the driver's information; it inherits its lag structure.
    CovariateTruth ct{config.text_name, CovariateKind::kTextView, truth.covariates.front().causal,
                      source.coefficients, truth.covariates.front().lag};
    truth.covariates.push_back(std::move(ct));
  }

  return {SeriesFrame(std::move(channels)), std::move(truth)};
}

void write_ground_truth(const GroundTruthCausality& truth, const std::filesystem::path& path) {
  json covs = json::array();
  for (const auto& c : truth.covariates) {
    covs.push_back({{"name", c.name},
                    {"kind", std::string(to_string(c.kind))},
                    {"causal", c.causal},
                    {"coefficients", c.coefficients},
                    {"lag", c.lag}});
  }
  json doc = {{"version", 1}, {"target_ar", truth.target_ar}, {"noise_std", truth.noise_std}, {"covariates", covs}};
  std::ofstream out(path);
  if (!out) throw InputError("cannot write ground truth file " + path.string());
  out << doc.dump(2) << "\n";
}

GroundTruthCausality read_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open ground truth file " + path.string());
  const json doc = json::parse(in);
  GroundTruthCausality truth;
  truth.target_ar = doc.at("target_ar").get<std::vector<double>>();
  truth.noise_std = doc.at("noise_std").get<double>();
  for (const auto& c : doc.at("covariates")) {
    CovariateTruth ct;
    ct.name = c.at("name").get<std::string>();
    const auto kind = c.at("kind").get<std::string>();
    for (auto k : {CovariateKind::kDriver, CovariateKind::kReverseDecoy, CovariateKind::kWhiteDecoy,
                   CovariateKind::kTextView})
      if (to_string(k) == kind) ct.kind = k;
    ct.causal = c.at("causal").get<bool>();
    ct.coefficients = c.at("coefficients").get<std::vector<double>>();
    ct.lag = c.at("lag").get<std::size_t>();
    truth.covariates.push_back(std::move(ct));
  }
  return truth;
}

}  // namespace cora
