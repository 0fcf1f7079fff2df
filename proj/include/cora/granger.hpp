#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cora/json_io.hpp"
#include "cora/series.hpp"

namespace cora {

inline constexpr double kSigmaFloor = 1e-12;
inline constexpr std::size_t kHistogramBins = 20;

enum class Criterion { kAic, kBic };

struct FitOptions {
  double ridge = 1e-8;
  /// Rows required beyond the lag: length >= lag + min_rows.
  std::size_t min_rows = 10;
  Criterion criterion = Criterion::kAic;
};

struct ArFit {
  std::size_t lag = 0;
  /// intercept, target lags 1..l, then covariate lags 1..l when present.
  std::vector<double> coefficients;
  double sigma2 = 0.0;  // RSS / n_eff, floored
  std::size_t n_eff = 0;
  double criterion = 0.0;

  std::size_t param_count() const { return coefficients.size(); }
};

/// Pass an empty covariate for the restricted (own-lags only) model.
ArFit fit_ar_ols(std::span<const double> target, std::span<const double> covariate, std::size_t lag,
                 const FitOptions& options = {});

/// argmin over 1..l_max of the unrestricted criterion; ties go to the smallest lag.
std::size_t select_lag(std::span<const double> target, std::span<const double> covariate, std::size_t l_max,
                       const FitOptions& options = {});

struct GrangerResult {
  double gc = 0.0;
  std::size_t lag = 0;
  double sigma2_restricted = 0.0;
  double sigma2_unrestricted = 0.0;
};

double gc_from_variances(double sigma2_restricted, double sigma2_unrestricted);

GrangerResult granger_geweke(std::span<const double> target, std::span<const double> covariate, std::size_t l_max,
                             const FitOptions& options = {});

struct Correlation {
  double r = 0.0;
  bool degenerate = false;
};

/// Zero-variance input gives r = 0 with the degenerate flag.
Correlation pearson_corr(std::span<const double> a, std::span<const double> b);

/// Equal-width bins over [-1, 1]; the last bin is closed.
std::vector<std::size_t> correlation_histogram(std::span<const double> values, std::size_t bins = kHistogramBins);

double median(std::vector<double> values);

struct CovariateGc {
  std::string name;
  double gc = 0.0;
  std::size_t lag = 0;
};

struct WindowGc {
  std::size_t start = 0;
  std::vector<double> gc;
  std::vector<std::size_t> lags;
  Correlation corr;
};

struct GrangerReport {
  std::size_t l_max = 0;
  std::vector<CovariateGc> covariates;  // over the whole series
  std::vector<double> gate_weights;
  std::vector<WindowGc> windows;
  std::size_t skipped = 0;
  std::size_t degenerate = 0;
  double median_r = 0.0;
  std::vector<std::size_t> histogram;
};

/// Scalar view of a channel: ts values, or the per-step feature mean for vector channels.
std::vector<double> scalar_proxy(const Channel& channel);

/// Whole-series GC of each named covariate on the target.
std::vector<CovariateGc> series_gc(const SeriesFrame& frame, std::span<const std::string> covariates,
                                   std::size_t l_max, const FitOptions& options = {});

/// Per window, GC of each covariate over [start, start + span) is correlated
/// with the (global) gate weights. Spans too short to fit are skipped and counted.
GrangerReport windowed_gc_report(const SeriesFrame& frame, std::span<const std::string> covariates,
                                 std::span<const std::size_t> window_starts, std::size_t span,
                                 std::span<const double> gate_weights, std::size_t l_max,
                                 const FitOptions& options = {});

Json report_to_json(const GrangerReport& report);

}  // namespace cora
