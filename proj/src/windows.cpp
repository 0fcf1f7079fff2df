#include "cora/windows.hpp"

#include <algorithm>
#include <cmath>

#include "cora/errors.hpp"

namespace cora {

std::size_t window_count(std::size_t span_length, std::size_t lookback, std::size_t horizon, std::size_t stride) {
  if (stride == 0) throw InputError("window_count: stride must be >= 1");
  if (span_length < lookback + horizon) return 0;
  return (span_length - lookback - horizon) / stride + 1;
}

WindowSet windows_in_range(const SeriesFrame& frame, std::size_t begin, std::size_t end,
                           std::size_t lookback, std::size_t horizon, std::size_t stride) {
  if (lookback == 0 || horizon == 0) throw InputError("windows: lookback and horizon must be >= 1");
  if (end > frame.length() || begin > end) throw InputError("windows: range outside frame");
  WindowSet set;
  set.split_begin = begin;
  set.split_end = end;
  const std::size_t count = window_count(end - begin, lookback, horizon, stride);
  if (count == 0) {
    set.warnings.push_back("split [" + std::to_string(begin) + "," + std::to_string(end) +
                           ") is shorter than lookback + horizon = " + std::to_string(lookback + horizon) +
                           "; no windows");
    return set;
  }
  const Channel& target = frame.target();
  const auto covariates = frame.covariates();
  set.windows.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t s = begin + k * stride;
    ForecastWindow w;
    w.start = s;
    w.lookback.assign(target.values.begin() + static_cast<std::ptrdiff_t>(s),
                      target.values.begin() + static_cast<std::ptrdiff_t>(s + lookback));
    w.horizon_truth.assign(target.values.begin() + static_cast<std::ptrdiff_t>(s + lookback),
                           target.values.begin() + static_cast<std::ptrdiff_t>(s + lookback + horizon));
    for (const Channel* c : covariates) {
      const std::size_t steps = c->future_known ? lookback + horizon : lookback;
      ChannelSlice slice{c->name, c->modality, c->width, c->future_known, {}};
      slice.values.assign(c->values.begin() + static_cast<std::ptrdiff_t>(s * c->width),
                          c->values.begin() + static_cast<std::ptrdiff_t>((s + steps) * c->width));
      w.covariates.push_back(std::move(slice));
      w.covariate_norms.push_back({});
    }
    set.windows.push_back(std::move(w));
  }
  return set;
}

WindowSplits make_windows(const SeriesFrame& frame, const WindowSpec& spec) {
  const auto& f = spec.split;
  if (f.train < 0.0 || f.val < 0.0 || f.test < 0.0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw InputError("make_windows: split fractions must be nonnegative and sum to 1");
  }
  if (spec.lookback + spec.horizon > frame.length()) {
    throw InputError("make_windows: lookback + horizon = " + std::to_string(spec.lookback + spec.horizon) +
                     " exceeds frame length " + std::to_string(frame.length()));
  }
  const std::size_t n = frame.length();
  const auto train_end = static_cast<std::size_t>(std::floor(f.train * static_cast<double>(n)));
  const auto val_end = std::min(n, train_end + static_cast<std::size_t>(std::floor(f.val * static_cast<double>(n))));
  WindowSplits out;
  out.train = windows_in_range(frame, 0, train_end, spec.lookback, spec.horizon, spec.stride);
  out.val = windows_in_range(frame, train_end, val_end, spec.lookback, spec.horizon, spec.stride);
  out.test = windows_in_range(frame, val_end, n, spec.lookback, spec.horizon, spec.stride);
  return out;
}

NormRecord lookback_stats(std::span<const double> values) {
  if (values.size() < 2) throw InputError("normalize: lookback needs at least 2 values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return {mean, std::max(std::sqrt(var), kStdFloor)};
}

ForecastWindow normalize_window(const ForecastWindow& window) {
  if (window.normalized) return window;
  ForecastWindow out = window;
  out.norm = lookback_stats(window.lookback);
  for (auto& v : out.lookback) v = (v - out.norm.mean) / out.norm.std;
  for (auto& v : out.horizon_truth) v = (v - out.norm.mean) / out.norm.std;
  const std::size_t lookback = window.lookback.size();
  out.covariate_norms.assign(out.covariates.size(), NormRecord{});
  for (std::size_t i = 0; i < out.covariates.size(); ++i) {
    auto& c = out.covariates[i];
    if (c.modality != Modality::kTs || c.width != 1) continue;
    const std::size_t n = std::min(lookback, c.values.size());
    const NormRecord rec = lookback_stats(std::span<const double>(c.values).first(n));
    for (auto& v : c.values) v = (v - rec.mean) / rec.std;
    out.covariate_norms[i] = rec;
  }
  out.normalized = true;
  return out;
}

ForecastWindow denormalize_window(const ForecastWindow& window) {
  if (!window.normalized) return window;
  ForecastWindow out = window;
  for (auto& v : out.lookback) v = v * out.norm.std + out.norm.mean;
  for (auto& v : out.horizon_truth) v = v * out.norm.std + out.norm.mean;
  for (std::size_t i = 0; i < out.covariates.size(); ++i) {
    auto& c = out.covariates[i];
    if (c.modality != Modality::kTs || c.width != 1) continue;
    const NormRecord rec = out.covariate_norms[i];
    for (auto& v : c.values) v = v * rec.std + rec.mean;
  }
  out.normalized = false;
  return out;
}

}  // namespace cora
