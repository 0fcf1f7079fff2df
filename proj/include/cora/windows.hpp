#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cora/series.hpp"

namespace cora {

/// Per-step values of one covariate inside a window. Future-known channels
/// span lookback + horizon steps, the rest span the lookback only.
struct ChannelSlice {
  std::string name;
  Modality modality = Modality::kTs;
  std::size_t width = 1;
  bool future_known = false;
  std::vector<double> values;

  std::size_t steps() const { return width == 0 ? 0 : values.size() / width; }
  std::span<const double> step(std::size_t t) const {
    return std::span<const double>(values).subspan(t * width, width);
  }
};

struct NormRecord {
  double mean = 0.0;
  double std = 1.0;
};

inline constexpr double kStdFloor = 1e-8;

struct ForecastWindow {
  /// Source index (into the frame) of lookback[0].
  std::size_t start = 0;
  std::vector<double> lookback;
  std::vector<double> horizon_truth;
  std::vector<ChannelSlice> covariates;
  NormRecord norm;
  /// One record per covariate; identity for vector channels.
  std::vector<NormRecord> covariate_norms;
  bool normalized = false;

  std::size_t lookback_length() const { return lookback.size(); }
  std::size_t horizon() const { return horizon_truth.size(); }
};

struct SplitFractions {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

struct WindowSpec {
  std::size_t lookback = 96;
  std::size_t horizon = 24;
  std::size_t stride = 1;
  SplitFractions split;
};

struct WindowSet {
  std::size_t split_begin = 0;
  std::size_t split_end = 0;
  std::vector<ForecastWindow> windows;
  std::vector<std::string> warnings;

  std::size_t size() const { return windows.size(); }
  bool empty() const { return windows.empty(); }
};

struct WindowSplits {
  WindowSet train;
  WindowSet val;
  WindowSet test;
};

/// Number of windows of lookback + horizon that fit into `span_length`.
std::size_t window_count(std::size_t span_length, std::size_t lookback, std::size_t horizon, std::size_t stride);

/// Contiguous temporal splits (train, then val, then test); no window crosses a
/// split boundary. A split too short for one window comes back empty with a warning.
WindowSplits make_windows(const SeriesFrame& frame, const WindowSpec& spec);

/// Windows over [begin, end) of the frame, raw scale.
WindowSet windows_in_range(const SeriesFrame& frame, std::size_t begin, std::size_t end,
                           std::size_t lookback, std::size_t horizon, std::size_t stride);

/// Instance normalization from lookback statistics (population std, floored
/// at 1e-8). Scalar ts covariates use their own lookback statistics; vector
/// channels are left untouched.
ForecastWindow normalize_window(const ForecastWindow& window);
ForecastWindow denormalize_window(const ForecastWindow& window);

NormRecord lookback_stats(std::span<const double> values);

}  // namespace cora
