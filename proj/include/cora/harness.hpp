#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cora/adapter.hpp"
#include "cora/backbone.hpp"
#include "cora/datagen.hpp"
#include "cora/embedding.hpp"
#include "cora/granger.hpp"
#include "cora/json_io.hpp"
#include "cora/windows.hpp"

namespace cora {

inline constexpr int kConfigVersion = 1;

/// Either a CSV (+ schema sidecar) or the synthetic generator.
struct DataSpec {
  std::string csv;
  std::string schema;  // defaults to the sidecar next to the CSV
  GeneratorConfig generator;
};

struct OptimSpec {
  std::vector<double> lr_grid{1e-3, 3e-3};
  std::size_t batch_size = 32;
  std::size_t max_epochs = 50;
  std::size_t patience = 3;
};

struct ExperimentConfig {
  DataSpec data;
  WindowSpec windows;
  BackboneArch arch;
  PretrainConfig pretrain;
  /// target_dim and horizon are taken from arch.d_model and windows.horizon.
  AdapterDims adapter;
  Variant variant = Variant::kFull;
  InitMode init = InitMode::kZero;
  bool strict_zero_init = false;
  std::size_t foreign_dim = 16;
  OptimSpec optim;
  std::vector<std::uint64_t> seeds{1};
  double few_shot = 1.0;
  std::size_t granger_l_max = 5;
  /// Windows sampled from the test split for the GC comparison.
  std::size_t granger_windows = 100;
  /// Forecast samples per window for CRPS; needs a gaussian backbone head.
  std::size_t crps_samples = 0;

  /// Throws ConfigError.
  void validate() const;
  AdapterDims adapter_dims() const;
};

/// Unknown keys are rejected so typos fail loudly.
ExperimentConfig config_from_json(const Json& doc);
Json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

struct MetricSet {
  double mse = 0.0;
  double mae = 0.0;
  std::optional<double> crps;
  std::vector<double> mse_per_step;
  std::vector<double> mae_per_step;
  bool denormalized = true;
  std::size_t points = 0;
};

Json metrics_to_json(const MetricSet& m);

/// Accumulates (forecast, truth) rows; the result is a flat mean over points.
class MetricAccumulator {
 public:
  void add(std::span<const double> forecast, std::span<const double> truth);
  void add_crps(double window_crps);
  MetricSet result() const;

 private:
  std::vector<double> se_sum_;
  std::vector<double> ae_sum_;
  std::size_t rows_ = 0;
  double crps_sum_ = 0.0;
  std::size_t crps_rows_ = 0;
};

/// Maps a normalized window to its 1 x H normalized forecast.
using ForecastFn = std::function<Tensor2(const ForecastWindow& normalized)>;

/// K normalized sample rows (each 1 x H flattened) around a point forecast.
using SampleFn = std::function<std::vector<std::vector<double>>(const ForecastWindow& normalized,
                                                                const Tensor2& forecast)>;

/// Normalizes each raw window, forecasts, de-normalizes and scores against
/// the raw horizon. CRPS is filled when a sampler is given.
MetricSet evaluate(const ForecastFn& forecast, const WindowSet& raw_windows, const SampleFn& sampler = {});

/// samples: K rows of H values. Mean over steps of
/// mean|s - y| - 0.5 * mean over all K^2 pairs |s_i - s_j|.
double crps_from_samples(const std::vector<std::vector<double>>& samples, std::span<const double> truth);

/// Earliest ceil(f * n) windows.
WindowSet few_shot_subset(const WindowSet& set, double fraction);

/// Patience counter over per-epoch validation losses. `baseline` lets the
/// pre-training value act as the epoch-0 candidate.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience, double baseline = std::numeric_limits<double>::infinity());

  /// Records the next epoch; returns true when it is a new best.
  bool update(double val_loss);
  bool should_stop() const { return since_best_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best() const { return best_; }
  std::size_t epochs() const { return epoch_; }

 private:
  std::size_t patience_;
  double best_;
  std::size_t best_epoch_ = 0;
  std::size_t epoch_ = 0;
  std::size_t since_best_ = 0;
};

/// Frozen embeddings of a window set, computed once.
struct EmbeddedSet {
  std::vector<EmbeddingBundle> bundles;
  std::vector<Tensor2> truths;  // normalized, 1 x H

  std::size_t size() const { return bundles.size(); }
};

EmbeddedSet embed_windows(const EmbeddingExtractor& extractor, const WindowSet& raw_windows);

/// Batched normalized-space MSE of the adapter over an embedded set.
double adapter_set_mse(const AdapterParams& params, const BackboneArtifact& bb, const EmbeddedSet& set);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_mse = 0.0;
};

struct LrRun {
  double lr = 0.0;
  double initial_val = 0.0;
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
};

struct TrainLog {
  std::vector<LrRun> runs;
  std::size_t best_run = 0;

  const LrRun& best() const { return runs.at(best_run); }
};

struct TrainResult {
  AdapterParams params;
  TrainLog log;
};

/// Minibatch Adam on the adapter only, early-stopped on validation MSE, once
/// per grid lr; returns the best checkpoint across the grid. Throws
/// ConfigError on an empty train/val set and TrainingError on a non-finite loss.
TrainResult train_adapter(const OptimSpec& optim, const AdapterParams& init, const BackboneArtifact& bb,
                          const EmbeddedSet& train, const EmbeddedSet& val, std::uint64_t seed);

/// Synthetic data for a seed, or the configured CSV.
GeneratedData load_data(const ExperimentConfig& cfg, std::uint64_t seed);

BackboneArtifact pretrain_for(const ExperimentConfig& cfg, const WindowSplits& splits, std::uint64_t seed);

struct RunResult {
  Variant variant = Variant::kFull;
  std::uint64_t seed = 0;
  MetricSet test;
  MetricSet backbone_test;
  TrainLog log;
  AdapterParams params;
  std::vector<double> gate;
  std::vector<std::string> covariate_names;
};

/// Extractor with the per-seed foreign providers used by run_pipeline.
EmbeddingExtractor make_extractor(const ExperimentConfig& cfg, const SeriesFrame& frame, const BackboneArtifact& bb,
                                  std::uint64_t seed);

/// Adapt (one variant) on top of a frozen backbone and score the test split.
RunResult run_pipeline(const ExperimentConfig& cfg, const SeriesFrame& frame, const WindowSplits& splits,
                       const BackboneArtifact& bb, Variant variant, std::uint64_t seed);

/// Window starts sampled evenly from the test split for the GC comparison.
std::vector<std::size_t> granger_window_starts(const WindowSet& test, std::size_t count);

GrangerReport gate_granger_report(const ExperimentConfig& cfg, const SeriesFrame& frame, const WindowSplits& splits,
                                  const RunResult& run);

struct MultivariateResult {
  std::vector<std::string> channels;
  std::vector<MetricSet> per_channel;
  std::vector<std::size_t> covariate_counts;  // N seen by each run
  MetricSet combined;  // mean of per-channel metrics
};

/// Channel independence: every ts channel takes a turn as target with all
/// other channels as covariates.
MultivariateResult run_multivariate(const ExperimentConfig& cfg, const SeriesFrame& frame, std::uint64_t seed);

struct AblationCell {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double mse = 0.0;
  double mae = 0.0;
};

struct AblationRow {
  Variant variant = Variant::kFull;
  std::vector<AblationCell> cells;
  double median_mse = 0.0;
  double iqr_mse = 0.0;
  double median_mae = 0.0;
  double iqr_mae = 0.0;
  std::size_t failed = 0;
};

struct AblationTable {
  std::vector<AblationRow> rows;  // table order
};

/// Linear-interpolated quantile, q in [0, 1].
double quantile(std::vector<double> values, double q);

/// One backbone per seed, shared across variants. A failing cell is recorded
/// and the sweep continues.
AblationTable run_ablation(const ExperimentConfig& cfg, std::vector<Variant> variants,
                           const std::vector<std::uint64_t>& seeds);

Json ablation_to_json(const AblationTable& table);
std::string ablation_to_csv(const AblationTable& table);
Json train_log_to_json(const TrainLog& log);
std::string loss_curve_csv(const TrainLog& log);
std::string histogram_csv(const GrangerReport& report);

void write_text_file(const std::string& text, const std::filesystem::path& path);

}  // namespace cora
