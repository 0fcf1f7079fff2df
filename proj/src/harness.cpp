#include "cora/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "cora/errors.hpp"
#include "cora/optim.hpp"
#include "cora/random.hpp"

namespace cora {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Tensor2 denormalize_row(const Tensor2& row, const NormRecord& norm) {
  Tensor2 out = row;
  for (auto& v : out.data()) v = v * norm.std + norm.mean;
  return out;
}

AdapterBatch batch_of(const EmbeddedSet& set, std::span<const std::size_t> idx, bool with_covariates) {
  std::vector<const EmbeddingBundle*> bundles;
  std::vector<const Tensor2*> truths;
  bundles.reserve(idx.size());
  truths.reserve(idx.size());
  for (std::size_t i : idx) {
    bundles.push_back(&set.bundles[i]);
    truths.push_back(&set.truths[i]);
  }
  AdapterBatch b = make_adapter_batch(bundles, truths);
  if (!with_covariates) b.covariates.clear();
  return b;
}

}  // namespace

Json metrics_to_json(const MetricSet& m) {
  Json j = {{"mse", m.mse},
            {"mae", m.mae},
            {"mse_per_step", m.mse_per_step},
            {"mae_per_step", m.mae_per_step},
            {"denormalized", m.denormalized},
            {"points", m.points}};
  j["crps"] = m.crps ? Json(*m.crps) : Json(nullptr);
  return j;
}

void MetricAccumulator::add(std::span<const double> forecast, std::span<const double> truth) {
  if (forecast.size() != truth.size()) {
    throw DimensionError("metrics: forecast has " + std::to_string(forecast.size()) + " steps, truth has " +
                         std::to_string(truth.size()));
  }
  if (rows_ == 0) {
    se_sum_.assign(truth.size(), 0.0);
    ae_sum_.assign(truth.size(), 0.0);
  } else if (truth.size() != se_sum_.size()) {
    throw DimensionError("metrics: horizon changed between windows");
  }
  for (std::size_t h = 0; h < truth.size(); ++h) {
    const double d = forecast[h] - truth[h];
    se_sum_[h] += d * d;
    ae_sum_[h] += std::abs(d);
  }
  ++rows_;
}

void MetricAccumulator::add_crps(double window_crps) {
  crps_sum_ += window_crps;
  ++crps_rows_;
}

MetricSet MetricAccumulator::result() const {
  MetricSet m;
  if (rows_ == 0) return m;
  const double n = static_cast<double>(rows_);
  for (std::size_t h = 0; h < se_sum_.size(); ++h) {
    m.mse_per_step.push_back(se_sum_[h] / n);
    m.mae_per_step.push_back(ae_sum_[h] / n);
  }
  m.points = rows_ * se_sum_.size();
  const double pts = static_cast<double>(m.points);
  m.mse = std::accumulate(se_sum_.begin(), se_sum_.end(), 0.0) / pts;
  m.mae = std::accumulate(ae_sum_.begin(), ae_sum_.end(), 0.0) / pts;
  if (crps_rows_ > 0) m.crps = crps_sum_ / static_cast<double>(crps_rows_);
  return m;
}

double crps_from_samples(const std::vector<std::vector<double>>& samples, std::span<const double> truth) {
  if (samples.empty()) throw InputError("crps: needs at least one sample");
  const std::size_t k = samples.size();
  const std::size_t h = truth.size();
  if (h == 0) throw InputError("crps: empty truth");
  for (const auto& s : samples) {
    if (s.size() != h) throw DimensionError("crps: sample length differs from truth");
  }
  double total = 0.0;
  for (std::size_t t = 0; t < h; ++t) {
    double fit = 0.0;
    for (std::size_t i = 0; i < k; ++i) fit += std::abs(samples[i][t] - truth[t]);
    double spread = 0.0;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) spread += std::abs(samples[i][t] - samples[j][t]);
    const double kk = static_cast<double>(k);
    total += fit / kk - 0.5 * spread / (kk * kk);
  }
  return total / static_cast<double>(h);
}

MetricSet evaluate(const ForecastFn& forecast, const WindowSet& raw_windows, const SampleFn& sampler) {
  MetricAccumulator acc;
  for (const auto& raw : raw_windows.windows) {
    const ForecastWindow w = normalize_window(raw);
    const Tensor2 f = forecast(w);
    const Tensor2 denorm = denormalize_row(f, w.norm);
    acc.add(denorm.data(), raw.horizon_truth);
    if (sampler) {
      auto samples = sampler(w, f);
      for (auto& s : samples)
        for (auto& v : s) v = v * w.norm.std + w.norm.mean;
      acc.add_crps(crps_from_samples(samples, raw.horizon_truth));
    }
  }
  return acc.result();
}

WindowSet few_shot_subset(const WindowSet& set, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("few_shot fraction must lie in (0, 1]");
  WindowSet out = set;
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(set.size())));
  out.windows.resize(std::min(keep, set.size()));
  return out;
}

EarlyStopper::EarlyStopper(std::size_t patience, double baseline) : patience_(patience), best_(baseline) {
  if (patience == 0) throw ConfigError("patience must be >= 1");
}

bool EarlyStopper::update(double val_loss) {
  ++epoch_;
  if (val_loss < best_) {
    best_ = val_loss;
    best_epoch_ = epoch_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

EmbeddedSet embed_windows(const EmbeddingExtractor& extractor, const WindowSet& raw_windows) {
  EmbeddedSet out;
  out.bundles.reserve(raw_windows.size());
  out.truths.reserve(raw_windows.size());
  for (const auto& raw : raw_windows.windows) {
    const ForecastWindow w = normalize_window(raw);
    out.bundles.push_back(extractor.bundle(w));
    out.truths.push_back(Tensor2::row_vector(w.horizon_truth));
  }
  return out;
}

double adapter_set_mse(const AdapterParams& params, const BackboneArtifact& bb, const EmbeddedSet& set) {
  if (set.size() == 0) throw InputError("adapter_set_mse: empty set");
  constexpr std::size_t kChunk = 256;
  const bool covs = params.variant != Variant::kWoCovariate;
  double se = 0.0;
  std::size_t points = 0;
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < set.size(); begin += kChunk) {
    idx.clear();
    for (std::size_t i = begin; i < std::min(set.size(), begin + kChunk); ++i) idx.push_back(i);
    const AdapterBatch batch = batch_of(set, idx, covs);
    const Tensor2 f = adapter_forecast(params, bb, batch);
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double d = f[i] - batch.truth[i];
      se += d * d;
    }
    points += f.size();
  }
  return se / static_cast<double>(points);
}

TrainResult train_adapter(const OptimSpec& optim, const AdapterParams& init, const BackboneArtifact& bb,
                          const EmbeddedSet& train, const EmbeddedSet& val, std::uint64_t seed) {
  if (train.size() == 0) throw ConfigError("train_adapter: training set is empty");
  if (val.size() == 0) throw ConfigError("train_adapter: validation set is empty");
  if (optim.lr_grid.empty()) throw ConfigError("train_adapter: lr grid is empty");
  const bool covs = init.variant != Variant::kWoCovariate;

  TrainResult best;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t global_step = 0;

  for (std::size_t g = 0; g < optim.lr_grid.size(); ++g) {
    const double lr = optim.lr_grid[g];
    AdapterParams params = init;
    AdapterParams best_params = init;
    LrRun run;
    run.lr = lr;
    run.initial_val = adapter_set_mse(params, bb, val);

    std::vector<Tensor2> values;
    for (const auto& [_, t] : params.tensors()) values.push_back(*t);
    Adam adam({lr, 0.9, 0.999, 1e-8}, values);
    EarlyStopper stopper(optim.patience, run.initial_val);

    std::vector<std::size_t> order(train.size());
    std::vector<Tensor2> grads;
    for (std::size_t epoch = 1; epoch <= optim.max_epochs; ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      Rng rng(derive_seed(seed, (g + 1) * 100000 + epoch));
      std::shuffle(order.begin(), order.end(), rng);

      double loss_sum = 0.0;
      for (std::size_t begin = 0; begin < order.size(); begin += optim.batch_size) {
        const std::size_t end = std::min(order.size(), begin + optim.batch_size);
        const AdapterBatch batch = batch_of(train, std::span<const std::size_t>(order).subspan(begin, end - begin), covs);
        ++global_step;
        double loss = 0.0;
        try {
          loss = adapter_loss_and_grad(params, bb, batch, &grads);
        } catch (const NumericError& e) {
          throw TrainingError("adapter training diverged at step " + std::to_string(global_step) + " (lr " + fmt(lr) +
                              ", epoch " + std::to_string(epoch) + "): " + e.what());
        }
        if (!std::isfinite(loss)) {
          throw TrainingError("adapter training produced a non-finite loss at step " + std::to_string(global_step) +
                              " (lr " + fmt(lr) + ", epoch " + std::to_string(epoch) + ")");
        }
        auto list = params.tensors();
        for (std::size_t k = 0; k < list.size(); ++k) values[k] = *list[k].second;
        adam.step(values, grads);
        for (std::size_t k = 0; k < list.size(); ++k) *list[k].second = values[k];
        loss_sum += loss * static_cast<double>(end - begin);
      }

      const double v = adapter_set_mse(params, bb, val);
      if (!std::isfinite(v)) {
        throw TrainingError("adapter validation MSE is non-finite after epoch " + std::to_string(epoch) + " (lr " +
                            fmt(lr) + ")");
      }
      run.epochs.push_back({epoch, loss_sum / static_cast<double>(order.size()), v});
      if (stopper.update(v)) best_params = params;
      if (stopper.should_stop()) break;
    }
    run.best_epoch = stopper.best_epoch();
    run.best_val = stopper.best();
    best.log.runs.push_back(run);
    if (run.best_val < best_val) {
      best_val = run.best_val;
      best.params = best_params;
      best.log.best_run = g;
    }
  }
  if (best.log.runs.empty() || !std::isfinite(best_val)) {
    // every grid point kept the initial params
    best.params = init;
  }
  return best;
}

GeneratedData load_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (!cfg.data.csv.empty()) {
    const std::filesystem::path csv = cfg.data.csv;
    const std::filesystem::path schema = cfg.data.schema.empty() ? default_schema_path(csv) : std::filesystem::path(cfg.data.schema);
    return {load_csv(csv, schema), {}};
  }
  return generate_var_dataset(cfg.data.generator, seed);
}

BackboneArtifact pretrain_for(const ExperimentConfig& cfg, const WindowSplits& splits, std::uint64_t seed) {
  return pretrain_backbone(splits.train, splits.val, cfg.arch, cfg.pretrain, derive_seed(seed, 0xB0));
}

EmbeddingExtractor make_extractor(const ExperimentConfig& cfg, const SeriesFrame& frame, const BackboneArtifact& bb,
                                  std::uint64_t seed) {
  return EmbeddingExtractor(bb, manifest_from_frame(frame, bb.embedding_dim(), cfg.foreign_dim),
                            derive_seed(seed, 0xE0));
}

RunResult run_pipeline(const ExperimentConfig& cfg, const SeriesFrame& frame, const WindowSplits& splits,
                       const BackboneArtifact& bb, Variant variant, std::uint64_t seed) {
  const EmbeddingExtractor extractor = make_extractor(cfg, frame, bb, seed);
  const CovariateManifest& manifest = extractor.manifest();

  const WindowSet train_windows = few_shot_subset(splits.train, cfg.few_shot);
  const EmbeddedSet train = embed_windows(extractor, train_windows);
  const EmbeddedSet val = embed_windows(extractor, splits.val);

  AdapterDims dims = cfg.adapter_dims();
  const AdapterParams init = init_adapter(dims, variant == Variant::kWoCovariate ? CovariateManifest{} : manifest,
                                          variant, cfg.init, derive_seed(seed, 0xA0), {cfg.strict_zero_init});
  TrainResult trained = train_adapter(cfg.optim, init, bb, train, val, derive_seed(seed, 0x7A));

  RunResult out;
  out.variant = variant;
  out.seed = seed;
  out.params = std::move(trained.params);
  out.log = std::move(trained.log);
  out.gate = gate_weights(out.params);
  for (const auto& e : out.params.manifest.entries) out.covariate_names.push_back(e.name);

  SampleFn sampler;
  if (cfg.crps_samples > 0 && bb.arch().gaussian_head) {
    const std::size_t k = cfg.crps_samples;
    const std::size_t h = cfg.windows.horizon;
    sampler = [&bb, k, h, seed](const ForecastWindow& w, const Tensor2& mean) {
      const Tensor2 emb = extract_target_embedding(bb, w.lookback);
      const Tensor2 log_std = bb.log_std_head(emb);
      Rng rng(derive_seed(seed, 0xC0 + w.start));
      std::normal_distribution<double> n01(0.0, 1.0);
      std::vector<std::vector<double>> samples(k, std::vector<double>(h));
      for (auto& s : samples)
        for (std::size_t t = 0; t < h; ++t) s[t] = mean[t] + std::exp(log_std[t]) * n01(rng);
      return samples;
    };
  }
  const AdapterParams& params = out.params;
  out.test = evaluate([&](const ForecastWindow& w) { return cora_forward(params, extractor, w); }, splits.test,
                      sampler);
  out.backbone_test = evaluate(
      [&](const ForecastWindow& w) {
        return head_forecast(bb, extract_target_embedding(bb, w.lookback), cfg.windows.horizon);
      },
      splits.test, sampler);
  return out;
}

std::vector<std::size_t> granger_window_starts(const WindowSet& test, std::size_t count) {
  std::vector<std::size_t> starts;
  const std::size_t n = test.size();
  if (n == 0 || count == 0) return starts;
  if (count >= n || count == 1) {
    for (std::size_t i = 0; i < (count == 1 ? 1 : n); ++i) starts.push_back(test.windows[i].start);
    return starts;
  }
  for (std::size_t k = 0; k < count; ++k) starts.push_back(test.windows[k * (n - 1) / (count - 1)].start);
  return starts;
}

GrangerReport gate_granger_report(const ExperimentConfig& cfg, const SeriesFrame& frame, const WindowSplits& splits,
                                  const RunResult& run) {
  const auto starts = granger_window_starts(splits.test, cfg.granger_windows);
  return windowed_gc_report(frame, run.covariate_names, starts, cfg.windows.lookback, run.gate, cfg.granger_l_max);
}

MultivariateResult run_multivariate(const ExperimentConfig& cfg, const SeriesFrame& frame, std::uint64_t seed) {
  std::vector<std::size_t> ts_channels;
  for (std::size_t i = 0; i < frame.channels().size(); ++i) {
    const auto& c = frame.channels()[i];
    if (c.modality == Modality::kTs && c.width == 1) ts_channels.push_back(i);
  }
  if (ts_channels.size() < 2) throw InputError("run_multivariate: frame needs at least 2 ts channels");

  MultivariateResult out;
  for (std::size_t target : ts_channels) {
    std::vector<Channel> channels = frame.channels();
    for (std::size_t i = 0; i < channels.size(); ++i) channels[i].role = i == target ? Role::kTarget : Role::kCovariate;
    const SeriesFrame view(std::move(channels), frame.first_step());
    const WindowSplits splits = make_windows(view, cfg.windows);
    const BackboneArtifact bb = pretrain_for(cfg, splits, seed);
    const RunResult run = run_pipeline(cfg, view, splits, bb, cfg.variant, seed);
    out.channels.push_back(view.target().name);
    out.per_channel.push_back(run.test);
    out.covariate_counts.push_back(run.covariate_names.size());
  }
  const double n = static_cast<double>(out.per_channel.size());
  MetricSet& c = out.combined;
  c.mse_per_step.assign(out.per_channel.front().mse_per_step.size(), 0.0);
  c.mae_per_step.assign(c.mse_per_step.size(), 0.0);
  for (const auto& m : out.per_channel) {
    c.mse += m.mse / n;
    c.mae += m.mae / n;
    c.points += m.points;
    for (std::size_t h = 0; h < c.mse_per_step.size(); ++h) {
      c.mse_per_step[h] += m.mse_per_step[h] / n;
      c.mae_per_step[h] += m.mae_per_step[h] / n;
    }
  }
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

AblationTable run_ablation(const ExperimentConfig& cfg, std::vector<Variant> variants,
                           const std::vector<std::uint64_t>& seeds) {
  if (variants.empty()) throw ConfigError("run_ablation: no variants");
  if (seeds.empty()) throw ConfigError("run_ablation: no seeds");
  std::vector<Variant> ordered;
  for (Variant v : kAllVariants)
    if (std::find(variants.begin(), variants.end(), v) != variants.end()) ordered.push_back(v);

  AblationTable table;
  for (Variant v : ordered) table.rows.push_back({v, {}, 0, 0, 0, 0, 0});

  for (std::uint64_t seed : seeds) {
    std::optional<GeneratedData> data;
    std::optional<WindowSplits> splits;
    std::optional<BackboneArtifact> bb;
    std::string setup_error;
    try {
      data = load_data(cfg, seed);
      splits = make_windows(data->frame, cfg.windows);
      bb = pretrain_for(cfg, *splits, seed);
    } catch (const Error& e) {
      setup_error = e.what();
    }
    for (auto& row : table.rows) {
      AblationCell cell;
      cell.seed = seed;
      if (!setup_error.empty()) {
        cell.error = setup_error;
      } else {
        try {
          const RunResult r = run_pipeline(cfg, data->frame, *splits, *bb, row.variant, seed);
          cell.ok = true;
          cell.mse = r.test.mse;
          cell.mae = r.test.mae;
        } catch (const Error& e) {
          cell.error = e.what();
        }
      }
      row.cells.push_back(cell);
    }
  }

  for (auto& row : table.rows) {
    std::vector<double> mse, mae;
    for (const auto& c : row.cells) {
      if (!c.ok) {
        ++row.failed;
        continue;
      }
      mse.push_back(c.mse);
      mae.push_back(c.mae);
    }
    row.median_mse = quantile(mse, 0.5);
    row.iqr_mse = quantile(mse, 0.75) - quantile(mse, 0.25);
    row.median_mae = quantile(mae, 0.5);
    row.iqr_mae = quantile(mae, 0.75) - quantile(mae, 0.25);
  }
  return table;
}

Json ablation_to_json(const AblationTable& table) {
  Json rows = Json::array();
  for (const auto& r : table.rows) {
    Json cells = Json::array();
    for (const auto& c : r.cells) {
      Json cell = {{"seed", c.seed}, {"ok", c.ok}};
      if (c.ok) {
        cell["mse"] = c.mse;
        cell["mae"] = c.mae;
      } else {
        cell["error"] = c.error;
      }
      cells.push_back(cell);
    }
    rows.push_back({{"variant", std::string(to_string(r.variant))},
                    {"median_mse", r.median_mse},
                    {"iqr_mse", r.iqr_mse},
                    {"median_mae", r.median_mae},
                    {"iqr_mae", r.iqr_mae},
                    {"failed", r.failed},
                    {"cells", cells}});
  }
  return {{"format", "cora-ablation"}, {"version", 1}, {"rows", rows}};
}

std::string ablation_to_csv(const AblationTable& table) {
  std::string out = "variant,median_mse,iqr_mse,median_mae,iqr_mae,ok,failed\n";
  for (const auto& r : table.rows) {
    out += std::string(to_string(r.variant)) + "," + fmt(r.median_mse) + "," + fmt(r.iqr_mse) + "," +
           fmt(r.median_mae) + "," + fmt(r.iqr_mae) + "," + std::to_string(r.cells.size() - r.failed) + "," +
           std::to_string(r.failed) + "\n";
  }
  return out;
}

Json train_log_to_json(const TrainLog& log) {
  Json runs = Json::array();
  for (const auto& r : log.runs) {
    Json epochs = Json::array();
    for (const auto& e : r.epochs) {
      epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_mse", e.val_mse}});
    }
    runs.push_back({{"lr", r.lr},
                    {"initial_val", r.initial_val},
                    {"best_epoch", r.best_epoch},
                    {"best_val", r.best_val},
                    {"epochs", epochs}});
  }
  return {{"best_run", log.best_run}, {"runs", runs}};
}

std::string loss_curve_csv(const TrainLog& log) {
  std::string out = "lr,epoch,train_loss,val_mse\n";
  for (const auto& r : log.runs) {
    out += fmt(r.lr) + ",0,," + fmt(r.initial_val) + "\n";
    for (const auto& e : r.epochs) {
      out += fmt(r.lr) + "," + std::to_string(e.epoch) + "," + fmt(e.train_loss) + "," + fmt(e.val_mse) + "\n";
    }
  }
  return out;
}

std::string histogram_csv(const GrangerReport& report) {
  std::string out = "bin_lo,bin_hi,count\n";
  const std::size_t bins = report.histogram.size();
  for (std::size_t b = 0; b < bins; ++b) {
    const double lo = -1.0 + 2.0 * static_cast<double>(b) / static_cast<double>(bins);
    const double hi = -1.0 + 2.0 * static_cast<double>(b + 1) / static_cast<double>(bins);
    out += fmt(lo) + "," + fmt(hi) + "," + std::to_string(report.histogram[b]) + "\n";
  }
  return out;
}

void write_text_file(const std::string& text, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("failed writing " + path.string());
}

}  // namespace cora
