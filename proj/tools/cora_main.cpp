#include <CLI11.hpp>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "cora/errors.hpp"
#include "cora/harness.hpp"

namespace fs = std::filesystem;
using namespace cora;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  std::string variant;
  std::optional<double> lr;
  std::optional<double> few_shot;
  std::string variants = "all";
  std::optional<std::size_t> seed_count;
};

// Missing inputs from an earlier stage are reported like config errors (exit 1).
struct MissingArtifact : ConfigError {
  using ConfigError::ConfigError;
};

ExperimentConfig resolve_config(const Options& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.seed) cfg.seeds = {*o.seed};
  if (!o.variant.empty()) cfg.variant = parse_variant(o.variant);
  if (o.lr) cfg.optim.lr_grid = {*o.lr};
  if (o.few_shot) cfg.few_shot = *o.few_shot;
  cfg.validate();
  return cfg;
}

fs::path require(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw MissingArtifact("missing " + what + " checkpoint: " + p.string());
  return p;
}

void write_metadata(const fs::path& dir, const std::string& command) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[64];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  Json meta = fs::exists(dir / "metadata.json") ? read_json_file(dir / "metadata.json") : Json::object();
  meta[command] = {{"finished_at", buf}};
  write_json_file(meta, dir / "metadata.json");
}

struct Stage {
  ExperimentConfig cfg;
  std::uint64_t seed;
  GeneratedData data;
  WindowSplits splits;
};

Stage load_stage(const Options& o) {
  Stage s{resolve_config(o), 0, {}, {}};
  s.seed = s.cfg.seeds.front();
  s.data = load_data(s.cfg, s.seed);
  s.splits = make_windows(s.data.frame, s.cfg.windows);
  fs::create_directories(o.out);
  write_json_file(config_to_json(s.cfg), fs::path(o.out) / "config.json");
  return s;
}

int cmd_generate(const Options& o) {
  const ExperimentConfig cfg = resolve_config(o);
  const std::uint64_t seed = cfg.seeds.front();
  const fs::path dir = o.out;
  fs::create_directories(dir);
  const GeneratedData d = generate_var_dataset(cfg.data.generator, seed);
  write_csv(d.frame, dir / "data.csv");
  write_schema(schema_of(d.frame), dir / "data.schema.json");
  write_ground_truth(d.truth, dir / "ground_truth.json");
  write_json_file(config_to_json(cfg), dir / "config.json");
  write_metadata(dir, "generate");
  std::cout << "wrote " << (dir / "data.csv").string() << " (" << d.frame.length() << " steps, "
            << d.frame.channels().size() << " channels)\n";
  return 0;
}

int cmd_pretrain(const Options& o) {
  const Stage s = load_stage(o);
  const BackboneArtifact bb = pretrain_for(s.cfg, s.splits, s.seed);
  save_backbone(bb, fs::path(o.out) / "backbone.json");
  write_metadata(o.out, "pretrain");
  std::cout << "backbone " << hex64(bb.content_hash()) << " val_mse " << bb.metadata().final_val_mse << "\n";
  return 0;
}

int cmd_adapt(const Options& o) {
  const fs::path dir = o.out;
  const fs::path bb_path = require(dir / "backbone.json", "backbone");
  const Stage s = load_stage(o);
  const BackboneArtifact bb = load_backbone(bb_path);
  const RunResult r = run_pipeline(s.cfg, s.data.frame, s.splits, bb, s.cfg.variant, s.seed);
  save_adapter(r.params, dir / "adapter.json");
  write_json_file(train_log_to_json(r.log), dir / "train_log.json");
  write_text_file(loss_curve_csv(r.log), dir / "loss_curve.csv");
  write_json_file({{"variant", std::string(to_string(r.variant))},
                   {"seed", r.seed},
                   {"test", metrics_to_json(r.test)},
                   {"backbone_test", metrics_to_json(r.backbone_test)},
                   {"gate", r.gate},
                   {"covariates", r.covariate_names}},
                  dir / "metrics.json");
  write_metadata(dir, "adapt");
  std::cout << to_string(r.variant) << " test mse " << r.test.mse << " (backbone " << r.backbone_test.mse << ")\n";
  return 0;
}

int cmd_eval(const Options& o) {
  const fs::path dir = o.out;
  const fs::path bb_path = require(dir / "backbone.json", "backbone");
  const fs::path ad_path = require(dir / "adapter.json", "adapter");
  const Stage s = load_stage(o);
  const BackboneArtifact bb = load_backbone(bb_path);
  const AdapterParams params = load_adapter(ad_path);
  const EmbeddingExtractor extractor = make_extractor(s.cfg, s.data.frame, bb, s.seed);
  const MetricSet m =
      evaluate([&](const ForecastWindow& w) { return cora_forward(params, extractor, w); }, s.splits.test);
  write_json_file({{"variant", std::string(to_string(params.variant))}, {"test", metrics_to_json(m)}},
                  dir / "eval.json");
  write_metadata(dir, "eval");
  std::cout << "test mse " << m.mse << " mae " << m.mae << "\n";
  return 0;
}

int cmd_granger(const Options& o) {
  const fs::path dir = o.out;
  const fs::path ad_path = require(dir / "adapter.json", "adapter");
  const Stage s = load_stage(o);
  const AdapterParams params = load_adapter(ad_path);
  RunResult run;
  run.gate = gate_weights(params);
  for (const auto& e : params.manifest.entries) run.covariate_names.push_back(e.name);
  const GrangerReport rep = gate_granger_report(s.cfg, s.data.frame, s.splits, run);
  write_json_file(report_to_json(rep), dir / "granger_report.json");
  write_text_file(histogram_csv(rep), dir / "gc_histogram.csv");
  write_metadata(dir, "granger");
  std::cout << "median r " << rep.median_r << " over " << rep.windows.size() << " windows (" << rep.skipped
            << " skipped)\n";
  return 0;
}

int cmd_ablate(const Options& o) {
  ExperimentConfig cfg = resolve_config(o);
  std::vector<Variant> variants;
  if (o.variants == "all") {
    variants.assign(std::begin(kAllVariants), std::end(kAllVariants));
  } else {
    std::stringstream ss(o.variants);
    for (std::string item; std::getline(ss, item, ',');) variants.push_back(parse_variant(item));
  }
  std::vector<std::uint64_t> seeds = cfg.seeds;
  if (o.seed_count) {
    seeds.clear();
    for (std::size_t i = 1; i <= *o.seed_count; ++i) seeds.push_back(i);
  }
  const fs::path dir = o.out;
  fs::create_directories(dir);
  write_json_file(config_to_json(cfg), dir / "config.json");
  const AblationTable table = run_ablation(cfg, variants, seeds);
  write_json_file(ablation_to_json(table), dir / "ablation.json");
  const std::string csv = ablation_to_csv(table);
  write_text_file(csv, dir / "ablation.csv");
  write_metadata(dir, "ablate");
  std::cout << csv;
  return 0;
}

int cmd_report(const Options& o) {
  const fs::path dir = o.out;
  if (!fs::is_directory(dir)) throw MissingArtifact("missing run directory: " + dir.string());
  Json report = {{"format", "cora-run-report"}, {"version", 1}};
  std::string md = "# Run report\n\n";
  for (const char* name : {"metrics.json", "eval.json", "granger_report.json", "ablation.json"}) {
    const fs::path p = dir / name;
    if (!fs::exists(p)) continue;
    report[fs::path(name).stem().string()] = read_json_file(p);
  }
  if (report.contains("metrics")) {
    const auto& m = report["metrics"];
    md += "## Adaptation\n\nvariant: " + m["variant"].get<std::string>() + "\n\n| model | MSE | MAE |\n|---|---|---|\n";
    md += "| backbone | " + m["backbone_test"]["mse"].dump() + " | " + m["backbone_test"]["mae"].dump() + " |\n";
    md += "| adapted | " + m["test"]["mse"].dump() + " | " + m["test"]["mae"].dump() + " |\n\n";
  }
  if (report.contains("granger_report")) {
    const auto& g = report["granger_report"];
    md += "## Gate vs Granger causality\n\nmedian r: " + g["median_r"].dump() + ", windows: " +
          std::to_string(g["windows"].size()) + ", skipped: " + g["skipped"].dump() + "\n\n";
  }
  if (report.contains("ablation")) {
    md += "## Ablation\n\n| variant | median MSE | IQR MSE | median MAE | IQR MAE | failed |\n|---|---|---|---|---|---|\n";
    for (const auto& r : report["ablation"]["rows"]) {
      md += "| " + r["variant"].get<std::string>() + " | " + r["median_mse"].dump() + " | " + r["iqr_mse"].dump() +
            " | " + r["median_mae"].dump() + " | " + r["iqr_mae"].dump() + " | " + r["failed"].dump() + " |\n";
    }
  }
  write_json_file(report, dir / "report.json");
  write_text_file(md, dir / "report.md");
  std::cout << md;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CoRA covariate-aware adapter toolkit"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config (JSON)");
    sub->add_option("--seed", o.seed, "Seed (overrides the config seed list)");
    sub->add_option("--out", o.out, "Run directory");
    sub->add_option("--variant", o.variant, "full|wo_covariate|wo_adaln|wo_selection|wo_zero_init");
    sub->add_option("--lr", o.lr, "Single learning rate (overrides the grid)");
    sub->add_option("--few-shot", o.few_shot, "Fraction of training windows to keep");
  };

  struct Entry {
    const char* name;
    const char* help;
    int (*run)(const Options&);
  };
  const Entry entries[] = {{"generate", "Generate a synthetic dataset", cmd_generate},
                           {"pretrain", "Pretrain the frozen backbone", cmd_pretrain},
                           {"adapt", "Train the adapter on a pretrained backbone", cmd_adapt},
                           {"eval", "Evaluate a trained adapter on the test split", cmd_eval},
                           {"granger", "Compare gate weights with Granger-Geweke causality", cmd_granger},
                           {"ablate", "Run the variant x seed ablation sweep", cmd_ablate},
                           {"report", "Assemble a report from a run directory", cmd_report}};
  std::vector<std::pair<CLI::App*, const Entry*>> subs;
  for (const auto& e : entries) {
    CLI::App* sub = app.add_subcommand(e.name, e.help);
    add_common(sub);
    if (std::string(e.name) == "ablate") {
      sub->add_option("--variants", o.variants, "Comma-separated variants or 'all'");
      sub->add_option("--seeds", o.seed_count, "Number of seeds (1..N)");
    }
    subs.emplace_back(sub, &e);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    for (const auto& [sub, entry] : subs)
      if (sub->parsed()) return entry->run(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
