#include <cmath>
#include <set>

#include "cora/errors.hpp"
#include "cora/harness.hpp"

namespace cora {

namespace {

void check_keys(const Json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items()) {
    if (!ok.count(key)) throw ConfigError("config: unknown key '" + where + "." + key + "'");
  }
}

template <typename T>
void read(const Json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

GeneratorConfig generator_from_json(const Json& j) {
  check_keys(j, "data.generator",
             {"length", "burn_in", "ar_coefficients", "ar_order", "ar_scale", "noise_std", "drivers",
              "reverse_decoys", "white_decoys", "white_future_known", "text_channel", "text_width", "text_name"});
  GeneratorConfig g;
  read(j, "length", g.length);
  read(j, "burn_in", g.burn_in);
  read(j, "ar_coefficients", g.ar_coefficients);
  read(j, "ar_order", g.ar_order);
  read(j, "ar_scale", g.ar_scale);
  read(j, "noise_std", g.noise_std);
  if (j.contains("drivers")) {
    g.drivers.clear();
    for (const auto& d : j.at("drivers")) {
      check_keys(d, "data.generator.drivers[]", {"name", "coefficients", "persistence", "future_known"});
      DriverSpec s;
      read(d, "name", s.name);
      read(d, "coefficients", s.coefficients);
      read(d, "persistence", s.persistence);
      read(d, "future_known", s.future_known);
      g.drivers.push_back(s);
    }
  }
  if (j.contains("reverse_decoys")) {
    g.reverse_decoys.clear();
    for (const auto& d : j.at("reverse_decoys")) {
      check_keys(d, "data.generator.reverse_decoys[]", {"name", "coupling", "noise_std"});
      ReverseDecoySpec s;
      read(d, "name", s.name);
      read(d, "coupling", s.coupling);
      read(d, "noise_std", s.noise_std);
      g.reverse_decoys.push_back(s);
    }
  }
  read(j, "white_decoys", g.white_decoys);
  read(j, "white_future_known", g.white_future_known);
  read(j, "text_channel", g.text_channel);
  read(j, "text_width", g.text_width);
  read(j, "text_name", g.text_name);
  return g;
}

Json generator_to_json(const GeneratorConfig& g) {
  Json drivers = Json::array();
  for (const auto& d : g.drivers) {
    drivers.push_back({{"name", d.name},
                       {"coefficients", d.coefficients},
                       {"persistence", d.persistence},
                       {"future_known", d.future_known}});
  }
  Json decoys = Json::array();
  for (const auto& d : g.reverse_decoys) {
    decoys.push_back({{"name", d.name}, {"coupling", d.coupling}, {"noise_std", d.noise_std}});
  }
  return {{"length", g.length},           {"burn_in", g.burn_in},
          {"ar_coefficients", g.ar_coefficients}, {"ar_order", g.ar_order},
          {"ar_scale", g.ar_scale},       {"noise_std", g.noise_std},
          {"drivers", drivers},           {"reverse_decoys", decoys},
          {"white_decoys", g.white_decoys}, {"white_future_known", g.white_future_known},
          {"text_channel", g.text_channel}, {"text_width", g.text_width},
          {"text_name", g.text_name}};
}

}  // namespace

void ExperimentConfig::validate() const {
  if (data.csv.empty()) {
    try {
      data.generator.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("data.generator: ") + e.what());
    }
  }
  const auto& s = windows.split;
  if (s.train <= 0.0 || s.val <= 0.0 || s.test <= 0.0 || std::abs(s.train + s.val + s.test - 1.0) > 1e-9) {
    throw ConfigError("windows.split: fractions must be positive and sum to 1");
  }
  if (windows.lookback == 0 || windows.horizon == 0 || windows.stride == 0) {
    throw ConfigError("windows: lookback, horizon and stride must be >= 1");
  }
  if (arch.patch == 0 || windows.lookback % arch.patch != 0) {
    throw ConfigError("windows.lookback (" + std::to_string(windows.lookback) + ") must be a multiple of backbone.patch (" +
                      std::to_string(arch.patch) + ")");
  }
  if (windows.horizon > arch.h_max) {
    throw ConfigError("windows.horizon (" + std::to_string(windows.horizon) + ") exceeds backbone.h_max (" +
                      std::to_string(arch.h_max) + ")");
  }
  if (arch.d_model == 0 || arch.blocks == 0) throw ConfigError("backbone: d_model and blocks must be >= 1");
  if (pretrain.batch_size == 0) throw ConfigError("backbone.pretrain.batch_size must be >= 1");
  if (optim.lr_grid.empty()) throw ConfigError("optim.lr_grid must not be empty");
  for (double lr : optim.lr_grid) {
    if (!std::isfinite(lr) || lr < 0.0) throw ConfigError("optim.lr_grid entries must be finite and >= 0");
  }
  if (optim.patience == 0) throw ConfigError("optim.patience must be >= 1");
  if (optim.max_epochs == 0) throw ConfigError("optim.max_epochs must be >= 1");
  if (optim.batch_size == 0) throw ConfigError("optim.batch_size must be >= 1");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (!(few_shot > 0.0 && few_shot <= 1.0)) throw ConfigError("few_shot must lie in (0, 1]");
  if (granger_l_max == 0) throw ConfigError("granger.l_max must be >= 1");
  if (foreign_dim == 0) throw ConfigError("adapter.foreign_dim must be >= 1");
  if (crps_samples > 0 && !arch.gaussian_head) {
    throw ConfigError("crps_samples needs backbone.gaussian_head = true");
  }
}

AdapterDims ExperimentConfig::adapter_dims() const {
  AdapterDims d = adapter;
  d.target_dim = arch.d_model;
  d.horizon = windows.horizon;
  return d.resolved();
}

ExperimentConfig config_from_json(const Json& doc) {
  try {
    check_keys(doc, "<root>",
               {"version", "data", "windows", "backbone", "adapter", "optim", "seeds", "few_shot", "granger",
                "crps_samples"});
    if (doc.contains("version") && doc.at("version").get<int>() != kConfigVersion) {
      throw ConfigError("config: unsupported version " + doc.at("version").dump());
    }
    ExperimentConfig c;
    if (doc.contains("data")) {
      const auto& j = doc.at("data");
      check_keys(j, "data", {"csv", "schema", "generator"});
      read(j, "csv", c.data.csv);
      read(j, "schema", c.data.schema);
      if (j.contains("generator")) c.data.generator = generator_from_json(j.at("generator"));
    }
    if (doc.contains("windows")) {
      const auto& j = doc.at("windows");
      check_keys(j, "windows", {"lookback", "horizon", "stride", "split"});
      read(j, "lookback", c.windows.lookback);
      read(j, "horizon", c.windows.horizon);
      read(j, "stride", c.windows.stride);
      if (j.contains("split")) {
        const auto& s = j.at("split");
        check_keys(s, "windows.split", {"train", "val", "test"});
        read(s, "train", c.windows.split.train);
        read(s, "val", c.windows.split.val);
        read(s, "test", c.windows.split.test);
      }
    }
    if (doc.contains("backbone")) {
      const auto& j = doc.at("backbone");
      check_keys(j, "backbone", {"patch", "d_model", "blocks", "h_max", "gaussian_head", "pretrain"});
      read(j, "patch", c.arch.patch);
      read(j, "d_model", c.arch.d_model);
      read(j, "blocks", c.arch.blocks);
      read(j, "h_max", c.arch.h_max);
      read(j, "gaussian_head", c.arch.gaussian_head);
      if (j.contains("pretrain")) {
        const auto& p = j.at("pretrain");
        check_keys(p, "backbone.pretrain", {"epochs", "batch_size", "learning_rate"});
        read(p, "epochs", c.pretrain.epochs);
        read(p, "batch_size", c.pretrain.batch_size);
        read(p, "learning_rate", c.pretrain.learning_rate);
      }
    }
    if (doc.contains("adapter")) {
      const auto& j = doc.at("adapter");
      check_keys(j, "adapter", {"hidden", "mlp_hidden", "variant", "init", "strict_zero_init", "foreign_dim"});
      read(j, "hidden", c.adapter.hidden);
      read(j, "mlp_hidden", c.adapter.mlp_hidden);
      if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
      if (j.contains("init")) c.init = parse_init_mode(j.at("init").get<std::string>());
      read(j, "strict_zero_init", c.strict_zero_init);
      read(j, "foreign_dim", c.foreign_dim);
    }
    if (doc.contains("optim")) {
      const auto& j = doc.at("optim");
      check_keys(j, "optim", {"lr_grid", "batch_size", "max_epochs", "patience"});
      read(j, "lr_grid", c.optim.lr_grid);
      read(j, "batch_size", c.optim.batch_size);
      read(j, "max_epochs", c.optim.max_epochs);
      read(j, "patience", c.optim.patience);
    }
    read(doc, "seeds", c.seeds);
    read(doc, "few_shot", c.few_shot);
    if (doc.contains("granger")) {
      const auto& j = doc.at("granger");
      check_keys(j, "granger", {"l_max", "windows"});
      read(j, "l_max", c.granger_l_max);
      read(j, "windows", c.granger_windows);
    }
    read(doc, "crps_samples", c.crps_samples);
    c.validate();
    return c;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

Json config_to_json(const ExperimentConfig& c) {
  return {{"version", kConfigVersion},
          {"data", {{"csv", c.data.csv}, {"schema", c.data.schema}, {"generator", generator_to_json(c.data.generator)}}},
          {"windows",
           {{"lookback", c.windows.lookback},
            {"horizon", c.windows.horizon},
            {"stride", c.windows.stride},
            {"split", {{"train", c.windows.split.train}, {"val", c.windows.split.val}, {"test", c.windows.split.test}}}}},
          {"backbone",
           {{"patch", c.arch.patch},
            {"d_model", c.arch.d_model},
            {"blocks", c.arch.blocks},
            {"h_max", c.arch.h_max},
            {"gaussian_head", c.arch.gaussian_head},
            {"pretrain",
             {{"epochs", c.pretrain.epochs},
              {"batch_size", c.pretrain.batch_size},
              {"learning_rate", c.pretrain.learning_rate}}}}},
          {"adapter",
           {{"hidden", c.adapter.hidden},
            {"mlp_hidden", c.adapter.mlp_hidden},
            {"variant", std::string(to_string(c.variant))},
            {"init", std::string(to_string(c.init))},
            {"strict_zero_init", c.strict_zero_init},
            {"foreign_dim", c.foreign_dim}}},
          {"optim",
           {{"lr_grid", c.optim.lr_grid},
            {"batch_size", c.optim.batch_size},
            {"max_epochs", c.optim.max_epochs},
            {"patience", c.optim.patience}}},
          {"seeds", c.seeds},
          {"few_shot", c.few_shot},
          {"granger", {{"l_max", c.granger_l_max}, {"windows", c.granger_windows}}},
          {"crps_samples", c.crps_samples}};
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  Json doc;
  try {
    doc = read_json_file(path);
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return config_from_json(doc);
}

}  // namespace cora
