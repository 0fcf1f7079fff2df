#include "cora/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cora/errors.hpp"
#include "cora/json_io.hpp"
#include "cora/optim.hpp"
#include "cora/random.hpp"

namespace cora {

namespace {

constexpr int kCheckpointVersion = 1;

Tensor2 silu_map(const Tensor2& a) {
  Tensor2 out = a;
  for (auto& v : out.data()) v = silu(v);
  return out;
}

struct Batch {
  Tensor2 inputs;   // B x P
  Tensor2 targets;  // B x H
};

/// Last lookback patch and the leading horizon of each normalized window.
Batch make_batch(const std::vector<ForecastWindow>& windows, std::span<const std::size_t> idx,
                 std::size_t patch, std::size_t horizon) {
  Batch b{Tensor2(idx.size(), patch), Tensor2(idx.size(), horizon)};
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto& w = windows[idx[r]];
    const std::size_t off = w.lookback.size() - patch;
    for (std::size_t j = 0; j < patch; ++j) b.inputs(r, j) = w.lookback[off + j];
    for (std::size_t j = 0; j < horizon; ++j) b.targets(r, j) = w.horizon_truth[j];
  }
  return b;
}

std::vector<ForecastWindow> normalized(const WindowSet& set) {
  std::vector<ForecastWindow> out;
  out.reserve(set.size());
  for (const auto& w : set.windows) out.push_back(normalize_window(w));
  return out;
}

std::size_t common_horizon(const std::vector<ForecastWindow>& windows, std::size_t h_max) {
  std::size_t h = h_max;
  for (const auto& w : windows) h = std::min(h, w.horizon());
  return h;
}

}  // namespace

std::vector<std::pair<std::string, const Tensor2*>> BackboneWeights::named() const {
  std::vector<std::pair<std::string, const Tensor2*>> out{{"patch_w", &patch_w}, {"patch_b", &patch_b}};
  for (std::size_t k = 0; k < block_w.size(); ++k) {
    out.emplace_back("block" + std::to_string(k) + "_w", &block_w[k]);
    out.emplace_back("block" + std::to_string(k) + "_b", &block_b[k]);
  }
  out.emplace_back("head_w", &head_w);
  out.emplace_back("head_b", &head_b);
  if (!log_std_w.empty()) {
    out.emplace_back("log_std_w", &log_std_w);
    out.emplace_back("log_std_b", &log_std_b);
  }
  return out;
}

std::vector<Tensor2*> BackboneWeights::mutable_list() {
  std::vector<Tensor2*> out{&patch_w, &patch_b};
  for (std::size_t k = 0; k < block_w.size(); ++k) {
    out.push_back(&block_w[k]);
    out.push_back(&block_b[k]);
  }
  out.push_back(&head_w);
  out.push_back(&head_b);
  if (!log_std_w.empty()) {
    out.push_back(&log_std_w);
    out.push_back(&log_std_b);
  }
  return out;
}

BackboneArtifact::BackboneArtifact(BackboneArch arch, BackboneWeights weights, PretrainMetadata metadata)
    : arch_(arch), weights_(std::move(weights)), metadata_(std::move(metadata)) {
  const std::size_t p = arch_.patch;
  const std::size_t d = arch_.d_model;
  auto expect = [](const Tensor2& t, std::size_t r, std::size_t c, const char* name) {
    if (t.rows() != r || t.cols() != c) {
      throw DimensionError(std::string("backbone: ") + name + " is " + t.shape_string() + ", expected [" +
                           std::to_string(r) + "x" + std::to_string(c) + "]");
    }
  };
  if (p == 0 || d == 0 || arch_.h_max == 0) throw ConfigError("backbone: patch, d_model and h_max must be >= 1");
  expect(weights_.patch_w, p, d, "patch_w");
  expect(weights_.patch_b, 1, d, "patch_b");
  if (weights_.block_w.size() != arch_.blocks || weights_.block_b.size() != arch_.blocks) {
    throw DimensionError("backbone: block count does not match arch");
  }
  for (std::size_t k = 0; k < arch_.blocks; ++k) {
    expect(weights_.block_w[k], d, d, "block_w");
    expect(weights_.block_b[k], 1, d, "block_b");
  }
  expect(weights_.head_w, d, arch_.h_max, "head_w");
  expect(weights_.head_b, 1, arch_.h_max, "head_b");
  if (arch_.gaussian_head) {
    expect(weights_.log_std_w, d, arch_.h_max, "log_std_w");
    expect(weights_.log_std_b, 1, arch_.h_max, "log_std_b");
  }
}

Tensor2 BackboneArtifact::embed_patches(const Tensor2& patches) const {
  if (patches.cols() != arch_.patch) {
    throw InputError("backbone: patches have width " + std::to_string(patches.cols()) + ", patch length is " +
                     std::to_string(arch_.patch));
  }
  Tensor2 h = add_row_broadcast(matmul(patches, weights_.patch_w), weights_.patch_b);
  for (std::size_t k = 0; k < arch_.blocks; ++k) {
    h = add(h, silu_map(add_row_broadcast(matmul(h, weights_.block_w[k]), weights_.block_b[k])));
  }
  return h;
}

Tensor2 BackboneArtifact::extract_ts_embeddings(std::span<const double> series) const {
  const std::size_t p = arch_.patch;
  if (series.size() < p) {
    throw InputError("backbone: series of length " + std::to_string(series.size()) + " is shorter than one patch (" +
                     std::to_string(p) + ")");
  }
  const std::size_t n = series.size() / p;
  const std::size_t offset = series.size() - n * p;
  Tensor2 patches(n, p, std::vector<double>(series.begin() + static_cast<std::ptrdiff_t>(offset), series.end()));
  return embed_patches(patches);
}

Tensor2 BackboneArtifact::head(const Tensor2& embeddings) const {
  return add_row_broadcast(matmul(embeddings, weights_.head_w), weights_.head_b);
}

Tensor2 BackboneArtifact::log_std_head(const Tensor2& embeddings) const {
  if (!arch_.gaussian_head) throw ContractError("backbone: artifact has no gaussian head");
  return add_row_broadcast(matmul(embeddings, weights_.log_std_w), weights_.log_std_b);
}

std::uint64_t BackboneArtifact::content_hash() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& [name, t] : weights_.named()) h = fnv1a(t->data(), h);
  return h;
}

BackboneWeights init_backbone_weights(const BackboneArch& arch, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xBB));
  const std::size_t d = arch.d_model;
  BackboneWeights w;
  w.patch_w = xavier_uniform(arch.patch, d, rng);
  w.patch_b = Tensor2(1, d);
  for (std::size_t k = 0; k < arch.blocks; ++k) {
    w.block_w.push_back(xavier_uniform(d, d, rng));
    w.block_b.emplace_back(1, d);
  }
  w.head_w = xavier_uniform(d, arch.h_max, rng);
  w.head_b = Tensor2(1, arch.h_max);
  if (arch.gaussian_head) {
    w.log_std_w = Tensor2(d, arch.h_max);
    w.log_std_b = Tensor2(1, arch.h_max);
  }
  return w;
}

NodeId record_trunk(Graph& g, const std::vector<NodeId>& weights, std::size_t blocks, NodeId patches) {
  if (weights.size() < 2 + 2 * blocks) throw ContractError("record_trunk: not enough weight nodes");
  NodeId h = g.add_row(g.matmul(patches, weights[0]), weights[1]);
  for (std::size_t k = 0; k < blocks; ++k) {
    NodeId inner = g.add_row(g.matmul(h, weights[2 + 2 * k]), weights[3 + 2 * k]);
    h = g.add(h, g.silu(inner));
  }
  return h;
}

double backbone_mse(const BackboneArtifact& bb, const WindowSet& set) {
  if (set.empty()) return 0.0;
  const auto windows = normalized(set);
  const std::size_t h = common_horizon(windows, bb.arch().h_max);
  std::vector<std::size_t> idx(windows.size());
  std::iota(idx.begin(), idx.end(), 0);
  const Batch b = make_batch(windows, idx, bb.arch().patch, h);
  const Tensor2 pred = slice_cols(bb.head(bb.embed_patches(b.inputs)), 0, h);
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += (pred[i] - b.targets[i]) * (pred[i] - b.targets[i]);
  return total / static_cast<double>(pred.size());
}

BackboneArtifact pretrain_backbone(const WindowSet& train, const WindowSet& val, const BackboneArch& arch,
                                   const PretrainConfig& config, std::uint64_t seed) {
  if (train.empty()) throw InputError("pretrain: no training windows");
  if (config.batch_size == 0) throw ConfigError("pretrain: batch_size must be >= 1");
  for (const auto& w : train.windows) {
    if (w.lookback.size() % arch.patch != 0) {
      throw InputError("pretrain: patch length " + std::to_string(arch.patch) + " does not divide lookback " +
                       std::to_string(w.lookback.size()));
    }
  }
  const auto windows = normalized(train);
  const std::size_t horizon = common_horizon(windows, arch.h_max);

  PretrainMetadata meta;
  meta.seed = seed;
  std::uint64_t data_hash = kFnvOffset;
  for (const auto& w : train.windows) {
    data_hash = fnv1a(w.lookback, data_hash);
    data_hash = fnv1a(w.horizon_truth, data_hash);
  }
  meta.data_hash = hex64(data_hash);

  BackboneWeights weights = init_backbone_weights(arch, seed);
  auto param_ptrs = weights.mutable_list();
  std::vector<Tensor2> params;
  for (auto* p : param_ptrs) params.push_back(*p);
  Adam adam({.learning_rate = config.learning_rate}, params);
  Rng shuffle_rng(derive_seed(seed, 0x5EED));

  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const Batch b = make_batch(windows, std::span<const std::size_t>(order).subspan(begin, end - begin),
                                 arch.patch, horizon);
      ++step;
      try {
        Graph g;
        std::vector<NodeId> nodes;
        for (const auto& p : params) nodes.push_back(g.parameter(p));
        const NodeId trunk = record_trunk(g, nodes, arch.blocks, g.constant(b.inputs));
        const std::size_t head_at = 2 + 2 * arch.blocks;
        const NodeId mean =
            g.slice_cols(g.add_row(g.matmul(trunk, nodes[head_at]), nodes[head_at + 1]), 0, horizon);
        const NodeId target = g.constant(b.targets);
        NodeId loss;
        if (arch.gaussian_head) {
          const NodeId log_std =
              g.slice_cols(g.add_row(g.matmul(trunk, nodes[head_at + 2]), nodes[head_at + 3]), 0, horizon);
          const NodeId diff = g.sub(mean, target);
          const NodeId scaled = g.hadamard(g.hadamard(diff, diff), g.exp(g.scale(log_std, -2.0)));
          loss = g.mean(g.add(log_std, g.scale(scaled, 0.5)));
        } else {
          loss = g.mse(mean, target);
        }
        g.backward(loss);
        std::vector<Tensor2> grads;
        for (NodeId n : nodes) grads.push_back(g.grad(n));
        adam.step(params, grads);
        epoch_loss += g.value(loss)[0];
        ++batches;
      } catch (const NumericError& e) {
        throw TrainingError("pretrain: diverged at step " + std::to_string(step) + ": " + e.what());
      }
    }
    meta.train_loss.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(batches, 1)));
    for (std::size_t k = 0; k < params.size(); ++k) *param_ptrs[k] = params[k];
    if (!val.empty()) {
      meta.val_mse.push_back(backbone_mse(BackboneArtifact(arch, weights, {}), val));
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) *param_ptrs[k] = params[k];
  meta.epochs = config.epochs;
  BackboneArtifact result(arch, std::move(weights), {});
  meta.final_val_mse = val.empty() ? 0.0 : backbone_mse(result, val);
  return BackboneArtifact(arch, result.weights(), std::move(meta));
}

Tensor2 head_forecast(const BackboneArtifact& bb, const Tensor2& target_embedding, std::size_t horizon) {
  if (horizon == 0 || horizon > bb.arch().h_max) {
    throw ContractError("head_forecast: horizon " + std::to_string(horizon) + " outside [1, " +
                        std::to_string(bb.arch().h_max) + "]");
  }
  return slice_cols(bb.head(target_embedding), 0, horizon);
}

void save_backbone(const BackboneArtifact& bb, const std::filesystem::path& path) {
  const auto& a = bb.arch();
  const auto& m = bb.metadata();
  Json weights = Json::object();
  for (const auto& [name, t] : bb.weights().named()) weights[name] = tensor_to_json(*t);
  Json doc = {
      {"format", "cora-backbone"},
      {"version", kCheckpointVersion},
      {"arch",
       {{"patch", a.patch}, {"d_model", a.d_model}, {"blocks", a.blocks}, {"h_max", a.h_max},
        {"gaussian_head", a.gaussian_head}}},
      {"metadata",
       {{"seed", m.seed}, {"epochs", m.epochs}, {"train_loss", m.train_loss}, {"val_mse", m.val_mse},
        {"final_val_mse", m.final_val_mse}, {"data_hash", m.data_hash}}},
      {"weights", weights},
      {"content_hash", hex64(bb.content_hash())},
  };
  write_json_file(doc, path);
}

BackboneArtifact load_backbone(const std::filesystem::path& path) {
  const Json doc = read_json_file(path);
  try {
    if (doc.at("format") != "cora-backbone") throw ParseError(path.string() + ": not a backbone checkpoint");
    if (doc.at("version").get<int>() != kCheckpointVersion) {
      throw ParseError(path.string() + ": unsupported backbone checkpoint version");
    }
    BackboneArch a;
    const auto& ja = doc.at("arch");
    a.patch = ja.at("patch").get<std::size_t>();
    a.d_model = ja.at("d_model").get<std::size_t>();
    a.blocks = ja.at("blocks").get<std::size_t>();
    a.h_max = ja.at("h_max").get<std::size_t>();
    a.gaussian_head = ja.at("gaussian_head").get<bool>();
    PretrainMetadata m;
    const auto& jm = doc.at("metadata");
    m.seed = jm.at("seed").get<std::uint64_t>();
    m.epochs = jm.at("epochs").get<std::size_t>();
    m.train_loss = jm.at("train_loss").get<std::vector<double>>();
    m.val_mse = jm.at("val_mse").get<std::vector<double>>();
    m.final_val_mse = jm.at("final_val_mse").get<double>();
    m.data_hash = jm.at("data_hash").get<std::string>();
    const auto& jw = doc.at("weights");
    BackboneWeights w;
    w.patch_w = tensor_from_json(jw.at("patch_w"));
    w.patch_b = tensor_from_json(jw.at("patch_b"));
    for (std::size_t k = 0; k < a.blocks; ++k) {
      w.block_w.push_back(tensor_from_json(jw.at("block" + std::to_string(k) + "_w")));
      w.block_b.push_back(tensor_from_json(jw.at("block" + std::to_string(k) + "_b")));
    }
    w.head_w = tensor_from_json(jw.at("head_w"));
    w.head_b = tensor_from_json(jw.at("head_b"));
    if (a.gaussian_head) {
      w.log_std_w = tensor_from_json(jw.at("log_std_w"));
      w.log_std_b = tensor_from_json(jw.at("log_std_b"));
    }
    BackboneArtifact bb(a, std::move(w), std::move(m));
    if (hex64(bb.content_hash()) != doc.at("content_hash").get<std::string>()) {
      throw ParseError(path.string() + ": content hash mismatch");
    }
    return bb;
  } catch (const Json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace cora
