#include "cora/adapter.hpp"

#include <algorithm>

#include "cora/errors.hpp"
#include "cora/json_io.hpp"
#include "cora/random.hpp"

namespace cora {

namespace {

constexpr int kCheckpointVersion = 1;
constexpr Modality kModalities[] = {Modality::kTs, Modality::kTxt, Modality::kImg};

bool uses_covariates(Variant v) { return v != Variant::kWoCovariate; }

const Tensor2& require_tensor(const Tensor2& t, const char* name) {
  if (t.empty()) throw ContractError(std::string("adapter: tensor '") + name + "' is not populated");
  return t;
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kFull:
      return "full";
    case Variant::kWoCovariate:
      return "wo_covariate";
    case Variant::kWoAdaln:
      return "wo_adaln";
    case Variant::kWoSelection:
      return "wo_selection";
    case Variant::kWoZeroInit:
      return "wo_zero_init";
  }
  return "full";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants)
    if (to_string(v) == name) return v;
  throw ConfigError("unknown variant '" + std::string(name) + "'");
}

std::string_view to_string(InitMode m) { return m == InitMode::kZero ? "zero" : "xavier"; }

InitMode parse_init_mode(std::string_view name) {
  if (name == "zero" || name == "zero_init") return InitMode::kZero;
  if (name == "xavier" || name == "xavier_init") return InitMode::kXavier;
  throw ConfigError("unknown init mode '" + std::string(name) + "'");
}

AdapterDims AdapterDims::resolved() const {
  AdapterDims d = *this;
  if (d.hidden == 0) d.hidden = d.target_dim;
  if (d.mlp_hidden == 0) d.mlp_hidden = d.hidden;
  return d;
}

std::vector<std::pair<std::string, Tensor2*>> AdapterParams::tensors() {
  std::vector<std::pair<std::string, Tensor2*>> out;
  for (Modality m : kModalities) {
    auto it = align.find(m);
    if (it == align.end()) continue;
    out.emplace_back("align_" + std::string(to_string(m)) + "_w", &it->second.weight);
    out.emplace_back("align_" + std::string(to_string(m)) + "_b", &it->second.bias);
  }
  auto push = [&](const char* name, Tensor2& t) {
    if (!t.empty()) out.emplace_back(name, &t);
  };
  push("gate", gate);
  push("mlp_w1", mlp_w1);
  push("mlp_b1", mlp_b1);
  push("mlp_w2", mlp_w2);
  push("mlp_b2", mlp_b2);
  push("embed_bias", embed_bias);
  push("proj", proj);
  return out;
}

std::vector<std::pair<std::string, const Tensor2*>> AdapterParams::tensors() const {
  auto mutable_list = const_cast<AdapterParams*>(this)->tensors();
  std::vector<std::pair<std::string, const Tensor2*>> out;
  out.reserve(mutable_list.size());
  for (auto& [name, t] : mutable_list) out.emplace_back(name, t);
  return out;
}

bool AdapterParams::trainable(std::string_view name) const {
  return !(variant == Variant::kWoSelection && name == "gate");
}

AdapterParams init_adapter(const AdapterDims& dims_in, const CovariateManifest& manifest, Variant variant,
                           InitMode mode, std::uint64_t seed, InitOptions options) {
  const AdapterDims dims = dims_in.resolved();
  if (dims.target_dim == 0 || dims.horizon == 0) throw ConfigError("adapter: target_dim and horizon must be >= 1");
  if (variant == Variant::kWoZeroInit) mode = InitMode::kXavier;

  AdapterParams p;
  p.dims = dims;
  p.variant = variant;
  p.init = mode;
  Rng rng(derive_seed(seed, 0xADA));

  if (!uses_covariates(variant)) {
    p.embed_bias = Tensor2(1, dims.target_dim);
    return p;
  }
  if (manifest.size() == 0) {
    throw ManifestError("adapter: variant '" + std::string(to_string(variant)) + "' needs at least one covariate");
  }
  p.manifest = manifest;
  for (Modality m : kModalities) {
    if (!manifest.has(m)) continue;
    const std::size_t dm = manifest.dim(m);
    for (const auto& e : manifest.entries) {
      if (e.modality == m && e.embed_dim != dm) {
        throw ManifestError("adapter: covariate '" + e.name + "' has dim " + std::to_string(e.embed_dim) +
                            ", other " + std::string(to_string(m)) + " covariates have " + std::to_string(dm));
      }
    }
    AlignmentPair pair{options.strict_zero_init ? Tensor2(dm, dims.hidden) : xavier_uniform(dm, dims.hidden, rng),
                       Tensor2(1, dims.hidden)};
    p.align.emplace(m, std::move(pair));
  }
  p.gate = Tensor2(1, manifest.size());

  if (variant == Variant::kWoAdaln) {
    p.proj = Tensor2(dims.hidden, dims.target_dim);
    return p;
  }
  const std::size_t out_dim = 2 * dims.target_dim + dims.horizon;
  p.mlp_w1 = options.strict_zero_init ? Tensor2(dims.hidden, dims.mlp_hidden)
                                      : xavier_uniform(dims.hidden, dims.mlp_hidden, rng);
  p.mlp_b1 = Tensor2(1, dims.mlp_hidden);
  p.mlp_w2 = mode == InitMode::kXavier ? xavier_uniform(dims.mlp_hidden, out_dim, rng)
                                       : Tensor2(dims.mlp_hidden, out_dim);
  p.mlp_b2 = Tensor2(1, out_dim);
  return p;
}

Tensor2 align_embeddings(const AdapterParams& params, const EmbeddingBundle& bundle) {
  if (bundle.size() != params.manifest.size()) {
    throw DimensionError("align_embeddings: bundle has " + std::to_string(bundle.size()) +
                         " covariates, manifest has " + std::to_string(params.manifest.size()));
  }
  std::vector<Tensor2> rows;
  for (std::size_t i = 0; i < bundle.size(); ++i) {
    const auto& c = bundle.covariates[i];
    auto it = params.align.find(c.modality);
    if (it == params.align.end()) {
      throw DimensionError("align_embeddings: no alignment map for covariate '" + c.name + "' (" +
                           std::string(to_string(c.modality)) + ")");
    }
    if (c.embedding.rows() != 1 || c.embedding.cols() != it->second.weight.rows()) {
      throw DimensionError("align_embeddings: covariate '" + c.name + "' embedding is " +
                           c.embedding.shape_string() + ", alignment expects [1x" +
                           std::to_string(it->second.weight.rows()) + "]");
    }
    rows.push_back(add(matmul(c.embedding, it->second.weight), it->second.bias));
  }
  return vstack(rows);
}

std::vector<double> gate_weights(const AdapterParams& params) {
  const std::size_t n = params.manifest.size();
  if (n == 0) return {};
  if (params.variant == Variant::kWoSelection) return std::vector<double>(n, 1.0 / static_cast<double>(n));
  return softmax(require_tensor(params.gate, "gate").data());
}

std::size_t gate_argmax(const AdapterParams& params) {
  const auto w = gate_weights(params);
  std::size_t best = 0;
  for (std::size_t i = 1; i < w.size(); ++i)
    if (w[i] > w[best]) best = i;
  return best;
}

ConditionVector gce_mix(const AdapterParams& params, const Tensor2& aligned) {
  const auto weights = gate_weights(params);
  if (aligned.rows() != weights.size()) {
    throw ContractError("gce_mix: aligned matrix has " + std::to_string(aligned.rows()) + " rows, gate has " +
                        std::to_string(weights.size()) + " entries");
  }
  return {matmul(Tensor2::row_vector(weights), aligned), weights};
}

Tensor2 adaln_modulate(const AdapterParams& params, const ConditionVector& condition, const Tensor2& target_embedding,
                       const BackboneArtifact& bb) {
  const auto& d = params.dims;
  const Tensor2 hidden_pre = add_row_broadcast(matmul(condition.h, require_tensor(params.mlp_w1, "mlp_w1")),
                                               require_tensor(params.mlp_b1, "mlp_b1"));
  Tensor2 hidden = hidden_pre;
  for (auto& v : hidden.data()) v = silu(v);
  const Tensor2 out = add_row_broadcast(matmul(hidden, require_tensor(params.mlp_w2, "mlp_w2")),
                                        require_tensor(params.mlp_b2, "mlp_b2"));
  const Tensor2 gamma = slice_cols(out, 0, d.target_dim);
  Tensor2 beta = slice_cols(out, d.target_dim, 2 * d.target_dim);
  Tensor2 alpha = slice_cols(out, 2 * d.target_dim, 2 * d.target_dim + d.horizon);
  for (auto& v : beta.data()) v += 1.0;
  for (auto& v : alpha.data()) v += 1.0;
  if (!target_embedding.same_shape(gamma)) {
    throw DimensionError("adaln_modulate: target embedding " + target_embedding.shape_string() + " vs gamma " +
                         gamma.shape_string());
  }
  const Tensor2 head_in = add(gamma, hadamard(beta, target_embedding));
  return hadamard(alpha, head_forecast(bb, head_in, d.horizon));
}

AdapterBatch make_adapter_batch(std::span<const EmbeddingBundle* const> bundles,
                                std::span<const Tensor2* const> truths) {
  AdapterBatch batch;
  if (bundles.empty()) return batch;
  std::vector<Tensor2> targets;
  targets.reserve(bundles.size());
  for (const auto* b : bundles) targets.push_back(b->target);
  batch.target = vstack(targets);
  const std::size_t n = bundles.front()->size();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Tensor2> rows;
    rows.reserve(bundles.size());
    for (const auto* b : bundles) {
      if (b->size() != n) throw DimensionError("make_adapter_batch: bundles disagree on covariate count");
      rows.push_back(b->covariates[i].embedding);
    }
    batch.covariates.push_back(vstack(rows));
  }
  if (!truths.empty()) {
    std::vector<Tensor2> rows;
    for (const auto* t : truths) rows.push_back(*t);
    batch.truth = vstack(rows);
  }
  return batch;
}

RecordedAdapter record_adapter_forward(Graph& g, const AdapterParams& params, const BackboneArtifact& bb,
                                       const AdapterBatch& batch) {
  const auto& d = params.dims;
  if (d.horizon > bb.arch().h_max) {
    throw ContractError("adapter: horizon " + std::to_string(d.horizon) + " exceeds backbone h_max " +
                        std::to_string(bb.arch().h_max));
  }
  if (batch.target.cols() != d.target_dim || d.target_dim != bb.embedding_dim()) {
    throw DimensionError("adapter: target embeddings are " + batch.target.shape_string() + ", adapter expects D_ts=" +
                         std::to_string(d.target_dim) + ", backbone gives " + std::to_string(bb.embedding_dim()));
  }

  RecordedAdapter rec;
  std::map<std::string, NodeId> node_of;
  for (const auto& [name, t] : params.tensors()) {
    const bool train = params.trainable(name);
    const NodeId id = train ? g.parameter(*t) : g.constant(*t);
    rec.nodes.push_back(id);
    rec.trainable.push_back(train);
    node_of.emplace(name, id);
  }

  const NodeId target = g.constant(batch.target);
  const NodeId head_w = g.constant(bb.weights().head_w);
  const NodeId head_b = g.constant(bb.weights().head_b);
  auto head = [&](NodeId z) { return g.slice_cols(g.add_row(g.matmul(z, head_w), head_b), 0, d.horizon); };

  if (params.variant == Variant::kWoCovariate) {
    rec.forecast = head(g.add_row(target, node_of.at("embed_bias")));
    return rec;
  }

  const std::size_t n = params.manifest.size();
  if (batch.covariates.size() != n) {
    throw ContractError("adapter: batch has " + std::to_string(batch.covariates.size()) +
                        " covariates, manifest has " + std::to_string(n));
  }
  std::vector<NodeId> aligned;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& entry = params.manifest.entries[i];
    const std::string prefix = "align_" + std::string(to_string(entry.modality));
    const Tensor2& cov = batch.covariates[i];
    if (cov.cols() != entry.embed_dim) {
      throw DimensionError("adapter: covariate '" + entry.name + "' embeddings are " + cov.shape_string() +
                           ", manifest declares dim " + std::to_string(entry.embed_dim));
    }
    aligned.push_back(g.add_row(g.matmul(g.constant(cov), node_of.at(prefix + "_w")), node_of.at(prefix + "_b")));
  }

  NodeId h{};
  if (params.variant == Variant::kWoSelection) {
    const double w = 1.0 / static_cast<double>(n);
    h = g.scale(aligned[0], w);
    for (std::size_t i = 1; i < n; ++i) h = g.add(h, g.scale(aligned[i], w));
  } else {
    const NodeId weights = g.softmax_rows(node_of.at("gate"));
    h = g.scale_by(aligned[0], g.slice_cols(weights, 0, 1));
    for (std::size_t i = 1; i < n; ++i) h = g.add(h, g.scale_by(aligned[i], g.slice_cols(weights, i, i + 1)));
  }

  if (params.variant == Variant::kWoAdaln) {
    rec.forecast = head(g.add(target, g.matmul(h, node_of.at("proj"))));
    return rec;
  }

  const NodeId hidden = g.silu(g.add_row(g.matmul(h, node_of.at("mlp_w1")), node_of.at("mlp_b1")));
  const NodeId out = g.add_row(g.matmul(hidden, node_of.at("mlp_w2")), node_of.at("mlp_b2"));
  const NodeId gamma = g.slice_cols(out, 0, d.target_dim);
  const NodeId beta = g.slice_cols(out, d.target_dim, 2 * d.target_dim);
  const NodeId alpha = g.slice_cols(out, 2 * d.target_dim, 2 * d.target_dim + d.horizon);
  const NodeId head_in = g.add(gamma, g.hadamard(g.add_scalar(beta, 1.0), target));
  rec.forecast = g.hadamard(g.add_scalar(alpha, 1.0), head(head_in));
  return rec;
}

Tensor2 adapter_forecast(const AdapterParams& params, const BackboneArtifact& bb, const AdapterBatch& batch) {
  Graph g;
  const auto rec = record_adapter_forward(g, params, bb, batch);
  return g.value(rec.forecast);
}

Tensor2 cora_forward(const AdapterParams& params, const EmbeddingExtractor& extractor, const ForecastWindow& window) {
  if (!window.normalized) throw ContractError("cora_forward: window must be normalized");
  if (params.variant != Variant::kWoCovariate && !(extractor.manifest() == params.manifest)) {
    throw ManifestError("cora_forward: extractor manifest differs from adapter manifest");
  }
  const EmbeddingBundle bundle = extractor.bundle(window);
  const EmbeddingBundle* ptr = &bundle;
  AdapterBatch batch = make_adapter_batch(std::span<const EmbeddingBundle* const>(&ptr, 1));
  if (params.variant == Variant::kWoCovariate) batch.covariates.clear();
  return adapter_forecast(params, extractor.backbone(), batch);
}

double adapter_loss_and_grad(const AdapterParams& params, const BackboneArtifact& bb, const AdapterBatch& batch,
                             std::vector<Tensor2>* grads) {
  Graph g;
  const auto rec = record_adapter_forward(g, params, bb, batch);
  const NodeId loss = g.mse(rec.forecast, g.constant(batch.truth));
  const double value = g.value(loss)[0];
  if (grads != nullptr) {
    g.backward(loss);
    grads->clear();
    for (std::size_t k = 0; k < rec.nodes.size(); ++k) {
      grads->push_back(g.has_grad(rec.nodes[k]) ? g.grad(rec.nodes[k]) : Tensor2());
    }
  }
  return value;
}

void save_adapter(const AdapterParams& params, const std::filesystem::path& path) {
  Json manifest = Json::array();
  for (const auto& e : params.manifest.entries) {
    manifest.push_back({{"name", e.name},
                        {"modality", std::string(to_string(e.modality))},
                        {"input_width", e.input_width},
                        {"embed_dim", e.embed_dim},
                        {"future_known", e.future_known}});
  }
  Json tensors = Json::object();
  for (const auto& [name, t] : params.tensors()) tensors[name] = tensor_to_json(*t);
  const auto& d = params.dims;
  Json doc = {{"format", "cora-adapter"},
              {"version", kCheckpointVersion},
              {"variant", std::string(to_string(params.variant))},
              {"init", std::string(to_string(params.init))},
              {"dims",
               {{"target_dim", d.target_dim}, {"hidden", d.hidden}, {"mlp_hidden", d.mlp_hidden},
                {"horizon", d.horizon}}},
              {"manifest", manifest},
              {"tensors", tensors}};
  write_json_file(doc, path);
}

AdapterParams load_adapter(const std::filesystem::path& path) {
  const Json doc = read_json_file(path);
  try {
    if (doc.at("format") != "cora-adapter") throw ParseError(path.string() + ": not an adapter checkpoint");
    if (doc.at("version").get<int>() != kCheckpointVersion) {
      throw ParseError(path.string() + ": unsupported adapter checkpoint version");
    }
    AdapterParams p;
    p.variant = parse_variant(doc.at("variant").get<std::string>());
    p.init = parse_init_mode(doc.at("init").get<std::string>());
    const auto& jd = doc.at("dims");
    p.dims = {jd.at("target_dim").get<std::size_t>(), jd.at("hidden").get<std::size_t>(),
              jd.at("mlp_hidden").get<std::size_t>(), jd.at("horizon").get<std::size_t>()};
    for (const auto& e : doc.at("manifest")) {
      p.manifest.entries.push_back({e.at("name").get<std::string>(), parse_modality(e.at("modality").get<std::string>()),
                                    e.at("input_width").get<std::size_t>(), e.at("embed_dim").get<std::size_t>(),
                                    e.at("future_known").get<bool>()});
    }
    const auto& jt = doc.at("tensors");
    for (Modality m : kModalities) {
      const std::string prefix = "align_" + std::string(to_string(m));
      if (jt.contains(prefix + "_w")) {
        p.align.emplace(m, AlignmentPair{tensor_from_json(jt.at(prefix + "_w")), tensor_from_json(jt.at(prefix + "_b"))});
      }
    }
    auto load = [&](const char* name, Tensor2& t) {
      if (jt.contains(name)) t = tensor_from_json(jt.at(name));
    };
    load("gate", p.gate);
    load("mlp_w1", p.mlp_w1);
    load("mlp_b1", p.mlp_b1);
    load("mlp_w2", p.mlp_w2);
    load("mlp_b2", p.mlp_b2);
    load("embed_bias", p.embed_bias);
    load("proj", p.proj);
    return p;
  } catch (const Json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace cora
