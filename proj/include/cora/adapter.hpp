#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cora/backbone.hpp"
#include "cora/embedding.hpp"
#include "cora/graph.hpp"
#include "cora/tensor.hpp"

namespace cora {

enum class Variant { kFull, kWoCovariate, kWoAdaln, kWoSelection, kWoZeroInit };
enum class InitMode { kZero, kXavier };

/// Table order: full, wo_covariate, wo_adaln, wo_selection, wo_zero_init.
inline constexpr Variant kAllVariants[] = {Variant::kFull, Variant::kWoCovariate, Variant::kWoAdaln,
                                           Variant::kWoSelection, Variant::kWoZeroInit};

std::string_view to_string(Variant v);
/// Throws ConfigError for unknown names.
Variant parse_variant(std::string_view name);
std::string_view to_string(InitMode m);
InitMode parse_init_mode(std::string_view name);

struct AdapterDims {
  std::size_t target_dim = 32;  // D_ts
  std::size_t hidden = 0;       // D; 0 means D_ts
  std::size_t mlp_hidden = 0;   // D_h; 0 means D
  std::size_t horizon = 24;     // H

  AdapterDims resolved() const;
};

struct AlignmentPair {
  Tensor2 weight;  // D_m x D
  Tensor2 bias;    // 1 x D
};

/// Trainable adapter state. Only the tensors a variant uses are populated:
///   full / wo_selection / wo_zero_init: align, gate, mlp_*
///   wo_adaln: align, gate, proj
///   wo_covariate: embed_bias
/// The MLP output map is laid out as [gamma: D_ts | beta: D_ts | alpha: H].
struct AdapterParams {
  AdapterDims dims;
  CovariateManifest manifest;
  Variant variant = Variant::kFull;
  InitMode init = InitMode::kZero;
  std::map<Modality, AlignmentPair> align;
  Tensor2 gate;    // 1 x N (W_GC)
  Tensor2 mlp_w1;  // D x D_h
  Tensor2 mlp_b1;  // 1 x D_h
  Tensor2 mlp_w2;  // D_h x (2 D_ts + H)
  Tensor2 mlp_b2;  // 1 x (2 D_ts + H)
  Tensor2 embed_bias;  // 1 x D_ts
  Tensor2 proj;        // D x D_ts

  /// Populated tensors in a fixed order (also the checkpoint order).
  std::vector<std::pair<std::string, Tensor2*>> tensors();
  std::vector<std::pair<std::string, const Tensor2*>> tensors() const;
  /// Whether `name` receives gradient under this variant.
  bool trainable(std::string_view name) const;
};

struct InitOptions {
  /// Zero every alignment and MLP tensor, as a literal reading of the
  /// zero-initialization rule. All gradients vanish; kept for demonstration.
  bool strict_zero_init = false;
};

/// Throws ManifestError when a covariate-consuming variant gets N == 0.
AdapterParams init_adapter(const AdapterDims& dims, const CovariateManifest& manifest, Variant variant,
                           InitMode mode, std::uint64_t seed, InitOptions options = {});

/// Rows of aligned embeddings, N x D, in manifest order.
Tensor2 align_embeddings(const AdapterParams& params, const EmbeddingBundle& bundle);

struct ConditionVector {
  Tensor2 h;                    // 1 x D
  std::vector<double> weights;  // N, on the simplex
};

/// weights = softmax(W_GC) (uniform for wo_selection); h = weights . aligned.
ConditionVector gce_mix(const AdapterParams& params, const Tensor2& aligned);

/// (gamma, beta, alpha) = MLP(h); forecast = (1 + alpha) * Head(gamma + (1 + beta) * target)[:H].
Tensor2 adaln_modulate(const AdapterParams& params, const ConditionVector& condition, const Tensor2& target_embedding,
                       const BackboneArtifact& bb);

/// Softmax gate (or the fixed uniform gate for wo_selection).
std::vector<double> gate_weights(const AdapterParams& params);
/// Lowest index wins ties.
std::size_t gate_argmax(const AdapterParams& params);

/// Embeddings of a minibatch, stacked per covariate.
struct AdapterBatch {
  Tensor2 target;                  // B x D_ts
  std::vector<Tensor2> covariates;  // per covariate, B x D_m
  Tensor2 truth;                   // B x H (may be empty for inference)

  std::size_t size() const { return target.rows(); }
};

AdapterBatch make_adapter_batch(std::span<const EmbeddingBundle* const> bundles,
                                std::span<const Tensor2* const> truths = {});

/// Parameter tensors recorded on a graph, aligned with AdapterParams::tensors().
struct RecordedAdapter {
  std::vector<NodeId> nodes;
  std::vector<bool> trainable;
  NodeId forecast;  // B x H
};

/// Records the variant's forward pass. Backbone head weights enter as
/// constants, so no gradient path reaches them.
RecordedAdapter record_adapter_forward(Graph& g, const AdapterParams& params, const BackboneArtifact& bb,
                                       const AdapterBatch& batch);

/// Batched inference (B x H).
Tensor2 adapter_forecast(const AdapterParams& params, const BackboneArtifact& bb, const AdapterBatch& batch);

/// Full covariate-aware forward for one normalized window (1 x H).
Tensor2 cora_forward(const AdapterParams& params, const EmbeddingExtractor& extractor, const ForecastWindow& window);

/// MSE loss over the batch and its gradient per tensor (empty when the tensor
/// receives none).
double adapter_loss_and_grad(const AdapterParams& params, const BackboneArtifact& bb, const AdapterBatch& batch,
                             std::vector<Tensor2>* grads);

void save_adapter(const AdapterParams& params, const std::filesystem::path& path);
AdapterParams load_adapter(const std::filesystem::path& path);

}  // namespace cora
