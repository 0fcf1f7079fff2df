#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cora/graph.hpp"
#include "cora/tensor.hpp"
#include "cora/windows.hpp"

namespace cora {

struct BackboneArch {
  std::size_t patch = 16;
  std::size_t d_model = 32;
  std::size_t blocks = 2;
  std::size_t h_max = 64;
  /// Adds a log-std head trained jointly with Gaussian NLL.
  bool gaussian_head = false;
};

struct PretrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
};

struct PretrainMetadata {
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::vector<double> train_loss;
  std::vector<double> val_mse;
  double final_val_mse = 0.0;
  std::string data_hash;
};

/// Trainable tensors of the backbone, in a fixed serialization order.
struct BackboneWeights {
  Tensor2 patch_w;  // P x D
  Tensor2 patch_b;  // 1 x D
  std::vector<Tensor2> block_w;  // D x D each
  std::vector<Tensor2> block_b;  // 1 x D each
  Tensor2 head_w;    // D x H_max
  Tensor2 head_b;    // 1 x H_max
  Tensor2 log_std_w;  // D x H_max, empty unless gaussian_head
  Tensor2 log_std_b;

  std::vector<std::pair<std::string, const Tensor2*>> named() const;
  std::vector<Tensor2*> mutable_list();
};

/// Frozen patch forecaster. There are no mutating members: training produces
/// a new artifact and every inference path reads weights through const access.
class BackboneArtifact {
 public:
  BackboneArtifact(BackboneArch arch, BackboneWeights weights, PretrainMetadata metadata);

  const BackboneArch& arch() const { return arch_; }
  const PretrainMetadata& metadata() const { return metadata_; }
  const BackboneWeights& weights() const { return weights_; }
  bool frozen() const { return true; }
  std::size_t embedding_dim() const { return arch_.d_model; }

  /// Trunk over a batch of patches (B x P) -> B x D.
  Tensor2 embed_patches(const Tensor2& patches) const;
  /// One embedding per right-aligned, non-overlapping patch: floor(len / P) x D.
  /// Leading values that do not fill a patch are dropped.
  Tensor2 extract_ts_embeddings(std::span<const double> series) const;
  /// Frozen head over a batch of embeddings (B x D) -> B x H_max.
  Tensor2 head(const Tensor2& embeddings) const;
  /// Log-std head (B x H_max). Throws ContractError without a gaussian head.
  Tensor2 log_std_head(const Tensor2& embeddings) const;

  /// FNV-1a over every weight's bytes, in serialization order.
  std::uint64_t content_hash() const;

 private:
  BackboneArch arch_;
  BackboneWeights weights_;
  PretrainMetadata metadata_;
};

/// Xavier weights, zero biases.
BackboneWeights init_backbone_weights(const BackboneArch& arch, std::uint64_t seed);

/// Trunk recorded on a graph (used by pretraining with parameter nodes and by
/// tests with constants). `weights` holds node ids in BackboneWeights order.
NodeId record_trunk(Graph& g, const std::vector<NodeId>& weights, std::size_t blocks, NodeId patches);

/// MSE (or Gaussian NLL) pretraining on the last lookback patch of every
/// window. Windows are normalized internally. Deterministic per seed.
/// Throws TrainingError naming the step when the loss diverges.
BackboneArtifact pretrain_backbone(const WindowSet& train, const WindowSet& val, const BackboneArch& arch,
                                   const PretrainConfig& config, std::uint64_t seed);

/// Forecast MSE of the frozen head on normalized windows (first min(H, H_max) steps).
double backbone_mse(const BackboneArtifact& bb, const WindowSet& windows);

/// Head output truncated to H. Throws ContractError when H > H_max.
Tensor2 head_forecast(const BackboneArtifact& bb, const Tensor2& target_embedding, std::size_t horizon);

/// Versioned JSON checkpoint; doubles are written in shortest round-trip form.
void save_backbone(const BackboneArtifact& bb, const std::filesystem::path& path);
BackboneArtifact load_backbone(const std::filesystem::path& path);

}  // namespace cora
