#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cora/backbone.hpp"
#include "cora/series.hpp"
#include "cora/tensor.hpp"
#include "cora/windows.hpp"

namespace cora {

/// Stand-in for a frozen txt/img encoder: a fixed random affine map + tanh.
struct ProviderConfig {
  std::size_t input_width = 8;
  std::size_t output_dim = 16;
  std::uint64_t seed = 0;
};

class ForeignProvider {
 public:
  explicit ForeignProvider(const ProviderConfig& config);

  /// steps x output_dim. Throws SchemaError when the slice width differs from input_width.
  Tensor2 embed(const ChannelSlice& slice) const;
  Tensor2 embed_rows(const Tensor2& inputs) const;

  std::size_t input_width() const { return weight_.rows(); }
  std::size_t output_dim() const { return weight_.cols(); }

 private:
  Tensor2 weight_;
  Tensor2 bias_;
};

/// ts: last step; txt/img: mean over steps. Throws InputError on zero steps.
Tensor2 aggregate_embedding(const Tensor2& steps, Modality modality);

/// Last-step embedding of the target lookback.
Tensor2 extract_target_embedding(const BackboneArtifact& bb, std::span<const double> lookback);

struct CovariateEntry {
  std::string name;
  Modality modality = Modality::kTs;
  /// Raw channel width (1 for ts).
  std::size_t input_width = 1;
  /// Embedding dim D_m produced by the covariate's provider.
  std::size_t embed_dim = 0;
  bool future_known = false;

  bool operator==(const CovariateEntry&) const = default;
};

/// Covariates in adapter order: every ts entry, then txt, then img, each block
/// keeping frame order.
struct CovariateManifest {
  std::vector<CovariateEntry> entries;

  std::size_t size() const { return entries.size(); }
  std::size_t count(Modality m) const;
  bool has(Modality m) const { return count(m) > 0; }
  /// Embedding dim shared by all covariates of modality m (0 when absent).
  std::size_t dim(Modality m) const;
  bool operator==(const CovariateManifest&) const = default;
};

/// Builds the manifest from the frame's covariates. ts covariates use the
/// backbone dim; txt/img use `foreign_dim`.
CovariateManifest manifest_from_frame(const SeriesFrame& frame, std::size_t ts_dim, std::size_t foreign_dim);

struct CovariateEmbedding {
  std::string name;
  Modality modality = Modality::kTs;
  Tensor2 embedding;  // 1 x D_m
};

struct EmbeddingBundle {
  Tensor2 target;  // 1 x D_ts
  std::vector<CovariateEmbedding> covariates;

  std::size_t count(Modality m) const;
  std::size_t size() const { return covariates.size(); }
};

/// Frozen extraction for whole windows: the backbone for ts channels and one
/// provider per foreign modality.
class EmbeddingExtractor {
 public:
  EmbeddingExtractor(const BackboneArtifact& backbone, CovariateManifest manifest, std::uint64_t provider_seed);

  const CovariateManifest& manifest() const { return manifest_; }
  const BackboneArtifact& backbone() const { return *backbone_; }

  /// Per-step embeddings of one covariate slice.
  Tensor2 covariate_steps(const ChannelSlice& slice, Modality modality) const;
  /// Expects a normalized window whose covariates match the manifest by name.
  EmbeddingBundle bundle(const ForecastWindow& window) const;

 private:
  const BackboneArtifact* backbone_;
  CovariateManifest manifest_;
  std::map<Modality, ForeignProvider> providers_;
};

}  // namespace cora
