#include "cora/embedding.hpp"

#include <algorithm>
#include <cmath>

#include "cora/errors.hpp"
#include "cora/random.hpp"

namespace cora {

ForeignProvider::ForeignProvider(const ProviderConfig& config) {
  if (config.input_width == 0 || config.output_dim == 0) {
    throw ConfigError("provider: input_width and output_dim must be >= 1");
  }
  Rng rng(derive_seed(config.seed, 0xF0));
  weight_ = normal_matrix(config.input_width, config.output_dim,
                          1.0 / std::sqrt(static_cast<double>(config.input_width)), rng);
  bias_ = normal_matrix(1, config.output_dim, 0.1, rng);
}

Tensor2 ForeignProvider::embed_rows(const Tensor2& inputs) const {
  if (inputs.cols() != input_width()) {
    throw SchemaError("provider: input width " + std::to_string(inputs.cols()) + " does not match declared width " +
                      std::to_string(input_width()));
  }
  Tensor2 out = add_row_broadcast(matmul(inputs, weight_), bias_);
  for (auto& v : out.data()) v = std::tanh(v);
  return out;
}

Tensor2 ForeignProvider::embed(const ChannelSlice& slice) const {
  if (slice.width != input_width()) {
    throw SchemaError("provider: channel '" + slice.name + "' has width " + std::to_string(slice.width) +
                      ", provider expects " + std::to_string(input_width()));
  }
  return embed_rows(Tensor2(slice.steps(), slice.width, slice.values));
}

Tensor2 aggregate_embedding(const Tensor2& steps, Modality modality) {
  if (steps.rows() == 0) throw InputError("aggregate_embedding: no steps");
  if (modality == Modality::kTs) return slice_rows(steps, steps.rows() - 1, steps.rows());
  Tensor2 mean(1, steps.cols());
  for (std::size_t t = 0; t < steps.rows(); ++t)
    for (std::size_t j = 0; j < steps.cols(); ++j) mean[j] += steps(t, j);
  for (auto& v : mean.data()) v /= static_cast<double>(steps.rows());
  return mean;
}

Tensor2 extract_target_embedding(const BackboneArtifact& bb, std::span<const double> lookback) {
  return aggregate_embedding(bb.extract_ts_embeddings(lookback), Modality::kTs);
}

std::size_t CovariateManifest::count(Modality m) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [m](const CovariateEntry& e) { return e.modality == m; }));
}

std::size_t CovariateManifest::dim(Modality m) const {
  for (const auto& e : entries)
    if (e.modality == m) return e.embed_dim;
  return 0;
}

CovariateManifest manifest_from_frame(const SeriesFrame& frame, std::size_t ts_dim, std::size_t foreign_dim) {
  CovariateManifest m;
  for (Modality mod : {Modality::kTs, Modality::kTxt, Modality::kImg}) {
    for (const Channel* c : frame.covariates()) {
      if (c->modality != mod) continue;
      if (mod == Modality::kTs && c->width != 1) {
        throw SchemaError("manifest: ts covariate '" + c->name + "' must have width 1");
      }
      m.entries.push_back({c->name, mod, c->width, mod == Modality::kTs ? ts_dim : foreign_dim, c->future_known});
    }
  }
  return m;
}

std::size_t EmbeddingBundle::count(Modality m) const {
  return static_cast<std::size_t>(std::count_if(covariates.begin(), covariates.end(),
                                                [m](const CovariateEmbedding& e) { return e.modality == m; }));
}

EmbeddingExtractor::EmbeddingExtractor(const BackboneArtifact& backbone, CovariateManifest manifest,
                                       std::uint64_t provider_seed)
    : backbone_(&backbone), manifest_(std::move(manifest)) {
  std::uint64_t tag = 1;
  for (Modality mod : {Modality::kTxt, Modality::kImg}) {
    for (const auto& e : manifest_.entries) {
      if (e.modality != mod) continue;
      auto it = providers_.find(mod);
      if (it == providers_.end()) {
        providers_.emplace(mod, ForeignProvider({e.input_width, e.embed_dim, derive_seed(provider_seed, tag)}));
      } else if (it->second.input_width() != e.input_width) {
        throw SchemaError("manifest: all " + std::string(to_string(mod)) +
                          " covariates must share one input width; '" + e.name + "' differs");
      }
    }
    ++tag;
  }
  for (const auto& e : manifest_.entries) {
    if (e.modality == Modality::kTs && e.embed_dim != backbone.embedding_dim()) {
      throw DimensionError("manifest: ts covariate '" + e.name + "' declares dim " + std::to_string(e.embed_dim) +
                           ", backbone produces " + std::to_string(backbone.embedding_dim()));
    }
  }
}

Tensor2 EmbeddingExtractor::covariate_steps(const ChannelSlice& slice, Modality modality) const {
  if (modality == Modality::kTs) return backbone_->extract_ts_embeddings(slice.values);
  return providers_.at(modality).embed(slice);
}

EmbeddingBundle EmbeddingExtractor::bundle(const ForecastWindow& window) const {
  EmbeddingBundle b;
  b.target = extract_target_embedding(*backbone_, window.lookback);
  for (const auto& entry : manifest_.entries) {
    auto it = std::find_if(window.covariates.begin(), window.covariates.end(),
                           [&](const ChannelSlice& s) { return s.name == entry.name; });
    if (it == window.covariates.end()) {
      throw ManifestError("window is missing covariate '" + entry.name + "'");
    }
    b.covariates.push_back(
        {entry.name, entry.modality, aggregate_embedding(covariate_steps(*it, entry.modality), entry.modality)});
  }
  return b;
}

}  // namespace cora
