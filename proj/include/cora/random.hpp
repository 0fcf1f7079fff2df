#pragma once

#include <cstdint>
#include <random>

#include "cora/tensor.hpp"

namespace cora {

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a base seed and a tag.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

/// Glorot/Xavier uniform: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor2 xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

Tensor2 normal_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

}  // namespace cora
