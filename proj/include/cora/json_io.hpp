#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include <json.hpp>

#include "cora/tensor.hpp"

namespace cora {

using Json = nlohmann::json;

/// {"rows": r, "cols": c, "data": [...]}
Json tensor_to_json(const Tensor2& t);
Tensor2 tensor_from_json(const Json& j);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const Json& doc, const std::filesystem::path& path);

/// 64-bit FNV-1a, chained through `state`.
inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
std::uint64_t fnv1a(std::span<const double> values, std::uint64_t state = kFnvOffset);
std::string hex64(std::uint64_t v);

}  // namespace cora
