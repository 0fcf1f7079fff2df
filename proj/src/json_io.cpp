#include "cora/json_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "cora/errors.hpp"

namespace cora {

Json tensor_to_json(const Tensor2& t) {
  return Json{{"rows", t.rows()}, {"cols", t.cols()}, {"data", t.values()}};
}

Tensor2 tensor_from_json(const Json& j) {
  try {
    return Tensor2(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                   j.at("data").get<std::vector<double>>());
  } catch (const Json::exception& e) {
    throw ParseError(std::string("tensor: ") + e.what());
  }
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_json_file(const Json& doc, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

std::uint64_t fnv1a(std::span<const double> values, std::uint64_t state) {
  for (double v : values) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof v);
    for (unsigned char b : bytes) {
      state ^= b;
      state *= 0x100000001b3ULL;
    }
  }
  return state;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace cora
