#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cora {

enum class Modality { kTs, kTxt, kImg };
enum class Role { kTarget, kCovariate };

std::string_view to_string(Modality m);
std::string_view to_string(Role r);
/// Throws SchemaError for anything other than ts|txt|img.
Modality parse_modality(std::string_view text);
Role parse_role(std::string_view text);

/// One named channel. Values are stored step-major: `width` doubles per step.
struct Channel {
  std::string name;
  Modality modality = Modality::kTs;
  Role role = Role::kCovariate;
  bool future_known = false;
  std::size_t width = 1;
  std::vector<double> values;

  std::size_t steps() const { return width == 0 ? 0 : values.size() / width; }
  std::span<const double> at(std::size_t step) const {
    return std::span<const double>(values).subspan(step * width, width);
  }
  double scalar(std::size_t step) const { return values[step * width]; }
};

/// A multivariate series with exactly one scalar ts target channel.
class SeriesFrame {
 public:
  SeriesFrame() = default;
  /// Validates equal lengths, a single ts target of width 1 and unique names.
  explicit SeriesFrame(std::vector<Channel> channels, std::int64_t first_step = 0);

  std::size_t length() const { return length_; }
  std::int64_t first_step() const { return first_step_; }
  const std::vector<Channel>& channels() const { return channels_; }
  const Channel& target() const { return channels_[target_index_]; }
  std::size_t target_index() const { return target_index_; }
  /// Covariate channels in frame order.
  std::vector<const Channel*> covariates() const;
  /// Throws InputError when absent.
  const Channel& channel(std::string_view name) const;

 private:
  std::vector<Channel> channels_;
  std::size_t length_ = 0;
  std::size_t target_index_ = 0;
  std::int64_t first_step_ = 0;
};

/// Sidecar entry for one channel.
struct ChannelSchema {
  std::string name;
  Modality modality = Modality::kTs;
  Role role = Role::kCovariate;
  bool future_known = false;
  std::size_t width = 1;
};

std::vector<ChannelSchema> schema_of(const SeriesFrame& frame);

/// Sidecar file: {"version": 1, "channels": [{"name", "modality", "role",
/// "future_known", "width"}, ...]}.
std::vector<ChannelSchema> read_schema(const std::filesystem::path& path);
void write_schema(const std::vector<ChannelSchema>& schema, const std::filesystem::path& path);

/// `data.csv` -> `data.schema.json`
std::filesystem::path default_schema_path(const std::filesystem::path& csv_path);

/// Header row names columns; vector channels appear as `name[0]..name[F-1]`.
/// An optional leading `step` column carries the step index.
SeriesFrame load_csv(const std::filesystem::path& csv_path,
                     const std::filesystem::path& schema_path);
/// Writes the CSV (with a leading `step` column) at 17 significant digits.
void write_csv(const SeriesFrame& frame, const std::filesystem::path& csv_path);

}  // namespace cora
