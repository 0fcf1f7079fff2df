#include "cora/series.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cora/errors.hpp"

namespace cora {

using nlohmann::json;

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::kTs:
      return "ts";
    case Modality::kTxt:
      return "txt";
    case Modality::kImg:
      return "img";
  }
  return "ts";
}

std::string_view to_string(Role r) { return r == Role::kTarget ? "target" : "covariate"; }

Modality parse_modality(std::string_view text) {
  if (text == "ts") return Modality::kTs;
  if (text == "txt") return Modality::kTxt;
  if (text == "img") return Modality::kImg;
  throw SchemaError("unknown modality tag '" + std::string(text) + "'");
}

Role parse_role(std::string_view text) {
  if (text == "target") return Role::kTarget;
  if (text == "covariate") return Role::kCovariate;
  throw SchemaError("unknown role '" + std::string(text) + "'");
}

SeriesFrame::SeriesFrame(std::vector<Channel> channels, std::int64_t first_step)
    : channels_(std::move(channels)), first_step_(first_step) {
  if (channels_.empty()) throw InputError("SeriesFrame: no channels");
  std::set<std::string> names;
  std::size_t targets = 0;
  for (std::size_t i = 0; i < channels_.size(); ++i) {
    const Channel& c = channels_[i];
    if (!names.insert(c.name).second) throw InputError("SeriesFrame: duplicate channel '" + c.name + "'");
    if (c.width == 0) throw InputError("SeriesFrame: channel '" + c.name + "' has width 0");
    if (c.values.size() % c.width != 0) {
      throw InputError("SeriesFrame: channel '" + c.name + "' value count is not a multiple of its width");
    }
    if (c.role == Role::kTarget) {
      ++targets;
      target_index_ = i;
      if (c.modality != Modality::kTs || c.width != 1) {
        throw SchemaError("SeriesFrame: target '" + c.name + "' must be a scalar ts channel");
      }
    }
  }
  if (targets != 1) {
    throw SchemaError("SeriesFrame: expected exactly one target channel, found " + std::to_string(targets));
  }
  length_ = channels_[target_index_].steps();
  for (const auto& c : channels_) {
    if (c.steps() != length_) {
      throw InputError("SeriesFrame: channel '" + c.name + "' has " + std::to_string(c.steps()) +
                       " steps, target has " + std::to_string(length_));
    }
  }
}

std::vector<const Channel*> SeriesFrame::covariates() const {
  std::vector<const Channel*> out;
  for (const auto& c : channels_)
    if (c.role == Role::kCovariate) out.push_back(&c);
  return out;
}

const Channel& SeriesFrame::channel(std::string_view name) const {
  for (const auto& c : channels_)
    if (c.name == name) return c;
  throw InputError("SeriesFrame: no channel named '" + std::string(name) + "'");
}

std::vector<ChannelSchema> schema_of(const SeriesFrame& frame) {
  std::vector<ChannelSchema> out;
  for (const auto& c : frame.channels()) out.push_back({c.name, c.modality, c.role, c.future_known, c.width});
  return out;
}

std::vector<ChannelSchema> read_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open schema file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError("schema " + path.string() + ": " + e.what());
  }
  if (!doc.contains("channels") || !doc["channels"].is_array()) {
    throw SchemaError("schema " + path.string() + ": missing 'channels' array");
  }
  std::vector<ChannelSchema> out;
  for (const auto& entry : doc["channels"]) {
    ChannelSchema s;
    try {
      s.name = entry.at("name").get<std::string>();
      s.modality = parse_modality(entry.value("modality", std::string("ts")));
      s.role = parse_role(entry.value("role", std::string("covariate")));
      s.future_known = entry.value("future_known", false);
      s.width = entry.value("width", std::size_t{1});
    } catch (const json::exception& e) {
      throw SchemaError("schema " + path.string() + ": " + e.what());
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_schema(const std::vector<ChannelSchema>& schema, const std::filesystem::path& path) {
  json channels = json::array();
  for (const auto& s : schema) {
    channels.push_back({{"name", s.name},
                        {"modality", std::string(to_string(s.modality))},
                        {"role", std::string(to_string(s.role))},
                        {"future_known", s.future_known},
                        {"width", s.width}});
  }
  json doc = {{"version", 1}, {"channels", channels}};
  std::ofstream out(path);
  if (!out) throw InputError("cannot write schema file " + path.string());
  out << doc.dump(2) << "\n";
}

std::filesystem::path default_schema_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".schema.json");
  return p;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (ch != '\r') {
      field.push_back(ch);
    }
  }
  if (quoted) throw ParseError("line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(field));
  return fields;
}

double parse_number(const std::string& text, std::size_t line_no, const std::string& column) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  while (first < last && *first == ' ') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw ParseError("line " + std::to_string(line_no) + ": column '" + column +
                     "': not a number '" + text + "'");
  }
  return v;
}

std::string column_name(const ChannelSchema& s, std::size_t k) {
  if (s.width == 1 && s.modality == Modality::kTs) return s.name;
  return s.name + "[" + std::to_string(k) + "]";
}

}  // namespace

SeriesFrame load_csv(const std::filesystem::path& csv_path, const std::filesystem::path& schema_path) {
  const auto schema = read_schema(schema_path);
  std::ifstream in(csv_path);
  if (!in) throw ParseError("cannot open CSV file " + csv_path.string());

  std::string line;
  if (!std::getline(in, line)) throw ParseError("line 1: empty CSV file");
  const auto header = split_csv_line(line, 1);
  std::map<std::string, std::size_t> column_of;
  for (std::size_t i = 0; i < header.size(); ++i) column_of[header[i]] = i;
  const bool has_step = !header.empty() && header[0] == "step";

  bool has_target = false;
  for (const auto& s : schema) has_target = has_target || s.role == Role::kTarget;
  if (!has_target) throw SchemaError("schema " + schema_path.string() + ": no target entry");

  std::vector<std::vector<std::size_t>> columns(schema.size());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    for (std::size_t k = 0; k < schema[c].width; ++k) {
      const auto name = column_name(schema[c], k);
      auto it = column_of.find(name);
      if (it == column_of.end()) throw SchemaError("CSV " + csv_path.string() + ": missing column '" + name + "'");
      columns[c].push_back(it->second);
    }
  }

  std::vector<Channel> channels;
  for (const auto& s : schema) channels.push_back({s.name, s.modality, s.role, s.future_known, s.width, {}});

  std::int64_t first_step = 0;
  std::size_t line_no = 1;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line, line_no);
    if (fields.size() != header.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                       " fields, found " + std::to_string(fields.size()));
    }
    if (has_step && rows == 0) {
      first_step = static_cast<std::int64_t>(parse_number(fields[0], line_no, "step"));
    }
    for (std::size_t c = 0; c < schema.size(); ++c)
      for (std::size_t k = 0; k < columns[c].size(); ++k)
        channels[c].values.push_back(parse_number(fields[columns[c][k]], line_no, header[columns[c][k]]));
    ++rows;
  }
  return SeriesFrame(std::move(channels), first_step);
}

void write_csv(const SeriesFrame& frame, const std::filesystem::path& csv_path) {
  std::ofstream out(csv_path);
  if (!out) throw InputError("cannot write CSV file " + csv_path.string());
  const auto schema = schema_of(frame);
  out << "step";
  for (const auto& s : schema)
    for (std::size_t k = 0; k < s.width; ++k) out << "," << column_name(s, k);
  out << "\n";
  char buf[64];
  for (std::size_t t = 0; t < frame.length(); ++t) {
    out << (frame.first_step() + static_cast<std::int64_t>(t));
    for (const auto& c : frame.channels()) {
      for (double v : c.at(t)) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << "," << buf;
      }
    }
    out << "\n";
  }
}

}  // namespace cora
