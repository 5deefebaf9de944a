#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <fmt/format.h>
#include <json.hpp>

#include "lmcf/grid.hpp"

namespace lmcf {

inline constexpr int kFieldFormatVersion = 1;

/// Number formatting used for every CSV artifact: 17 significant digits.
inline std::string fmt17(double v) { return fmt::format("{:.17g}", v); }

enum class FieldStorage { Embedded, Sidecar };

inline nlohmann::json field_header(const PotentialField& f) {
  nlohmann::json j;
  j["version"] = kFieldFormatVersion;
  j["n"] = f.spec.dim();
  j["m"] = f.spec.points_per_axis();
  j["half_width"] = f.spec.half_width();
  j["metadata"] = f.metadata;
  return j;
}

namespace detail {

inline std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return out;
  }
  return v;
}

inline void write_blob(const std::filesystem::path& path, const std::vector<double>& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  for (double v : values) {
    std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
}

inline std::vector<double> read_blob(const std::filesystem::path& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::vector<double> values(count);
  for (auto& v : values) {
    std::uint64_t bits = 0;
    if (!in.read(reinterpret_cast<char*>(&bits), sizeof bits))
      throw Error(ErrorKind::Io, "binary field blob is shorter than the header promises");
    v = std::bit_cast<double>(to_little_endian(bits));
  }
  return values;
}

}  // namespace detail

/// Writes the field header as JSON; values are embedded or stored in a
/// sidecar `<stem>.bin` blob next to the JSON file.
inline void write_field(const std::filesystem::path& path, const PotentialField& f,
                        FieldStorage storage = FieldStorage::Embedded) {
  nlohmann::json j = field_header(f);
  if (storage == FieldStorage::Embedded) {
    j["values"] = f.values;
  } else {
    std::filesystem::path blob = path;
    blob.replace_extension(".bin");
    detail::write_blob(blob, f.values);
    j["values_file"] = blob.filename().string();
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << j.dump(1) << '\n';
}

inline PotentialField field_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  if (j.value("version", 0) != kFieldFormatVersion)
    throw Error(ErrorKind::InvalidArgument, "unsupported field format version");
  GridSpec spec(j.at("n").get<int>(), j.at("half_width").get<double>(), j.at("m").get<int>());
  std::vector<double> values;
  if (j.contains("values")) {
    values = j.at("values").get<std::vector<double>>();
  } else if (j.contains("values_file")) {
    values = detail::read_blob(base_dir / j.at("values_file").get<std::string>(), spec.num_nodes());
  } else {
    throw Error(ErrorKind::InvalidArgument, "field JSON has neither values nor values_file");
  }
  PotentialField f(spec, std::move(values));
  if (j.contains("metadata")) f.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
  return f;
}

inline PotentialField read_field(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Io, path.string() + ": " + e.what());
  }
  return field_from_json(j, path.parent_path());
}

/// CSV of nodal values with columns x_1..x_n,u.
inline std::string field_csv(const PotentialField& f) {
  std::ostringstream os;
  const int n = f.spec.dim();
  for (int a = 0; a < n; ++a) os << "x_" << (a + 1) << ',';
  os << "u\n";
  f.spec.for_each_node([&](const Node& node) {
    for (int a = 0; a < n; ++a) os << fmt17(f.spec.coord(node[a])) << ',';
    os << fmt17(f.at(node)) << '\n';
  });
  return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

}  // namespace lmcf
