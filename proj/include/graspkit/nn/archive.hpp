#pragma once

// Weight archive: 8-byte magic "GKWARCH1", u64 little-endian manifest length,
// JSON manifest, then the raw little-endian float32 blobs. The manifest is
//   {"format": "graspkit-weights", "version": 1, "meta": {...},
//    "arrays": [{"name", "shape", "dtype": "f32", "byte_offset"}, ...]}
// with byte_offset relative to the start of the blob section.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "graspkit/error.hpp"
#include "graspkit/nn/layers.hpp"
#include "graspkit/tensor.hpp"

namespace graspkit::nn {

inline constexpr char kArchiveMagic[8] = {'G', 'K', 'W', 'A', 'R', 'C', 'H', '1'};

struct ArchiveEntry {
  std::string name;
  Tensor<float> value;
};

struct WeightArchive {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<ArchiveEntry> arrays;

  const ArchiveEntry* find(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return &a;
    return nullptr;
  }

  const Tensor<float>& at(const std::string& name) const {
    const auto* e = find(name);
    if (!e) throw format_error("weight archive: missing array '" + name + "'");
    return e->value;
  }

  template <class T>
  void add(const Parameter<T>& p) {
    arrays.push_back({p.name, p.value.template cast<float>()});
  }
  template <class T>
  void add_all(const std::vector<Parameter<T>*>& params) {
    for (const auto* p : params) add(*p);
  }

  // Copies stored values into matching parameters; shapes must agree.
  template <class T>
  void restore(const std::vector<Parameter<T>*>& params) const {
    for (auto* p : params) {
      const auto& v = at(p->name);
      if (v.shape() != p->value.shape())
        throw format_error("weight archive: array '" + p->name + "' has shape " + shape_string(v.shape()) +
                           ", model expects " + shape_string(p->value.shape()));
      p->value = v.template cast<T>();
    }
  }
};

namespace detail {
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
  return v;
}
inline void put_f32(std::string& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(char((bits >> (8 * i)) & 0xff));
}
inline float get_f32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= std::uint32_t(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}
}  // namespace detail

inline std::string serialize_archive(const WeightArchive& a) {
  nlohmann::json manifest = {{"format", "graspkit-weights"}, {"version", 1}, {"meta", a.meta}};
  nlohmann::json arrays = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& e : a.arrays) {
    arrays.push_back({{"name", e.name}, {"shape", e.value.shape()}, {"dtype", "f32"}, {"byte_offset", offset}});
    offset += 4 * e.value.size();
  }
  manifest["arrays"] = std::move(arrays);
  const std::string text = manifest.dump();
  std::string out(kArchiveMagic, kArchiveMagic + 8);
  detail::put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& e : a.arrays)
    for (float f : e.value.values()) detail::put_f32(out, f);
  return out;
}

inline WeightArchive deserialize_archive(const std::string& bytes, const std::string& origin = "archive") {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kArchiveMagic, 8) != 0)
    throw format_error(origin + ": not a graspkit weight archive");
  const std::uint64_t mlen = detail::get_u64(p + 8);
  if (16 + mlen > bytes.size()) throw format_error(origin + ": truncated manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + std::ptrdiff_t(mlen));
  } catch (const nlohmann::json::exception& e) {
    throw format_error(origin + ": bad manifest: " + e.what());
  }
  if (manifest.value("format", "") != "graspkit-weights")
    throw format_error(origin + ": unknown archive format");
  WeightArchive a;
  a.meta = manifest.value("meta", nlohmann::json::object());
  const std::size_t blob = 16 + mlen;
  for (const auto& e : manifest.at("arrays")) {
    if (e.value("dtype", "") != "f32") throw format_error(origin + ": unsupported dtype");
    Shape shape = e.at("shape").get<Shape>();
    const std::uint64_t off = e.at("byte_offset").get<std::uint64_t>();
    const std::size_t n = Tensor<float>::count(shape);
    if (blob + off + 4 * n > bytes.size()) throw format_error(origin + ": truncated array " + e.value("name", ""));
    Tensor<float> t(shape);
    for (std::size_t i = 0; i < n; ++i) t[i] = detail::get_f32(p + blob + off + 4 * i);
    a.arrays.push_back({e.at("name").get<std::string>(), std::move(t)});
  }
  return a;
}

// Writes through a temporary file and renames, so readers never observe a
// partial archive.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write " + tmp);
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw io_error("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void save_archive(const std::filesystem::path& path, const WeightArchive& a) {
  write_file_atomic(path, serialize_archive(a));
}

inline WeightArchive load_archive(const std::filesystem::path& path) {
  return deserialize_archive(read_file(path), path.string());
}

}  // namespace graspkit::nn
