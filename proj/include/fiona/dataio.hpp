#pragma once

// FEMB embedding container and its JSONL label manifest.
//
// Layout (all integers little-endian):
//   offset 0   "FEMB"
//   offset 4   u32 version (1)
//   offset 8   u32 count
//   offset 12  u32 dim
//   offset 16  count * dim f32, row-major
//   end - 4    u32 CRC-32 (IEEE, zlib polynomial) of every preceding byte
//
// The manifest sits next to the container as <stem>.jsonl, one object per row:
//   {"id": "...", "label": "bonafide"|"deepfake", "row": N}

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fiona/error.hpp"
#include "fiona/labels.hpp"
#include "fiona/rng.hpp"
#include "fiona/tensor.hpp"

namespace fiona {

inline constexpr std::uint32_t kFembVersion = 1;
inline constexpr std::size_t kFembHeaderBytes = 16;

struct EmbeddingDataset {
  std::uint32_t dim = 0;
  std::vector<float> vectors;  // count x dim, row-major
  std::vector<std::string> ids;
  std::vector<Label> labels;
  std::string source_tag;

  std::size_t count() const noexcept { return ids.size(); }

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(vectors).subspan(i * dim, dim);
  }

  void validate() const {
    if (labels.size() != ids.size()) throw DataError("dataset: label count differs from id count");
    if (vectors.size() != ids.size() * static_cast<std::size_t>(dim)) {
      throw DataError("dataset: vector block does not match count x dim");
    }
    std::unordered_set<std::string> seen;
    for (const auto& id : ids)
      if (!seen.insert(id).second) throw DataError("dataset: duplicate id '" + id + "'");
    for (float v : vectors)
      if (!std::isfinite(v)) throw DataError("dataset: non-finite embedding value");
  }

  // Selected rows widened to f64, [rows.size() x dim].
  Tensor batch(std::span<const std::size_t> rows) const {
    Tensor t({rows.size(), dim});
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto src = row(rows[r]);
      std::copy(src.begin(), src.end(), &t[r * dim]);
    }
    return t;
  }

  friend bool operator==(const EmbeddingDataset&, const EmbeddingDataset&) = default;
};

// Two embedding sources aligned row-by-row on utterance id.
struct PairedDataset {
  std::array<EmbeddingDataset, 2> sources;

  std::size_t count() const noexcept { return sources[0].count(); }
  const std::vector<std::string>& ids() const noexcept { return sources[0].ids; }
  const std::vector<Label>& labels() const noexcept { return sources[0].labels; }
};

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

inline std::uint32_t crc32_of(std::span<const unsigned char> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const std::size_t len = std::min(kChunk, bytes.size() - off);
    crc = ::crc32(crc, bytes.data() + off, static_cast<uInt>(len));
  }
  return static_cast<std::uint32_t>(crc);
}

inline void write_file_atomically(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open for writing: " + tmp.string());
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw DataError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open file: " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(is), {});
}

}  // namespace detail

inline std::filesystem::path manifest_path(const std::filesystem::path& femb) {
  auto p = femb;
  p.replace_extension(".jsonl");
  return p;
}

inline std::vector<unsigned char> encode_femb(const EmbeddingDataset& ds) {
  std::vector<unsigned char> out{'F', 'E', 'M', 'B'};
  out.reserve(kFembHeaderBytes + ds.vectors.size() * 4 + 4);
  detail::put_u32(out, kFembVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(ds.count()));
  detail::put_u32(out, ds.dim);
  for (float v : ds.vectors) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  detail::put_u32(out, detail::crc32_of(out));
  return out;
}

struct FembPayload {
  std::uint32_t count = 0;
  std::uint32_t dim = 0;
  std::vector<float> vectors;
};

inline FembPayload decode_femb(std::span<const unsigned char> bytes, const std::string& origin = "<buffer>") {
  if (bytes.size() < kFembHeaderBytes + 4) throw FormatError(origin + ": truncated FEMB header");
  if (std::memcmp(bytes.data(), "FEMB", 4) != 0) throw FormatError(origin + ": bad magic, not an FEMB file");
  const std::uint32_t version = detail::get_u32(bytes.data() + 4);
  if (version != kFembVersion) {
    throw FormatError(origin + ": unsupported FEMB version " + std::to_string(version));
  }
  FembPayload p;
  p.count = detail::get_u32(bytes.data() + 8);
  p.dim = detail::get_u32(bytes.data() + 12);
  const std::uint64_t expected =
      kFembHeaderBytes + 4ull * static_cast<std::uint64_t>(p.count) * p.dim + 4;
  if (bytes.size() != expected) {
    throw FormatError(origin + ": CRC check impossible, file is " + std::to_string(bytes.size()) +
                      " bytes but header implies " + std::to_string(expected) + " (truncated?)");
  }
  const std::size_t body = bytes.size() - 4;
  const std::uint32_t stored = detail::get_u32(bytes.data() + body);
  if (detail::crc32_of(bytes.first(body)) != stored) throw FormatError(origin + ": CRC mismatch");
  p.vectors.resize(static_cast<std::size_t>(p.count) * p.dim);
  for (std::size_t i = 0; i < p.vectors.size(); ++i)
    p.vectors[i] = std::bit_cast<float>(detail::get_u32(bytes.data() + kFembHeaderBytes + 4 * i));
  return p;
}

inline void write_femb(const EmbeddingDataset& ds, const std::filesystem::path& path) {
  ds.validate();
  if (ds.dim == 0) throw DataError("cannot write FEMB with dim 0");
  const auto bytes = encode_femb(ds);
  std::string manifest;
  for (std::size_t i = 0; i < ds.count(); ++i) {
    nlohmann::ordered_json row;
    row["id"] = ds.ids[i];
    row["label"] = std::string(to_string(ds.labels[i]));
    row["row"] = i;
    manifest += row.dump() + "\n";
  }
  detail::write_file_atomically(path, bytes);
  detail::write_file_atomically(manifest_path(path), std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(manifest.data()), manifest.size()));
}

inline EmbeddingDataset read_femb(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("no such file: " + path.string());
  const auto bytes = detail::read_file(path);
  FembPayload p = decode_femb(bytes, path.string());

  const auto mpath = manifest_path(path);
  std::ifstream ms(mpath);
  if (!ms) throw DataError("missing manifest: " + mpath.string());
  std::vector<std::string> ids(p.count);
  std::vector<Label> labels(p.count);
  std::vector<bool> filled(p.count, false);
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0, rows = 0;
  while (std::getline(ms, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = mpath.string() + ":" + std::to_string(lineno) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + "invalid JSON (" + e.what() + ")");
    }
    if (!j.is_object() || !j.contains("id") || !j.contains("label") || !j.contains("row") ||
        !j["id"].is_string() || !j["label"].is_string() || !j["row"].is_number_unsigned()) {
      throw DataError(where + "expected {\"id\": str, \"label\": str, \"row\": u32}");
    }
    const auto r = j["row"].get<std::uint64_t>();
    if (r >= p.count) throw DataError(where + "row " + std::to_string(r) + " out of range");
    if (filled[r]) throw DataError(where + "row " + std::to_string(r) + " listed twice");
    auto id = j["id"].get<std::string>();
    if (!seen.insert(id).second) throw DataError(where + "duplicate id '" + id + "'");
    try {
      labels[r] = parse_label(j["label"].get<std::string>());
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    ids[r] = std::move(id);
    filled[r] = true;
    ++rows;
  }
  if (rows != p.count) {
    throw DataError(mpath.string() + ": manifest covers " + std::to_string(rows) + " of " +
                    std::to_string(p.count) + " rows");
  }

  EmbeddingDataset ds;
  ds.dim = p.dim;
  ds.vectors = std::move(p.vectors);
  ds.ids = std::move(ids);
  ds.labels = std::move(labels);
  ds.source_tag = path.stem().string();
  ds.validate();
  return ds;
}

inline EmbeddingDataset subset(const EmbeddingDataset& ds, std::span<const std::size_t> rows) {
  EmbeddingDataset out;
  out.dim = ds.dim;
  out.source_tag = ds.source_tag;
  out.vectors.reserve(rows.size() * ds.dim);
  for (auto r : rows) {
    const auto v = ds.row(r);
    out.vectors.insert(out.vectors.end(), v.begin(), v.end());
    out.ids.push_back(ds.ids[r]);
    out.labels.push_back(ds.labels[r]);
  }
  return out;
}

inline PairedDataset subset(const PairedDataset& pd, std::span<const std::size_t> rows) {
  return {{subset(pd.sources[0], rows), subset(pd.sources[1], rows)}};
}

// Rows whose id is in `keep`, original order.
inline EmbeddingDataset select_ids(const EmbeddingDataset& ds, const std::set<std::string>& keep) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.count(); ++i)
    if (keep.count(ds.ids[i])) rows.push_back(i);
  return subset(ds, rows);
}

// Inner join on id, sorted by id.
inline PairedDataset pair(const EmbeddingDataset& a, const EmbeddingDataset& b) {
  std::unordered_map<std::string, std::size_t> index_b;
  for (std::size_t i = 0; i < b.count(); ++i) index_b.emplace(b.ids[i], i);
  std::map<std::string, std::pair<std::size_t, std::size_t>> joined;
  for (std::size_t i = 0; i < a.count(); ++i) {
    auto it = index_b.find(a.ids[i]);
    if (it == index_b.end()) continue;
    if (a.labels[i] != b.labels[it->second]) {
      throw DataError("label conflict for id '" + a.ids[i] + "' between '" + a.source_tag +
                      "' and '" + b.source_tag + "'");
    }
    joined.emplace(a.ids[i], std::make_pair(i, it->second));
  }
  if (joined.empty()) {
    throw DataError("no shared ids between '" + a.source_tag + "' and '" + b.source_tag + "'");
  }
  std::vector<std::size_t> ra, rb;
  for (const auto& [id, rows] : joined) {
    ra.push_back(rows.first);
    rb.push_back(rows.second);
  }
  return {{subset(a, ra), subset(b, rb)}};
}

struct SplitIndices {
  std::vector<std::size_t> kept;
  std::vector<std::size_t> held_out;
};

// Per class, round(fraction * class_size) rows (at least 1, at most size-1)
// are held out; both index lists come back in ascending order.
inline SplitIndices stratified_split(std::span<const Label> labels, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("split fraction must lie in (0, 1), got " + std::to_string(fraction));
  }
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[to_int(labels[i])].push_back(i);
  Rng rng = Rng(seed).split("stratified_split");
  SplitIndices out;
  for (auto& members : by_class) {
    if (members.empty()) continue;
    if (members.size() < 2) throw DataError("stratified split: a class has fewer than 2 samples");
    rng.shuffle(members);
    auto held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
    held = std::clamp<std::size_t>(held, 1, members.size() - 1);
    out.held_out.insert(out.held_out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(held));
    out.kept.insert(out.kept.end(), members.begin() + static_cast<std::ptrdiff_t>(held), members.end());
  }
  std::sort(out.kept.begin(), out.kept.end());
  std::sort(out.held_out.begin(), out.held_out.end());
  return out;
}

template <class Dataset>
  requires std::same_as<Dataset, EmbeddingDataset> || std::same_as<Dataset, PairedDataset>
std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, double fraction, std::uint64_t seed) {
  const auto& labels = [&]() -> const std::vector<Label>& {
    if constexpr (std::is_same_v<Dataset, PairedDataset>) return ds.labels();
    else return ds.labels;
  }();
  const SplitIndices idx = stratified_split(std::span<const Label>(labels), fraction, seed);
  return {subset(ds, idx.kept), subset(ds, idx.held_out)};
}

}  // namespace fiona
