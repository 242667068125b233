#pragma once

// FMDL model checkpoint (little-endian):
//   "FMDL" | u32 version=1 | u32 architecture tag
//   u32 n_inputs | n_inputs x u32 input dim | u32 projection_dim | f64 dropout
//   u32 n_params | per param: u32 name_len, name bytes, u32 rank, rank x u32 extent,
//                             prod(extents) x f64

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fiona/dataio.hpp"
#include "fiona/error.hpp"
#include "fiona/models.hpp"

namespace fiona {

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class ByteReader {
 public:
  ByteReader(std::span<const unsigned char> bytes, std::string origin)
      : bytes_(bytes), origin_(std::move(origin)) {}

  std::uint32_t u32() {
    need(4);
    const auto v = get_u32(bytes_.data() + pos_);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError(origin_ + ": checkpoint truncated");
  }

  std::span<const unsigned char> bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<unsigned char> encode_checkpoint(const Model& model) {
  const ModelConfig& c = model.config();
  std::vector<unsigned char> out{'F', 'M', 'D', 'L'};
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(c.arch));
  detail::put_u32(out, static_cast<std::uint32_t>(c.input_dims.size()));
  for (auto d : c.input_dims) detail::put_u32(out, static_cast<std::uint32_t>(d));
  detail::put_u32(out, static_cast<std::uint32_t>(c.projection_dim));
  detail::put_u64(out, std::bit_cast<std::uint64_t>(c.dropout));
  detail::put_u32(out, static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& p : model.parameters()) {
    detail::put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    detail::put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
    for (auto e : p.value.shape()) detail::put_u32(out, static_cast<std::uint32_t>(e));
    for (double v : p.value.data()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

inline Model decode_checkpoint(std::span<const unsigned char> bytes, const std::string& origin = "<buffer>") {
  detail::ByteReader r(bytes, origin);
  if (r.str(4) != "FMDL") throw FormatError(origin + ": bad magic, not an FMDL checkpoint");
  if (const auto v = r.u32(); v != kCheckpointVersion) {
    throw FormatError(origin + ": unsupported checkpoint version " + std::to_string(v));
  }
  ModelConfig c;
  const auto tag = r.u32();
  if (tag < 1 || tag > 4) throw FormatError(origin + ": unknown architecture tag " + std::to_string(tag));
  c.arch = static_cast<Architecture>(tag);
  const auto n_inputs = r.u32();
  if (n_inputs > 2) throw FormatError(origin + ": bad input count");
  for (std::uint32_t i = 0; i < n_inputs; ++i) c.input_dims.push_back(r.u32());
  c.projection_dim = r.u32();
  c.dropout = r.f64();

  // Reference layout: names and shapes must match what the builder produces.
  Model reference = [&] {
    try {
      return build_model(c, 0);
    } catch (const Error& e) {
      throw FormatError(origin + ": invalid model header (" + e.what() + ")");
    }
  }();
  const auto n_params = r.u32();
  if (n_params != reference.parameters().size()) throw FormatError(origin + ": parameter count mismatch");
  std::vector<Parameter> params;
  for (std::uint32_t k = 0; k < n_params; ++k) {
    Parameter p;
    p.name = r.str(r.u32());
    const auto rank = r.u32();
    if (rank == 0 || rank > 3) throw FormatError(origin + ": bad tensor rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& e : shape) e = r.u32();
    const Parameter& ref = reference.parameters()[k];
    if (p.name != ref.name || shape != ref.value.shape()) {
      throw FormatError(origin + ": parameter " + std::to_string(k) + " is '" + p.name + "' " +
                        to_string(shape) + ", expected '" + ref.name + "' " + to_string(ref.value.shape()));
    }
    std::vector<double> data(element_count(shape));
    for (double& v : data) v = r.f64();
    p.value = Tensor(std::move(shape), std::move(data));
    params.push_back(std::move(p));
  }
  if (!r.done()) throw FormatError(origin + ": trailing bytes after checkpoint");
  return Model(std::move(c), std::move(params));
}

inline void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  detail::write_file_atomically(path, encode_checkpoint(model));
}

inline Model load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("no such file: " + path.string());
  return decode_checkpoint(detail::read_file(path), path.string());
}

}  // namespace fiona
