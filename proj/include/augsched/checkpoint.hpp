#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "augsched/adam.hpp"
#include "augsched/network.hpp"

// Checkpoint file layout (all integers and floats little-endian):
//   magic "AUGS" | u32 version | u64 spec hash | u64 init seed |
//   f64 init scale | u64 record count | records...
// record: u32 name length | name bytes | u32 rank | u64 dims... | f64 payload
// Parameter tensors come first in set order, then optimizer tensors under
// reserved "adam." names. Round trips are bit-exact.

namespace augsched {

constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(os, v);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& is) {
  std::uint64_t v = get_u64(is);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

inline void put_record(std::ostream& os, const std::string& name, const Tensor& t) {
  put_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(os, static_cast<std::uint32_t>(t.shape.size()));
  for (int d : t.shape) put_u64(os, static_cast<std::uint64_t>(d));
  for (double v : t.data) put_f64(os, v);
}

inline std::pair<std::string, Tensor> get_record(std::istream& is) {
  const std::uint32_t name_len = get_u32(is);
  if (name_len > 4096) throw std::runtime_error("checkpoint: corrupt record name length");
  std::string name(name_len, '\0');
  is.read(name.data(), name_len);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  const std::uint32_t rank = get_u32(is);
  if (rank > 8) throw std::runtime_error("checkpoint: corrupt tensor rank");
  std::vector<int> shape(rank);
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint64_t d = get_u64(is);
    if (d > (1ull << 31)) throw std::runtime_error("checkpoint: corrupt dimension");
    shape[i] = static_cast<int>(d);
  }
  Tensor t(shape);
  for (double& v : t.data) v = get_f64(is);
  return {std::move(name), std::move(t)};
}

}  // namespace detail

struct Checkpoint {
  ParameterSet params;
  AdamState adam;
};

inline void save_checkpoint(const ParameterSet& params, const AdamState& adam,
                            const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  os.write("AUGS", 4);
  detail::put_u32(os, kCheckpointVersion);
  detail::put_u64(os, params.spec_hash);
  detail::put_u64(os, params.init_seed);
  detail::put_f64(os, params.init_scale);
  const std::uint64_t n_records = static_cast<std::uint64_t>(params.size()) * 3 + 1;
  detail::put_u64(os, n_records);
  for (int i = 0; i < params.size(); ++i)
    detail::put_record(os, params.names[static_cast<std::size_t>(i)],
                       params.tensors[static_cast<std::size_t>(i)]);
  for (int i = 0; i < params.size(); ++i)
    detail::put_record(os, "adam.m:" + params.names[static_cast<std::size_t>(i)],
                       adam.m[static_cast<std::size_t>(i)]);
  for (int i = 0; i < params.size(); ++i)
    detail::put_record(os, "adam.v:" + params.names[static_cast<std::size_t>(i)],
                       adam.v[static_cast<std::size_t>(i)]);
  Tensor meta({4},
              {static_cast<double>(adam.step), adam.beta1, adam.beta2, adam.eps});
  detail::put_record(os, "adam.meta", meta);
  if (!os) throw std::runtime_error("checkpoint: write failure on " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "AUGS")
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const std::uint32_t version = detail::get_u32(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
  Checkpoint ck;
  ck.params.spec_hash = detail::get_u64(is);
  ck.params.init_seed = detail::get_u64(is);
  ck.params.init_scale = detail::get_f64(is);
  const std::uint64_t n_records = detail::get_u64(is);
  std::vector<std::pair<std::string, Tensor>> adam_m, adam_v;
  Tensor meta;
  for (std::uint64_t i = 0; i < n_records; ++i) {
    auto [name, t] = detail::get_record(is);
    if (name.rfind("adam.m:", 0) == 0)
      adam_m.emplace_back(name.substr(7), std::move(t));
    else if (name.rfind("adam.v:", 0) == 0)
      adam_v.emplace_back(name.substr(7), std::move(t));
    else if (name == "adam.meta")
      meta = std::move(t);
    else
      ck.params.add(name, std::move(t));
  }
  is.peek();
  if (!is.eof()) throw std::runtime_error("checkpoint: trailing bytes in " + path);
  if (meta.numel() != 4 || adam_m.size() != ck.params.tensors.size() ||
      adam_v.size() != ck.params.tensors.size())
    throw std::runtime_error("checkpoint: incomplete optimizer state in " + path);
  ck.adam.step = static_cast<long long>(meta.data[0]);
  ck.adam.beta1 = meta.data[1];
  ck.adam.beta2 = meta.data[2];
  ck.adam.eps = meta.data[3];
  ck.adam.m.resize(ck.params.tensors.size());
  ck.adam.v.resize(ck.params.tensors.size());
  for (auto& [name, t] : adam_m) {
    auto it = ck.params.index.find(name);
    if (it == ck.params.index.end())
      throw std::runtime_error("checkpoint: optimizer tensor without parameter: " + name);
    ck.adam.m[static_cast<std::size_t>(it->second)] = std::move(t);
  }
  for (auto& [name, t] : adam_v) {
    auto it = ck.params.index.find(name);
    if (it == ck.params.index.end())
      throw std::runtime_error("checkpoint: optimizer tensor without parameter: " + name);
    ck.adam.v[static_cast<std::size_t>(it->second)] = std::move(t);
  }
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path, std::uint64_t expected_spec_hash) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.params.spec_hash != expected_spec_hash)
    throw std::runtime_error("checkpoint: network spec hash mismatch in " + path);
  return ck;
}

}  // namespace augsched
