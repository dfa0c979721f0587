#pragma once

// Flat binary checkpoint container.
//
// Layout (all integers little-endian, values raw little-endian scalars):
//   magic   8 bytes  "SRFCKPT1"
//   version u32      currently 1
//   dtype   u32      scalar width in bytes (4 = float32, 8 = float64)
//   step    u64      training step counter
//   config  u64 len + UTF-8 bytes (effective-config echo)
//   nparams u64
//   per parameter:
//     name  u64 len + bytes
//     ndim  u64, extents u64 each
//     data  numel * dtype bytes
//   adam    u8 present flag; if 1: u64 step, then per parameter m[] and v[]
//           arrays (numel * dtype bytes each, same order as params)
//
// Round-trip save/load is bit-exact.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "srf/optim.hpp"
#include "srf/tensor.hpp"

namespace srf {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

template <class T>
struct Checkpoint {
  uint64_t step = 0;
  std::string config_echo;
  std::vector<std::string> names;
  std::vector<Tensor<T>> params;
  bool has_adam = false;
  AdamState<T> adam;
};

namespace detail {

inline void write_u64(std::ostream& os, uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline void write_str(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_str(std::istream& is) {
  uint64_t n = read_u64(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

template <class T>
void write_values(std::ostream& os, const std::vector<T>& v) {
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <class T>
void read_values(std::istream& is, std::vector<T>& v) {
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

}  // namespace detail

inline constexpr char kCkptMagic[8] = {'S', 'R', 'F', 'C', 'K', 'P', 'T', '1'};

template <class T>
void save_checkpoint(const std::string& path, const Checkpoint<T>& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write(kCkptMagic, 8);
  detail::write_u32(os, 1u);
  detail::write_u32(os, static_cast<uint32_t>(sizeof(T)));
  detail::write_u64(os, ckpt.step);
  detail::write_str(os, ckpt.config_echo);
  detail::write_u64(os, ckpt.params.size());
  for (size_t i = 0; i < ckpt.params.size(); ++i) {
    detail::write_str(os, ckpt.names[i]);
    const auto& shape = ckpt.params[i].shape();
    detail::write_u64(os, shape.size());
    for (size_t e : shape) detail::write_u64(os, e);
    detail::write_values(os, ckpt.params[i].value());
  }
  char flag = ckpt.has_adam ? 1 : 0;
  os.write(&flag, 1);
  if (ckpt.has_adam) {
    detail::write_u64(os, ckpt.adam.step);
    for (const auto& m : ckpt.adam.m) detail::write_values(os, m);
    for (const auto& v : ckpt.adam.v) detail::write_values(os, v);
  }
  if (!os) throw std::runtime_error("write failure on checkpoint: " + path);
}

template <class T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint not found: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCkptMagic, 8) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  uint32_t version = detail::read_u32(is);
  if (version != 1) throw std::runtime_error("unsupported checkpoint version");
  uint32_t dtype = detail::read_u32(is);
  if (dtype != sizeof(T)) {
    throw std::runtime_error("checkpoint dtype width " + std::to_string(dtype) +
                             " does not match build precision " + std::to_string(sizeof(T)));
  }
  Checkpoint<T> ckpt;
  ckpt.step = detail::read_u64(is);
  ckpt.config_echo = detail::read_str(is);
  uint64_t nparams = detail::read_u64(is);
  for (uint64_t i = 0; i < nparams; ++i) {
    ckpt.names.push_back(detail::read_str(is));
    uint64_t ndim = detail::read_u64(is);
    std::vector<size_t> shape(ndim);
    for (auto& e : shape) e = detail::read_u64(is);
    std::vector<T> data(Tensor<T>::numel(shape));
    detail::read_values(is, data);
    ckpt.params.push_back(Tensor<T>::from_data(shape, std::move(data), /*requires_grad=*/true));
  }
  char flag = 0;
  is.read(&flag, 1);
  ckpt.has_adam = flag == 1;
  if (ckpt.has_adam) {
    ckpt.adam.step = detail::read_u64(is);
    for (const auto& p : ckpt.params) ckpt.adam.m.emplace_back(p.size(), T(0));
    for (const auto& p : ckpt.params) ckpt.adam.v.emplace_back(p.size(), T(0));
    for (auto& m : ckpt.adam.m) detail::read_values(is, m);
    for (auto& v : ckpt.adam.v) detail::read_values(is, v);
  }
  if (!is) throw std::runtime_error("truncated checkpoint: " + path);
  return ckpt;
}

}  // namespace srf
