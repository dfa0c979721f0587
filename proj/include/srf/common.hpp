#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace srf {

// Worker cap for internal parallel loops (CLI --threads).
inline int& num_threads() {
  static int n = 1;
  return n;
}

inline void set_num_threads(int n) {
  if (n < 1) throw std::invalid_argument("thread count must be >= 1");
  num_threads() = n;
}

// Runs fn(i) for i in [0, count). Work is split into contiguous chunks so
// results are bit-identical regardless of thread count as long as the chunks
// write disjoint outputs.
inline void parallel_for(size_t count, const std::function<void(size_t)>& fn) {
  const int nt = num_threads();
  if (nt <= 1 || count < 2) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const size_t workers = std::min<size_t>(static_cast<size_t>(nt), count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      const size_t lo = count * w / workers;
      const size_t hi = count * (w + 1) / workers;
      for (size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

// Deterministic RNG with hand-rolled mappings so sampled values do not depend
// on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed_mix(seed)) {}

  uint64_t next_u64() {
    // xorshift* keeps the state tiny and the stream splittable by reseeding.
    uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1DULL;
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Marsaglia polar method.
  double normal() {
    while (true) {
      double u = 2.0 * uniform() - 1.0;
      double v = 2.0 * uniform() - 1.0;
      double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) {
        return u * std::sqrt(-2.0 * std::log(s) / s);
      }
    }
  }

  size_t index(size_t n) { return static_cast<size_t>(uniform() * static_cast<double>(n)); }

  Rng fork(uint64_t salt) { return Rng(next_u64() ^ (salt * 0x9E3779B97F4A7C15ULL)); }

 private:
  static uint64_t seed_mix(uint64_t s) {
    // splitmix64 step; also maps seed 0 away from the xorshift fixed point.
    s += 0x9E3779B97F4A7C15ULL;
    s = (s ^ (s >> 30)) * 0xBF58476D1CE4E5B9ULL;
    s = (s ^ (s >> 27)) * 0x94D049BB133111EBULL;
    return (s ^ (s >> 31)) | 1ULL;
  }

  uint64_t state_;
};

inline std::string shape_str(const std::vector<size_t>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace srf
