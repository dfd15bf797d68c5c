#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace tra {

// Error hierarchy. Everything the engine can reject maps to one of these;
// the C API translates them to status codes.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};
struct ShapeError : Error {
  using Error::Error;
};
struct KernelTypeError : Error {
  using Error::Error;
};
struct ConstraintError : Error {
  using Error::Error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct ExecutionError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

// Key vectors are fixed-arity vectors of 64-bit unsigned components.
using IndexVector = std::vector<uint64_t>;

inline std::string index_vector_to_string(const IndexVector& v) {
  std::string s = "<";
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s + ">";
}

// FNV-1a over the little-endian bytes of the projected key components,
// taken in ascending dimension order. This is the placement contract for
// both Shuf and catalog-declared initial partitionings.
inline uint64_t fnv1a64_init() { return 14695981039346656037ull; }

inline uint64_t fnv1a64_feed(uint64_t h, uint64_t component) {
  for (int b = 0; b < 8; ++b) {
    h ^= (component >> (8 * b)) & 0xffull;
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t fnv1a64_str(const std::string& s) {
  uint64_t h = fnv1a64_init();
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Placement of a key under partitioning dims (ascending order assumed).
// The empty projection hashes to 0, so gather-style shuffles land on site 0.
inline uint32_t placement_site(const IndexVector& key, const std::vector<size_t>& dims,
                               uint32_t sites) {
  if (dims.empty()) return 0;
  uint64_t h = fnv1a64_init();
  for (size_t d : dims) h = fnv1a64_feed(h, key[d]);
  return static_cast<uint32_t>(h % sites);
}

// Counter-based generator used for all synthetic data. Identical streams on
// every platform; no libc distribution involved.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline double seeded_uniform(uint64_t seed, uint64_t counter) {
  uint64_t v = splitmix64(splitmix64(seed) ^ counter);
  double u = static_cast<double>(v >> 11) * 0x1.0p-53;  // [0,1)
  return 2.0 * u - 1.0;
}

inline double seeded_small_int(uint64_t seed, uint64_t counter, int64_t lo, int64_t hi) {
  uint64_t v = splitmix64(splitmix64(seed) ^ counter);
  uint64_t span = static_cast<uint64_t>(hi - lo + 1);
  return static_cast<double>(lo + static_cast<int64_t>(v % span));
}

inline uint64_t double_bits(double d) {
  uint64_t u;
  std::memcpy(&u, &d, sizeof(u));
  return u;
}

}  // namespace tra
