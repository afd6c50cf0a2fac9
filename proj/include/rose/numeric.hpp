#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rose/errors.hpp"

namespace rose {

using Embedding = std::vector<double>;

inline constexpr double kUnitNormTolerance = 1e-6;

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw SchemaError("embedding dimension mismatch: " + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

inline double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

// Scales v to unit length. A zero vector has no direction and is rejected.
inline Embedding l2_normalized(Embedding v) {
  const double n = l2_norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw DomainError("cannot normalize a zero or non-finite vector");
  for (double& x : v) x /= n;
  return v;
}

inline bool is_unit(std::span<const double> v) { return std::abs(l2_norm(v) - 1.0) <= kUnitNormTolerance; }

// Formats with printf %.*g; the C locale is assumed.
inline std::string format_g(double value, int significant_digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", significant_digits, value);
  return buf;
}

// The double that a %.<digits>g round trip produces. Values stored this way
// serialize and reload without drift.
inline double round_significant(double value, int significant_digits = 12) {
  if (!std::isfinite(value)) return value;
  return std::strtod(format_g(value, significant_digits).c_str(), nullptr);
}

// 64-bit FNV-1a. Stable across platforms; used for script keys and the mock embedder.
inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Uniform in [0, bound) from a 64-bit generator without modulo bias.
// Used instead of std::uniform_int_distribution, whose output differs
// between standard library implementations.
template <typename Gen>
std::uint64_t bounded_uniform(Gen& gen, std::uint64_t bound) {
  if (bound <= 1) return 0;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = static_cast<std::uint64_t>(gen());
  } while (x >= limit);
  return x % bound;
}

}  // namespace rose
