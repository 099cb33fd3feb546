// Copyright 2026 The gersp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace gersp {

namespace detail {

// splitmix64 finalizer; used to mix seeds and fork independent streams.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_string(const std::string& s) {
  // FNV-1a
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace detail

/// Deterministic random stream. Draw primitives avoid std:: distributions so
/// sequences are identical across standard-library implementations.
class RngStream {
public:
  RngStream() : engine_(0) {}
  explicit RngStream(std::uint64_t seed) {
    seed_ = detail::mix64(seed);
    engine_.seed(seed_);
  }

  /// Independent child stream keyed by (this stream's seed, tag, indices).
  RngStream fork(std::uint64_t tag) const {
    std::uint64_t s = detail::mix64(seed_ ^ detail::mix64(tag));
    return RngStream::from_raw(s);
  }
  RngStream fork(const std::string& tag) const {
    return fork(detail::hash_string(tag));
  }
  RngStream fork(std::uint64_t tag, std::uint64_t a) const {
    return fork(detail::mix64(tag ^ detail::mix64(a + 0x517cc1b727220a95ULL)));
  }
  RngStream fork(std::uint64_t tag, std::uint64_t a, std::uint64_t b) const {
    return fork(tag, detail::mix64(a ^ detail::mix64(b + 0x2545f4914f6cdd1dULL)));
  }
  RngStream fork(const std::string& tag, std::uint64_t a) const {
    return fork(detail::hash_string(tag), a);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0,1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n); n > 0. Uses rejection to stay unbiased.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Box-Muller; draws exactly two uniforms per pair of normals.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // Avoid log(0).
    if (u1 <= 0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i)
      std::swap(p[i - 1], p[uniform_index(i)]);
    return p;
  }

private:
  static RngStream from_raw(std::uint64_t mixed_seed) {
    RngStream s;
    s.seed_ = mixed_seed;
    s.engine_.seed(mixed_seed);
    return s;
  }

  std::uint64_t seed_ = 0;
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0;
};

}  // namespace gersp
