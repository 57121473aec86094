#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace tinyloc {

/// Seeded random stream. Wraps std::mt19937 (bit-exact across platforms) with
/// our own value transforms, since the std distributions are not pinned by the
/// standard and reports must be reproducible byte for byte.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), gen_(mix(seed)) {}

  /// Independent child stream for a named purpose (split/init/batch/...).
  Rng fork(const std::string& tag) const {
    uint64_t h = 1469598103934665603ull;  // FNV-1a over the tag
    for (unsigned char c : tag) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return Rng(seed_ ^ h);
  }

  uint64_t seed() const { return seed_; }

  uint32_t next_u32() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform() {
    uint64_t hi = gen_();
    uint64_t lo = gen_();
    return static_cast<double>(((hi << 21) ^ lo) & ((1ull << 53) - 1)) / 9007199254740992.0;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  template <typename V>
  void shuffle(std::vector<V>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static uint32_t mix(uint64_t s) {
    s ^= s >> 33;
    s *= 0xff51afd7ed558ccdull;
    s ^= s >> 33;
    s *= 0xc4ceb9fe1a85ec53ull;
    s ^= s >> 33;
    return static_cast<uint32_t>(s);
  }
  uint64_t seed_;
  std::mt19937 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tinyloc
