#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace retboost {

// splitmix64 finalizer, used to derive independent sub-stream seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic random source. All sampling algorithms are spelled out here
// (rejection-sampled bounded ints, Box-Muller gaussians, Fisher-Yates
// shuffle) instead of using std::<distribution> types, whose output is
// implementation-defined. Frozen test values and byte-identical dataset
// generation must not depend on the standard library vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform integer in [0, bound). Rejection sampling, no modulo bias.
  std::uint64_t bounded(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("Rng::bounded: bound must be positive");
    const std::uint64_t threshold = (0ULL - bound) % bound;
    for (;;) {
      const std::uint64_t r = gen_();
      if (r >= threshold) return r % bound;
    }
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller. One variate per call; the sibling is
  // discarded so the stream position is a simple function of call count.
  double gaussian() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(bounded(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string serialize() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }

  static Rng deserialize(const std::string& text) {
    Rng r(0);
    std::istringstream is(text);
    is >> r.gen_;
    if (!is) throw std::runtime_error("Rng::deserialize: malformed state string");
    return r;
  }

  bool operator==(const Rng& other) const { return gen_ == other.gen_; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace retboost
