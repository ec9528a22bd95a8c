#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace entrpo {

// Seeded source of uniform variates. The integer engine is std::mt19937_64,
// whose output sequence is fixed by the standard; the conversions below are
// written out by hand so runs reproduce across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  std::size_t index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::index: empty range");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t draw = engine_();
    while (draw >= limit) draw = engine_();
    return static_cast<std::size_t>(draw % bound);
  }

  // Unit-rate exponential; normalized draws give a flat Dirichlet.
  double exponential() { return -std::log1p(-uniform01()); }

  // Categorical draw from probabilities that sum to one.
  template <typename Probs>
  int categorical(const Probs& probs) {
    const double u = uniform01();
    double cumulative = 0.0;
    const int n = static_cast<int>(std::size(probs));
    for (int i = 0; i < n; ++i) {
      cumulative += probs[i];
      if (u < cumulative) return i;
    }
    return n - 1;
  }

 private:
  std::mt19937_64 engine_;
};

template <typename T>
concept UniformSource = requires(T& source, double lo, double hi) {
  { source.uniform(lo, hi) } -> std::convertible_to<double>;
};

}  // namespace entrpo
