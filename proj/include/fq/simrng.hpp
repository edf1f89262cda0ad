#pragma once
// Deterministic random sampling on top of mt19937_64.
//
// The engine's output sequence is fully specified by the standard; the
// *distributions* are not, so every sampler here is hand-rolled to keep
// decision traces and simulator reports reproducible across toolchains.

#include <cstdint>
#include <random>
#include <vector>

namespace fq {

class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  // Exact-uniform integer in [0, bound), bound >= 1 (Lemire multiply-reject).
  std::uint64_t below(std::uint64_t bound);

  // Inclusive range.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  double normal(double mu = 0.0, double sigma = 1.0);  // Box-Muller
  double lognormal(double mu, double sigma);
  double exponential(double rate);  // mean 1/rate

private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// k distinct indices drawn uniformly from [0, n), in draw order.
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k);

}  // namespace fq
