#pragma once

#include <cstdint>
#include <vector>

namespace adrop {

// Stateless 64-bit mixer; also the stream-derivation hash. splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Derive an independent substream seed from a base seed and up to three
// stream coordinates (client id, round number, ...). Equal inputs give equal
// seeds on every platform; that is what run determinism hangs on.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

// Self-contained xoshiro256** generator. The standard <random> distributions
// are implementation-defined, so every draw used in tests or traces goes
// through this one to keep golden values stable across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Box-Muller; second variate cached.
  double normal(double mean = 0.0, double stddev = 1.0);
  bool bernoulli(double p);
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  // Fisher-Yates over indices 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t s_[4];
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace adrop
