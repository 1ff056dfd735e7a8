#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

namespace gmmunit {

// Seeded random stream. Every draw is a pure function of the engine state, so
// the state string alone is enough to resume a sequence exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal();
  std::size_t index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  std::string state() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

// Derives an independent seed from a base seed and a stream tag (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace gmmunit
