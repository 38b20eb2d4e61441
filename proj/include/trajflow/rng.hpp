#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace trajflow {

/// Deterministic random source. Wraps mt19937_64 and derives uniform/normal
/// draws itself so that the full state is captured by the engine alone
/// (std::normal_distribution caches a spare value, which would break
/// checkpoint resume).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; no cached spare.
  double normal();

  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n);

  double gamma(double shape);
  double beta(double a, double b);

  std::string serialize() const;
  void deserialize(const std::string& state);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Mixes a base seed with a stream id (splitmix64 finalizer) so that derived
/// streams are decorrelated.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace trajflow
