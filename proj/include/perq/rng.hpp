#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace perq {

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

std::uint64_t splitmix64(std::uint64_t x);

/// Reproducible PRNG ("perq-rng-v1"): mt19937_64 seeded through SplitMix64.
///
/// All draws avoid std:: distributions, whose output is implementation
/// defined, so streams are identical across standard libraries.
class Rng {
 public:
  static constexpr std::string_view kName = "perq-rng-v1";

  explicit Rng(std::uint64_t seed);

  /// Independent stream for (seed, key), e.g. (seed, sample_id).
  static Rng keyed(std::uint64_t seed, std::string_view key);

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace perq
