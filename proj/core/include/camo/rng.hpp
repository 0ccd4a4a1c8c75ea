#pragma once

#include <cstdint>
#include <string_view>

namespace camo {

/// Counter-based random stream.
///
/// Every draw is a pure function of (key, counter), where the key is derived
/// from the seed and the chain of labels used to split the stream. Two
/// streams built from the same seed and labels produce identical values,
/// independently of how many draws any other stream has consumed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Independent child stream identified by a label.
  Rng split(std::string_view label) const;
  /// Independent child stream identified by an integer (step, sample index...).
  Rng split(std::uint64_t index) const;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [lo, hi] (inclusive).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  /// Standard normal via Box-Muller; consumes two draws.
  double normal();

 private:
  Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);
/// 64-bit FNV-1a; used for labels and per-sample seeds.
std::uint64_t fnv1a64(std::string_view text);

}  // namespace camo
