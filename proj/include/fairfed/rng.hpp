#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace fairfed {

/// Deterministic random stream, domain-separated by (seed, label).
///
/// The algorithms are fixed by this repository so that sequences are
/// reproducible across platforms and refactorings:
///  - label hashing: FNV-1a 64-bit
///  - state derivation: splitmix64 over the seed, then over seed^hash
///  - uniform output: xoshiro256++ (53-bit mantissa for doubles)
///  - gaussians: Box-Muller, second value cached
///  - permutations: Fisher-Yates with unbiased bounded draws
///
/// A stream is single-consumer; distinct streams may be used from
/// different threads concurrently.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view label);

  /// Next raw 64-bit word.
  std::uint64_t next_u64();

  /// Uniform double in [0, 1).
  double uniform01();

  /// Uniform integer in [0, bound). bound must be >= 1.
  std::uint64_t uniform_int(std::uint64_t bound);

  /// Standard normal draw.
  double gaussian();

  /// Fisher-Yates permutation of {0..n-1}.
  std::vector<int> permutation(int n);

 private:
  std::uint64_t state_[4];
  double cached_gaussian_ = 0.0;
  bool has_cached_gaussian_ = false;
};

/// FNV-1a 64-bit hash, used for stream labels.
std::uint64_t fnv1a64(std::string_view text);

}  // namespace fairfed
