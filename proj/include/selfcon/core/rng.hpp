#pragma once

#include <cstdint>
#include <string_view>

namespace selfcon {

/// Stable 64-bit FNV-1a hash, used to key named random streams.
std::uint64_t fnv1a64(std::string_view text);

/// Counter-based generator: draw i of stream (seed, stream) is a pure
/// function of (seed, stream, i). Splitting never shares state, and the
/// sequence is identical on every platform (no std:: distributions).
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream);
  Rng(std::uint64_t seed, std::string_view stream_name)
      : Rng(seed, fnv1a64(stream_name)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform integer in [0, bound); bound must be > 0. Unbiased (rejection).
  std::uint64_t below(std::uint64_t bound);
  /// Standard normal via Box-Muller.
  double normal();

  /// Independent child stream derived from this generator's key.
  Rng split(std::string_view name) const;
  Rng split(std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace selfcon
