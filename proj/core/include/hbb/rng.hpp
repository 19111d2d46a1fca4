#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace hbb {

// Philox4x64-10 block function (Salmon et al., "Parallel random numbers: as
// easy as 1, 2, 3", SC'11). Maps a 256-bit counter and 128-bit key to 256
// pseudo-random bits.
using PhiloxCounter = std::array<std::uint64_t, 4>;
using PhiloxKey = std::array<std::uint64_t, 2>;

PhiloxCounter philox4x64_10(PhiloxCounter counter, PhiloxKey key) noexcept;

// SplitMix64 finalizer; used to derive child stream identifiers.
std::uint64_t mix64(std::uint64_t x) noexcept;

// A reproducible random stream keyed by (seed, stream_id).
//
// Draws are a pure function of the key and the number of values consumed so
// far: two streams constructed with the same key produce bit-identical
// sequences, and distinct keys address disjoint Philox key spaces. Streams
// are cheap value types; give each worker, replicate or sub-task its own.
//
// Satisfies UniformRandomBitGenerator.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream() noexcept : RngStream(0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept;

  std::uint64_t seed() const noexcept { return key_[0]; }
  std::uint64_t stream_id() const noexcept { return key_[1]; }

  // Independent stream derived from this stream's key and `tag`. Depends only
  // on (seed, stream_id, tag), never on how many values were drawn.
  RngStream child(std::uint64_t tag) const noexcept;

  std::uint64_t operator()() noexcept;

  static constexpr std::uint64_t min() noexcept { return 0; }
  static constexpr std::uint64_t max() noexcept {
    return std::numeric_limits<std::uint64_t>::max();
  }

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  // Uniform on the open interval (0, 1); safe to take logs of.
  double uniform_open() noexcept;
  // Standard normal (Marsaglia polar method, spare value cached).
  double normal() noexcept;

  // Skip `n` 256-bit blocks without generating them.
  void discard_blocks(std::uint64_t n) noexcept;

 private:
  void refill() noexcept;

  PhiloxKey key_;
  std::uint64_t block_ = 0;
  PhiloxCounter buffer_{};
  unsigned position_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace hbb
