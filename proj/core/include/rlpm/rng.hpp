#pragma once

#include <array>
#include <cstdint>

namespace rlpm {

/// Philox4x32-10 counter-based bijection (Salmon et al., Random123).
/// Output depends only on (counter, key), so any draw is addressable directly
/// and independent streams fall out of distinct keys or counter high words.
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key) noexcept;
};

/// Uniform in the open interval (0, 1) from the top 52 bits.
double to_open_unit(std::uint64_t bits) noexcept;

/// Standard normal deviate by inverse-CDF transform of an open-interval uniform.
double normal_quantile(double u);

/// Mixes (base, a, b) into a fresh 64-bit seed; used to give every worker,
/// path and model its own reproducible stream.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) noexcept;

/// Sequential view over a Philox stream identified by (seed, stream).
/// Draw i of a stream is the same regardless of how earlier draws were consumed
/// in other streams, and is identical across platforms.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

  std::uint64_t next_u64() noexcept;
  double uniform() noexcept { return to_open_unit(next_u64()); }
  double normal() { return normal_quantile(uniform()); }
  /// Uniform integer in [0, bound); bound must be positive.
  std::uint64_t uniform_int(std::uint64_t bound) noexcept;

  /// Random access: the 64-bit word at position `index` of stream (seed, stream).
  static std::uint64_t word_at(std::uint64_t seed, std::uint64_t stream,
                               std::uint64_t index) noexcept;

  std::uint64_t position() const noexcept { return index_; }

 private:
  Philox4x32::Key key_;
  std::uint64_t stream_;
  std::uint64_t index_ = 0;
  std::array<std::uint64_t, 2> cache_{};
  bool cache_valid_ = false;
};

}  // namespace rlpm
