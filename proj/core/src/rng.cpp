#include "rlpm/rng.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <cmath>

namespace rlpm {
namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

Philox4x32::Key key_of(std::uint64_t seed) {
  return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

Philox4x32::Counter counter_of(std::uint64_t lo, std::uint64_t hi) {
  return {static_cast<std::uint32_t>(lo), static_cast<std::uint32_t>(lo >> 32),
          static_cast<std::uint32_t>(hi), static_cast<std::uint32_t>(hi >> 32)};
}

}  // namespace

Philox4x32::Counter Philox4x32::block(Counter ctr, Key key) noexcept {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

double to_open_unit(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

double normal_quantile(double u) {
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) noexcept {
  const auto out = Philox4x32::block(counter_of(a, b), key_of(base ^ 0x5851F42D4C957F2Dull));
  return static_cast<std::uint64_t>(out[0]) | (static_cast<std::uint64_t>(out[1]) << 32);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
    : key_(key_of(seed)), stream_(stream) {}

std::uint64_t CounterRng::word_at(std::uint64_t seed, std::uint64_t stream,
                                  std::uint64_t index) noexcept {
  const auto out = Philox4x32::block(counter_of(index / 2, stream), key_of(seed));
  const std::size_t lane = (index % 2) * 2;
  return static_cast<std::uint64_t>(out[lane]) | (static_cast<std::uint64_t>(out[lane + 1]) << 32);
}

std::uint64_t CounterRng::next_u64() noexcept {
  const std::uint64_t block_index = index_ / 2;
  if (!cache_valid_ || index_ % 2 == 0) {
    const auto out = Philox4x32::block(counter_of(block_index, stream_), key_);
    cache_[0] = static_cast<std::uint64_t>(out[0]) | (static_cast<std::uint64_t>(out[1]) << 32);
    cache_[1] = static_cast<std::uint64_t>(out[2]) | (static_cast<std::uint64_t>(out[3]) << 32);
    cache_valid_ = true;
  }
  return cache_[index_++ % 2];
}

std::uint64_t CounterRng::uniform_int(std::uint64_t bound) noexcept {
  // Rejection on the top of the range keeps the result exactly uniform.
  const std::uint64_t limit = bound * (UINT64_MAX / bound);
  std::uint64_t x = next_u64();
  while (x >= limit) {
    x = next_u64();
  }
  return x % bound;
}

}  // namespace rlpm
