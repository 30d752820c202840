#pragma once

// Position-derived randomness. Every random draw in the library is a pure
// function of (seed, stream, element index), evaluated with Philox4x32-10,
// so results never depend on thread count or visit order.
//
//   key     = seed (low word, high word)
//   counter = (index low, index high, stream low, stream high)
//   stream  = splitmix64(fnv1a64(tensor name) ^ splitmix64(purpose << 32 | task))

#include <array>
#include <cstdint>
#include <string_view>

namespace ww::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline Counter philox4x32_10(Counter ctr, Key key) {
  constexpr std::uint32_t kMulA = 0xD2511F53u;
  constexpr std::uint32_t kMulB = 0xCD9E8D57u;
  constexpr std::uint32_t kWeylA = 0x9E3779B9u;
  constexpr std::uint32_t kWeylB = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kMulA} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kMulB} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeylA;
    key[1] += kWeylB;
  }
  return ctr;
}

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

// Separates the draws of different consumers that share a seed.
enum class Purpose : std::uint32_t { dare_drop = 1, random_pool = 2 };

inline std::uint64_t stream_id(Purpose purpose, std::uint32_t task, std::string_view tensor_name) {
  const std::uint64_t tag = (std::uint64_t{static_cast<std::uint32_t>(purpose)} << 32) | task;
  return splitmix64(fnv1a64(tensor_name) ^ splitmix64(tag));
}

// Random source for one (seed, stream); draw(i) is the i-th element's bits.
class PositionalStream {
 public:
  PositionalStream(std::uint64_t seed, std::uint64_t stream)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_lo_(static_cast<std::uint32_t>(stream)),
        stream_hi_(static_cast<std::uint32_t>(stream >> 32)) {}

  Counter bits(std::uint64_t index) const {
    return philox4x32_10({static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                          stream_lo_, stream_hi_},
                         key_);
  }

  // Uniform on [0, 1) with 24 bits of resolution; exactly representable.
  float uniform(std::uint64_t index) const {
    return static_cast<float>(bits(index)[0] >> 8) * 0x1.0p-24f;
  }

  // Uniform integer in [0, n) by 64-bit multiply-shift (bias <= n / 2^64).
  std::uint64_t below(std::uint64_t index, std::uint64_t n) const {
    const auto c = bits(index);
    const std::uint64_t x = (std::uint64_t{c[1]} << 32) | c[0];
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(x) * n) >> 64);
  }

 private:
  Key key_;
  std::uint32_t stream_lo_;
  std::uint32_t stream_hi_;
};

}  // namespace ww::rng
