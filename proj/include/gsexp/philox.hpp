#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace gsexp {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
/// A block is a pure function of (counter, key); streams are cheap to
/// split by putting a stream id into the counter.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
      std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
      auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
      auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

  /// kLanes consecutive blocks at once, lane-major (c[word][lane]); same
  /// values as block(), laid out so the rounds vectorize.
  static constexpr int kLanes = 4;
  static void blocks(std::uint32_t (&c)[4][kLanes], Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      for (int i = 0; i < kLanes; ++i) {
        std::uint64_t p0 = std::uint64_t{kM0} * c[0][i];
        std::uint64_t p1 = std::uint64_t{kM1} * c[2][i];
        std::uint32_t n0 = static_cast<std::uint32_t>(p1 >> 32) ^ c[1][i] ^ key[0];
        std::uint32_t n2 = static_cast<std::uint32_t>(p0 >> 32) ^ c[3][i] ^ key[1];
        c[1][i] = static_cast<std::uint32_t>(p1);
        c[3][i] = static_cast<std::uint32_t>(p0);
        c[0][i] = n0;
        c[2][i] = n2;
      }
    }
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
};

/// UniformRandomBitGenerator over one Philox substream: key = seed,
/// counter = (block index, stream id). Each block gives two 64-bit words
/// (w0 | w1 << 32, w2 | w3 << 32). Usable with <random> and
/// boost::random distributions.
class PhiloxStream {
 public:
  using result_type = std::uint64_t;

  PhiloxStream(std::uint64_t seed, std::uint64_t stream)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_lo_(static_cast<std::uint32_t>(stream)),
        stream_hi_(static_cast<std::uint32_t>(stream >> 32)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (pos_ == kWords) refill();
    return buf_[pos_++];
  }

 private:
  static constexpr int kL = Philox4x32::kLanes, kWords = 2 * kL;

  void refill() {
    std::uint32_t c[4][kL];
    for (int i = 0; i < kL; ++i) {
      std::uint64_t n = n_ + static_cast<std::uint64_t>(i);
      c[0][i] = static_cast<std::uint32_t>(n);
      c[1][i] = static_cast<std::uint32_t>(n >> 32);
      c[2][i] = stream_lo_;
      c[3][i] = stream_hi_;
    }
    Philox4x32::blocks(c, key_);
    for (int i = 0; i < kL; ++i) {
      buf_[2 * i] = c[0][i] | (std::uint64_t{c[1][i]} << 32);
      buf_[2 * i + 1] = c[2][i] | (std::uint64_t{c[3][i]} << 32);
    }
    n_ += kL;
    pos_ = 0;
  }

  Philox4x32::Key key_;
  std::uint32_t stream_lo_, stream_hi_;
  std::uint64_t n_ = 0;
  result_type buf_[kWords] = {};
  int pos_ = kWords;
};

}  // namespace gsexp
