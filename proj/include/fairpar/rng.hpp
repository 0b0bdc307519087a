#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>

namespace fairpar {

// Counter-based random stream (Philox4x32-10). Every draw is a pure function
// of (seed, stream, counter), so independent streams can be consumed from any
// thread in any order and still reproduce bit-identical sequences.
class RngStream {
 public:
  RngStream(uint64_t seed, uint64_t stream)
      : key_{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)},
        stream_{static_cast<uint32_t>(stream), static_cast<uint32_t>(stream >> 32)} {}

  uint32_t next_u32() {
    if (buf_pos_ == 4) {
      buf_ = block(counter_++);
      buf_pos_ = 0;
    }
    return buf_[buf_pos_++];
  }

  uint64_t next_u64() {
    uint64_t lo = next_u32();
    uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // [a, b)
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // [0, n)
  uint64_t uniform_int(uint64_t n) {
    uint64_t lim = n == 0 ? 0 : UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
      v = next_u64();
    } while (v >= lim);
    return v % n;
  }

  // N(0,1) via Box-Muller; second value of each pair is cached.
  double normal() {
    if (has_cache_) {
      has_cache_ = false;
      return cache_;
    }
    double u1 = 1.0 - uniform();  // (0,1], keeps log finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cache_ = r * std::sin(a);
    has_cache_ = true;
    return r * std::cos(a);
  }

  void normal_fill(std::span<double> out) {
    for (double& x : out) x = normal();
  }

  // Raw Philox4x32-10 block for the given 64-bit counter; exposed for tests
  // against the published known-answer vectors.
  std::array<uint32_t, 4> block(uint64_t ctr) const {
    std::array<uint32_t, 4> x = {static_cast<uint32_t>(ctr),
                                 static_cast<uint32_t>(ctr >> 32), stream_[0],
                                 stream_[1]};
    uint32_t k0 = key_[0], k1 = key_[1];
    for (int i = 0; i < 9; ++i) {
      x = round(x, k0, k1);
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    return round(x, k0, k1);
  }

 private:
  static std::array<uint32_t, 4> round(const std::array<uint32_t, 4>& x,
                                       uint32_t k0, uint32_t k1) {
    uint64_t p0 = 0xD2511F53ull * x[0];
    uint64_t p1 = 0xCD9E8D57ull * x[2];
    uint32_t hi0 = static_cast<uint32_t>(p0 >> 32), lo0 = static_cast<uint32_t>(p0);
    uint32_t hi1 = static_cast<uint32_t>(p1 >> 32), lo1 = static_cast<uint32_t>(p1);
    return {hi1 ^ x[1] ^ k0, lo1, hi0 ^ x[3] ^ k1, lo0};
  }

  uint32_t key_[2];
  uint32_t stream_[2];
  uint64_t counter_ = 0;
  std::array<uint32_t, 4> buf_{};
  int buf_pos_ = 4;
  double cache_ = 0.0;
  bool has_cache_ = false;
};

// Stream-id layout: low byte tags the purpose, upper bits carry the context
// (node index, epoch, ...). Keeps per-node certification streams disjoint from
// the training streams under one master seed.
enum class StreamKind : uint64_t {
  SyntheticGen = 1,
  SplitShuffle = 2,
  AdapterInit = 3,
  ClassifierInit = 4,
  TrainOffsets = 5,
  Harden = 6,
  ProbeInit = 7,
  RotatedControl = 8,
  CenterSamples = 9,
  RadiusSamples = 10,
  SelectVotes = 11,
  CertVotes = 12,
  Test = 100,
};

constexpr uint64_t stream_id(StreamKind kind, uint64_t context = 0) {
  return (context << 8) | static_cast<uint64_t>(kind);
}

}  // namespace fairpar
