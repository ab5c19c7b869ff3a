#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace evgrid {

// Philox4x32-10 counter-based generator. Each (seed, stream) pair names an
// independent sequence; the stream key is built from (node, type, purpose).
class Philox {
 public:
  Philox(std::uint64_t seed, std::uint64_t stream)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  std::uint64_t next_u64() {
    if (pos_ >= 4) {
      refill();
    }
    std::uint64_t lo = buf_[pos_++];
    if (pos_ >= 4) {
      refill();
    }
    std::uint64_t hi = buf_[pos_++];
    return (hi << 32) | lo;
  }

  // Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double exponential(double mean) { return -mean * std::log(uniform()); }

  std::uint64_t counter() const { return counter_; }

 private:
  void refill() {
    std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(counter_),
                                     static_cast<std::uint32_t>(counter_ >> 32),
                                     static_cast<std::uint32_t>(stream_),
                                     static_cast<std::uint32_t>(stream_ >> 32)};
    std::array<std::uint32_t, 2> key = key_;
    for (int round = 0; round < 10; ++round) {
      std::uint64_t p0 = static_cast<std::uint64_t>(0xD2511F53u) * ctr[0];
      std::uint64_t p1 = static_cast<std::uint64_t>(0xCD9E8D57u) * ctr[2];
      std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += 0x9E3779B9u;
      key[1] += 0xBB67AE85u;
    }
    buf_ = ctr;
    pos_ = 0;
    ++counter_;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4;
};

enum class StreamPurpose : std::uint32_t {
  kArrival = 1,
  kRequirement = 2,
  kInitial = 3,
  kSampling = 4,
  kInstance = 5,
};

inline std::uint64_t stream_key(int node, int type, StreamPurpose purpose) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(node)) << 32) |
         (static_cast<std::uint64_t>(static_cast<std::uint16_t>(type)) << 16) |
         static_cast<std::uint64_t>(purpose);
}

}  // namespace evgrid
