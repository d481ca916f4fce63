#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace twoscale {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
/// Stateless: maps (counter, key) to 128 random bits.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeylA;
        key[1] += kWeylB;
      }
      ctr = single_round(ctr, key);
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMulA = 0xD2511F53u;
  static constexpr std::uint32_t kMulB = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeylA = 0x9E3779B9u;
  static constexpr std::uint32_t kWeylB = 0xBB67AE85u;

  static Counter single_round(const Counter& c, const Key& k) noexcept {
    const std::uint64_t p0 = std::uint64_t{kMulA} * c[0];
    const std::uint64_t p1 = std::uint64_t{kMulB} * c[2];
    return {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
            static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
  }
};

/// SplitMix64 finalizer; used to hash (seed, stream id) into Philox keys and counters.
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Purpose tags keep the substreams of one path disjoint.
enum class StreamPurpose : std::uint32_t {
  path_noise = 1,       // (W, B) increments of the two-scale system
  limit_noise = 2,      // W~ of the limiting OU process
  frozen_fast = 3,      // frozen fast process (invariant sampling, Feynman-Kac)
  test = 99,
};

/// Independent stream of standard normals and uniforms addressed by
/// (master seed, purpose, index). Two streams with the same address produce
/// identical sequences regardless of which thread or in which order they run.
class RandomStream {
 public:
  RandomStream(std::uint64_t master_seed, std::uint64_t index,
               StreamPurpose purpose = StreamPurpose::path_noise) noexcept {
    const std::uint64_t k = splitmix64(master_seed);
    key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
    const std::uint64_t s =
        splitmix64(index ^ splitmix64(static_cast<std::uint64_t>(purpose) + 0x632BE59BD9B4E019ull));
    stream_hi_ = {static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32)};
  }

  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform() noexcept {
    if (cursor_ >= 4) refill();
    const std::uint64_t hi = block_[cursor_];
    const std::uint64_t lo = block_[cursor_ + 1];
    cursor_ += 2;
    const std::uint64_t bits = ((hi << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; pairs are cached.
  double normal() noexcept {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    have_spare_ = true;
    return r * std::cos(angle);
  }

  void fill_normal(std::span<double> out, double scale = 1.0) noexcept {
    for (double& v : out) v = scale * normal();
  }

 private:
  void refill() noexcept {
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(block_index_),
                                  static_cast<std::uint32_t>(block_index_ >> 32), stream_hi_[0],
                                  stream_hi_[1]};
    block_ = Philox4x32::generate(ctr, key_);
    ++block_index_;
    cursor_ = 0;
  }

  Philox4x32::Key key_{};
  std::array<std::uint32_t, 2> stream_hi_{};
  std::uint64_t block_index_ = 0;
  Philox4x32::Counter block_{};
  int cursor_ = 4;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace twoscale
