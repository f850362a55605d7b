#pragma once

// Counter-based random streams. Every draw is a pure function of
// (master seed, trajectory id, stream name, draw index), so results do not
// depend on how trajectories are scheduled across workers.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "qtraj/errors.hpp"

namespace qtraj {

namespace detail {

inline constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

using PhiloxBlock = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

// Philox4x32-10 (Salmon et al., SC'11).
inline PhiloxBlock philox4x32(PhiloxBlock ctr, PhiloxKey key) {
  constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
  constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{M0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{M1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += W0;
    key[1] += W1;
  }
  return ctr;
}

class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t trajectory, std::string_view name)
      : trajectory_(trajectory) {
    const std::uint64_t k = detail::splitmix64(seed ^ detail::splitmix64(detail::fnv1a(name)));
    key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  }

  // Uniform on the open interval (0, 1) with 53 random bits.
  double uniform() {
    if (pos_ == 2) refill();
    return buf_[pos_++];
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double phi = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(phi);
    has_spare_ = true;
    return r * std::cos(phi);
  }

  double exponential() { return -std::log(uniform()); }

  // Exact Poisson draw by sequential inversion; large means are split into
  // chunks since a sum of independent Poisson variables is Poisson.
  std::uint64_t poisson(double mean) {
    if (!(mean >= 0.0) || !std::isfinite(mean)) throw InvalidArgument("poisson mean must be finite and >= 0");
    std::uint64_t total = 0;
    while (mean > 0.0) {
      const double chunk = mean > 30.0 ? 30.0 : mean;
      mean -= chunk;
      double p = std::exp(-chunk);
      double cdf = p;
      const double u = uniform();
      std::uint64_t k = 0;
      while (u > cdf && p > 0.0) {
        ++k;
        p *= chunk / static_cast<double>(k);
        cdf += p;
      }
      total += k;
    }
    return total;
  }

  std::uint64_t blocks_used() const { return counter_; }

 private:
  static double to_unit(std::uint32_t a, std::uint32_t b) {
    const std::uint64_t bits = (std::uint64_t{a >> 5} << 26) | (b >> 6);
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  void refill() {
    const PhiloxBlock ctr{static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                          static_cast<std::uint32_t>(trajectory_),
                          static_cast<std::uint32_t>(trajectory_ >> 32)};
    ++counter_;
    const PhiloxBlock out = philox4x32(ctr, key_);
    buf_[0] = to_unit(out[0], out[1]);
    buf_[1] = to_unit(out[2], out[3]);
    pos_ = 0;
  }

  PhiloxKey key_{};
  std::uint64_t trajectory_ = 0;
  std::uint64_t counter_ = 0;
  std::array<double, 2> buf_{};
  int pos_ = 2;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace qtraj
