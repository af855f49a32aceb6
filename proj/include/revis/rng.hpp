#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace revis {

/// SplitMix64 (Steele, Lea, Flood 2014). Increment 0x9E3779B97F4A7C15,
/// mixing multipliers 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB, shifts
/// 30/27/31. Normals come from Box-Muller so streams do not depend on a
/// standard library's distribution implementation.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 == 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Independent child stream keyed by `stream`.
  SplitMix64 fork(std::uint64_t stream) const noexcept {
    SplitMix64 mixer(state_ ^ (stream * 0xD1B54A32D192ED03ULL));
    return SplitMix64(mixer.next());
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace revis
