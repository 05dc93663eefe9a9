#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace isosr {

// splitmix64 finalizer. Used as the mixing core of the counter RNG below.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based generator: value = f(seed, stream, counter). Stateless draws
// mean a training run can be resumed from just the iteration number, and the
// draw order never depends on thread count. Bit-identical on every platform.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t bits(std::uint64_t stream, std::uint64_t counter) const {
    std::uint64_t x = splitmix64(seed_ ^ 0x8f2e9d4bc1a57f63ULL);
    x = splitmix64(x ^ splitmix64(stream));
    return splitmix64(x ^ splitmix64(counter));
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform(std::uint64_t stream, std::uint64_t counter) const {
    return static_cast<double>(bits(stream, counter) >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, range) via 128-bit multiply (unbiased enough for
  // range << 2^64; exact bias is < range/2^64).
  std::uint64_t uniform_int(std::uint64_t stream, std::uint64_t counter, std::uint64_t range) const {
    if (range == 0) return 0;
    const unsigned __int128 wide =
        static_cast<unsigned __int128>(bits(stream, counter)) * static_cast<unsigned __int128>(range);
    return static_cast<std::uint64_t>(wide >> 64);
  }

  // Standard normal pair (Box-Muller) from counters 2k and 2k+1 of a stream.
  void gaussian_pair(std::uint64_t stream, std::uint64_t pair_index, double* z0, double* z1) const {
    // u1 in (0,1]: avoid log(0).
    const double u1 = 1.0 - uniform(stream, 2 * pair_index);
    const double u2 = uniform(stream, 2 * pair_index + 1);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    *z0 = r * std::cos(a);
    *z1 = r * std::sin(a);
  }

  // Gaussian value by flat index within a stream.
  double gaussian(std::uint64_t stream, std::uint64_t index) const {
    double z0, z1;
    gaussian_pair(stream, index / 2, &z0, &z1);
    return (index % 2 == 0) ? z0 : z1;
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
};

}  // namespace isosr
