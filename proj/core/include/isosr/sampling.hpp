#pragma once

#include <array>
#include <string>

#include "isosr/conv_kernels.hpp"
#include "isosr/rng.hpp"
#include "isosr/volume.hpp"

namespace isosr {

struct PatchPair {
  Tensor<float> hr;  // (1,1,px,py,pz), [0,1]
  Tensor<float> lr;  // (1,1,px,py,pz/zf), block means of hr
  std::array<i64, 3> corner{0, 0, 0};
};

// Draws training patches from one region of a volume. Corner coordinates
// are a pure function of (seed, iteration, item), so resuming a run at
// iteration t replays exactly the patches the uninterrupted run would
// have drawn, and thread count never enters the draw order.
class PatchSampler {
 public:
  PatchSampler(const Volume& volume, const Region& region, std::array<i64, 3> patch, int z_factor,
               std::uint64_t seed, i64 margin = 0)
      : volume_(&volume), region_(region), patch_(patch), z_factor_(z_factor), margin_(margin), rng_(seed) {
    if (z_factor_ < 1) throw UsageError("z_factor must be >= 1");
    if (patch_[2] % z_factor_ != 0) {
      throw UsageError("patch z extent " + std::to_string(patch_[2]) + " not divisible by z_factor " +
                       std::to_string(z_factor_));
    }
    for (int a = 0; a < 3; ++a) {
      if (corner_range(a) < 1) {
        throw DataError("patch (" + std::to_string(patch_[0]) + "," + std::to_string(patch_[1]) + "," +
                        std::to_string(patch_[2]) + ") with margin " + std::to_string(margin_) +
                        " does not fit region extent " + std::to_string(region_.extent(a)) + " on axis " +
                        std::string(1, "xyz"[static_cast<std::size_t>(a)]));
      }
    }
  }

  // Number of valid corner positions along an axis.
  i64 corner_range(int a) const { return region_.extent(a) - 2 * margin_ - patch_[static_cast<std::size_t>(a)] + 1; }

  std::array<i64, 3> corner_at(std::uint64_t iteration, std::uint64_t item) const {
    const std::uint64_t stream = iteration ^ 0x50415443480000ULL;
    std::array<i64, 3> c{};
    for (int a = 0; a < 3; ++a) {
      const auto ai = static_cast<std::size_t>(a);
      const auto r = static_cast<std::uint64_t>(corner_range(a));
      c[ai] = region_.begin[ai] + margin_ +
              static_cast<i64>(rng_.uniform_int(stream, item * 3 + static_cast<std::uint64_t>(a), r));
    }
    return c;
  }

  PatchPair sample(std::uint64_t iteration, std::uint64_t item) const {
    PatchPair p;
    p.corner = corner_at(iteration, item);
    Region box;
    for (int a = 0; a < 3; ++a) {
      const auto ai = static_cast<std::size_t>(a);
      box.begin[ai] = p.corner[ai];
      box.end[ai] = p.corner[ai] + patch_[ai];
    }
    p.hr = region_to_tensor(*volume_, box);
    p.lr = avgpool3d_forward(p.hr, {1, 1, z_factor_});
    return p;
  }

  const Region& region() const { return region_; }
  std::array<i64, 3> patch() const { return patch_; }
  int z_factor() const { return z_factor_; }

 private:
  const Volume* volume_;
  Region region_;
  std::array<i64, 3> patch_;
  int z_factor_;
  i64 margin_;
  CounterRng rng_;
};

}  // namespace isosr
