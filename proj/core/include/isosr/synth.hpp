#pragma once

#include <array>
#include <cstdint>

#include "isosr/volume.hpp"

namespace isosr {

// Parameters of the synthetic tissue-like phantom. Defaults are frozen;
// regenerating with the same (extents, seed, params) is bit-identical.
struct SynthParams {
  i64 voxels_per_cell = 131072;  // target Voronoi cell volume; cell count = max(8, voxels/this)
  double membrane_halfwidth = 1.5;
  double cytoplasm_level = 0.78;
  double membrane_level = 0.12;
  double organelle_level = 0.38;
  int organelles_per_cell = 2;
  double organelle_radius_min = 3.0;
  double organelle_radius_max = 9.0;
  double blur_sigma = 1.1;
  double noise_amp = 0.055;
  i64 noise_grid = 6;  // lattice step of the band-limited noise, in voxels
};

// Voronoi cells with dark membranes at the boundaries, darker ellipsoid
// blobs inside, Gaussian-smoothed, plus smooth lattice noise; clamped to
// [0,1], f32, isotropic 8 nm voxels.
Volume generate_synthetic_volume(std::array<i64, 3> extents, std::uint64_t seed,
                                 const SynthParams& params = SynthParams{});

}  // namespace isosr
