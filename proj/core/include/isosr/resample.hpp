#pragma once

#include "isosr/volume.hpp"

namespace isosr {

enum class CubicMode { kZOnly, kTricubic };

// Degrades z resolution by `factor` using non-overlapping block means.
// z extent must be divisible by factor; output is f32 on the input's
// intensity scale with voxel_nm.z multiplied by factor.
Volume simulate_anisotropy(const Volume& v, int factor);

// Catmull-Rom upsampling back to isotropic z. Output z extent is input
// times factor; source coordinate for output k is (k+0.5)/factor - 0.5
// with clamped boundary samples. kTricubic runs the same separable
// evaluation on all three axes; with x and y already at target
// resolution their passes resolve to identity, so both modes agree on
// z-only upsampling by construction.
Volume cubic_upsample_z(const Volume& v, int factor, CubicMode mode = CubicMode::kZOnly);

// Same resampling on a (1,1,X,Y,Z) tensor patch, used by the tiled
// predictor and the loss weighting.
Tensor<float> cubic_upsample_z(const Tensor<float>& t, int factor, CubicMode mode = CubicMode::kZOnly);

}  // namespace isosr
