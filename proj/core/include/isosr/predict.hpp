#pragma once

#include <functional>

#include "isosr/model.hpp"
#include "isosr/volume.hpp"

namespace isosr {

// Tiling geometry in output (isotropic) voxel coordinates. `border`
// output voxels on each tile face are recomputed by the neighboring tile
// except at volume faces, hiding convolution edge effects. `extent_multiple`
// (input voxels, from extent_multiples) drives edge-replication padding when
// the volume or a clamped tile would otherwise violate pooling divisibility;
// the prediction is cropped back to the true extents.
struct TileSpec {
  std::array<i64, 3> tile{64, 64, 64};
  i64 border = 8;
  std::array<i64, 3> extent_multiple{1, 1, 1};
};

// Maps a (1,1,tx,ty,tz) low-res tile to a (1,1,tx,ty,tz*z_factor) tile.
using TilePredictor = std::function<Tensor<float>(const Tensor<float>&)>;

// Runs the predictor over overlapping tiles of an anisotropic volume and
// stitches the owned (border-stripped) parts into an isotropic output.
// Tiles are visited in a fixed order, so the result is deterministic.
Volume predict_volume(const Volume& aniso, int z_factor, const TileSpec& spec, const TilePredictor& fn);

// Tile predictor wrapping a network forward pass with weights `params`.
TilePredictor model_predictor(const NetworkDesc& desc, const std::vector<Tensor<float>>& params);

}  // namespace isosr
