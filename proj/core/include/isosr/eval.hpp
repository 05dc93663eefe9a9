#pragma once

#include "isosr/metrics.hpp"
#include "isosr/predict.hpp"
#include "isosr/resample.hpp"

namespace isosr {

// Evaluates one split region: the region is cut out of the anisotropic
// volume, predicted tile-by-tile, and scored against the high-res region
// with the cubic baseline computed on the same cut-out. Training-time
// validation and the standalone eval command share this path, so their
// numbers agree exactly. If the region does not span full z, its z range
// must be divisible by z_factor.
MetricsRecord evaluate_split_region(const Volume& hr, const Volume& aniso, const Region& region, int z_factor,
                                    const TileSpec& tile, CubicMode cubic, double range, const TilePredictor& fn,
                                    Volume* pred_out = nullptr);

}  // namespace isosr
