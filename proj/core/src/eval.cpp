#include "isosr/eval.hpp"

namespace isosr {

namespace {

Volume cut_region(const Volume& v, const Region& r) {
  Volume out = tensor_to_volume(region_to_tensor(v, r), v.voxel_nm);
  out.provenance = v.provenance;
  return out;
}

}  // namespace

MetricsRecord evaluate_split_region(const Volume& hr, const Volume& aniso, const Region& region, int z_factor,
                                    const TileSpec& tile, CubicMode cubic, double range, const TilePredictor& fn,
                                    Volume* pred_out) {
  if (region.begin[2] % z_factor != 0 || region.end[2] % z_factor != 0) {
    throw DataError("split region z range [" + std::to_string(region.begin[2]) + "," +
                    std::to_string(region.end[2]) + ") not divisible by z_factor " + std::to_string(z_factor));
  }
  Region aniso_region = region;
  aniso_region.begin[2] /= z_factor;
  aniso_region.end[2] /= z_factor;

  const Volume hr_sub = cut_region(hr, region);
  const Volume aniso_sub = cut_region(aniso, aniso_region);
  const Volume pred = predict_volume(aniso_sub, z_factor, tile, fn);
  const Volume cub = cubic_upsample_z(aniso_sub, z_factor, cubic);

  MetricsRecord rec = evaluate_region(pred, hr_sub, cub, Region::whole(hr_sub), tile.border, range);
  if (pred_out != nullptr) *pred_out = pred;
  return rec;
}

}  // namespace isosr
