#include "isosr/predict.hpp"

#include <algorithm>

namespace isosr {

namespace {

struct AxisTiles {
  i64 tile = 0;
  std::vector<i64> origin;    // ascending, last one clamped to ext - tile
  std::vector<i64> owned_lo;  // disjoint cover of [0, ext)
  std::vector<i64> owned_hi;
};

AxisTiles plan_axis(i64 ext, i64 tile, i64 border, i64 align, i64 tile_mult, char axis_name) {
  AxisTiles t;
  t.tile = std::min(tile, ext);
  if (t.tile % align != 0) {
    throw UsageError(std::string("tile extent on axis ") + axis_name + " (" + std::to_string(t.tile) +
                     ") not divisible by z_factor " + std::to_string(align));
  }
  if (t.tile % tile_mult != 0) {
    throw UsageError(std::string("tile extent on axis ") + axis_name + " (" + std::to_string(t.tile) +
                     ") not divisible by the model extent multiple " + std::to_string(tile_mult));
  }
  const i64 step = t.tile - 2 * border;
  if (step < 1) {
    throw UsageError(std::string("border ") + std::to_string(border) + " too large for tile " +
                     std::to_string(t.tile) + " on axis " + axis_name);
  }
  if (step % align != 0 || ext % align != 0) {
    throw UsageError(std::string("tile step or extent on axis ") + axis_name +
                     " not divisible by z_factor " + std::to_string(align));
  }
  i64 o = 0;
  for (;;) {
    t.origin.push_back(o);
    if (o + t.tile >= ext) break;
    o = std::min(o + step, ext - t.tile);
  }
  const std::size_t n = t.origin.size();
  t.owned_lo.resize(n);
  t.owned_hi.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    t.owned_lo[i] = i == 0 ? 0 : t.origin[i] + border;
    t.owned_hi[i] = i + 1 == n ? ext : t.origin[i + 1] + border;
  }
  return t;
}

i64 round_up(i64 v, i64 m) { return (v + m - 1) / m * m; }

// Edge-replicated copy grown to (px, py, pz).
Volume pad_clamp(const Volume& v, i64 px, i64 py, i64 pz) {
  Volume out = Volume::make_f32(px, py, pz, v.voxel_nm);
  out.provenance = v.provenance;
  for (i64 iz = 0; iz < pz; ++iz) {
    const i64 sz = std::min(iz, v.z - 1);
    for (i64 iy = 0; iy < py; ++iy) {
      const i64 sy = std::min(iy, v.y - 1);
      const float* src = v.f32.data() + v.index(0, sy, sz);
      float* dst = out.f32.data() + out.index(0, iy, iz);
      for (i64 ix = 0; ix < v.x; ++ix) dst[ix] = src[ix];
      for (i64 ix = v.x; ix < px; ++ix) dst[ix] = src[v.x - 1];
    }
  }
  return out;
}

Volume crop_volume(const Volume& v, i64 cx, i64 cy, i64 cz) {
  Volume out = Volume::make_f32(cx, cy, cz, v.voxel_nm);
  out.provenance = v.provenance;
  for (i64 iz = 0; iz < cz; ++iz) {
    for (i64 iy = 0; iy < cy; ++iy) {
      const float* src = v.f32.data() + v.index(0, iy, iz);
      float* dst = out.f32.data() + out.index(0, iy, iz);
      for (i64 ix = 0; ix < cx; ++ix) dst[ix] = src[ix];
    }
  }
  return out;
}

}  // namespace

Volume predict_volume(const Volume& aniso, int z_factor, const TileSpec& spec, const TilePredictor& fn) {
  if (z_factor < 1) throw UsageError("z_factor must be >= 1");
  for (int a = 0; a < 3; ++a) {
    if (spec.extent_multiple[static_cast<std::size_t>(a)] < 1) throw UsageError("extent multiple must be >= 1");
  }
  const i64 mx = spec.extent_multiple[0], my = spec.extent_multiple[1], mz = spec.extent_multiple[2];
  const i64 px = round_up(aniso.x, mx), py = round_up(aniso.y, my), pz = round_up(aniso.z, mz);
  if (px != aniso.x || py != aniso.y || pz != aniso.z) {
    const Volume padded = pad_clamp(aniso, px, py, pz);
    const Volume full = predict_volume(padded, z_factor, spec, fn);
    return crop_volume(full, aniso.x, aniso.y, aniso.z * z_factor);
  }
  const i64 out_z = aniso.z * z_factor;
  const AxisTiles tx = plan_axis(aniso.x, spec.tile[0], spec.border, 1, mx, 'x');
  const AxisTiles ty = plan_axis(aniso.y, spec.tile[1], spec.border, 1, my, 'y');
  const AxisTiles tz = plan_axis(out_z, spec.tile[2], spec.border, z_factor, mz * z_factor, 'z');

  Volume out = Volume::make_f32(aniso.x, aniso.y, out_z, aniso.voxel_nm);
  out.voxel_nm[2] /= z_factor;
  out.provenance = aniso.provenance;

  for (std::size_t kz = 0; kz < tz.origin.size(); ++kz) {
    for (std::size_t ky = 0; ky < ty.origin.size(); ++ky) {
      for (std::size_t kx = 0; kx < tx.origin.size(); ++kx) {
        Region in_box;
        in_box.begin = {tx.origin[kx], ty.origin[ky], tz.origin[kz] / z_factor};
        in_box.end = {tx.origin[kx] + tx.tile, ty.origin[ky] + ty.tile,
                      (tz.origin[kz] + tz.tile) / z_factor};
        const Tensor<float> lr = region_to_tensor(aniso, in_box);
        Tensor<float> pred = fn(lr);
        const Shape want{1, 1, tx.tile, ty.tile, tz.tile};
        if (pred.shape() != want) {
          throw ShapeError("tile predictor returned " + shape_str(pred.shape()) + ", expected " + shape_str(want));
        }
        Region owned;
        owned.begin = {tx.owned_lo[kx], ty.owned_lo[ky], tz.owned_lo[kz]};
        owned.end = {tx.owned_hi[kx], ty.owned_hi[ky], tz.owned_hi[kz]};
        const Tensor<float> piece =
            crop(pred, {{0, 1},
                        {0, 1},
                        {owned.begin[0] - tx.origin[kx], owned.end[0] - tx.origin[kx]},
                        {owned.begin[1] - ty.origin[ky], owned.end[1] - ty.origin[ky]},
                        {owned.begin[2] - tz.origin[kz], owned.end[2] - tz.origin[kz]}});
        tensor_to_region(piece, out, owned);
      }
    }
  }
  return out;
}

TilePredictor model_predictor(const NetworkDesc& desc, const std::vector<Tensor<float>>& params) {
  return [&desc, &params](const Tensor<float>& lr) {
    Tape<float> tape;
    ForwardResult<float> res = forward(desc, params, tape, lr, /*train=*/false);
    return res.output->value;
  };
}

}  // namespace isosr
