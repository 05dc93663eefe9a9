#include "isosr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "isosr/rng.hpp"
#include "isosr/threading.hpp"

namespace isosr {

namespace {

constexpr std::uint64_t kCellStream = 0xCE11ULL;
constexpr std::uint64_t kOrganelleStream = 0x0B1ULL;
constexpr std::uint64_t kNoiseStream = 0x401FULL;

struct Vec3 {
  double x, y, z;
};

double smoothstep01(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

std::vector<float> gaussian_blur(const std::vector<float>& in, std::array<i64, 3> ext, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> w(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int j = -radius; j <= radius; ++j) {
    const double v = std::exp(-0.5 * (j / sigma) * (j / sigma));
    w[static_cast<std::size_t>(j + radius)] = v;
    sum += v;
  }
  for (auto& v : w) v /= sum;

  std::vector<float> cur = in, next(in.size());
  for (int axis = 0; axis < 3; ++axis) {
    const i64 stride = axis == 0 ? 1 : axis == 1 ? ext[0] : ext[0] * ext[1];
    const i64 aext = ext[static_cast<std::size_t>(axis)];
    parallel_for(ext[2], [&](i64 z0, i64 z1) {
      for (i64 iz = z0; iz < z1; ++iz) {
        for (i64 iy = 0; iy < ext[1]; ++iy) {
          for (i64 ix = 0; ix < ext[0]; ++ix) {
            const i64 ai = axis == 0 ? ix : axis == 1 ? iy : iz;
            const i64 base = ix + ext[0] * (iy + ext[1] * iz) - ai * stride;
            double acc = 0.0;
            for (int j = -radius; j <= radius; ++j) {
              const i64 s = std::clamp<i64>(ai + j, 0, aext - 1);
              acc += w[static_cast<std::size_t>(j + radius)] * static_cast<double>(cur[static_cast<std::size_t>(base + s * stride)]);
            }
            next[static_cast<std::size_t>(ix + ext[0] * (iy + ext[1] * iz))] = static_cast<float>(acc);
          }
        }
      }
    });
    std::swap(cur, next);
  }
  return cur;
}

}  // namespace

Volume generate_synthetic_volume(std::array<i64, 3> extents, std::uint64_t seed, const SynthParams& p) {
  for (int a = 0; a < 3; ++a) {
    if (extents[static_cast<std::size_t>(a)] < 8) {
      throw DataError("synthetic volume extent must be >= 8 on every axis");
    }
  }
  const i64 X = extents[0], Y = extents[1], Z = extents[2];
  const i64 nvox = shape_numel({X, Y, Z});
  const CounterRng rng(seed);

  const i64 n_cells = std::max<i64>(8, nvox / std::max<i64>(1, p.voxels_per_cell));
  std::vector<Vec3> cells(static_cast<std::size_t>(n_cells));
  for (i64 c = 0; c < n_cells; ++c) {
    const auto cu = static_cast<std::uint64_t>(c);
    cells[static_cast<std::size_t>(c)] = {rng.uniform(kCellStream, cu * 3 + 0) * static_cast<double>(X),
                                          rng.uniform(kCellStream, cu * 3 + 1) * static_cast<double>(Y),
                                          rng.uniform(kCellStream, cu * 3 + 2) * static_cast<double>(Z)};
  }

  // Membrane field: shade by the gap between nearest and second-nearest
  // cell centers, which vanishes on Voronoi boundaries.
  std::vector<float> field(static_cast<std::size_t>(nvox));
  const double inv_width = 1.0 / (2.0 * p.membrane_halfwidth);
  parallel_for(Z, [&](i64 z0, i64 z1) {
    for (i64 iz = z0; iz < z1; ++iz) {
      for (i64 iy = 0; iy < Y; ++iy) {
        for (i64 ix = 0; ix < X; ++ix) {
          const double px = ix + 0.5, py = iy + 0.5, pz = iz + 0.5;
          double d1 = 1e300, d2 = 1e300;
          for (const Vec3& c : cells) {
            const double dx = px - c.x, dy = py - c.y, dz = pz - c.z;
            const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
            if (d < d1) {
              d2 = d1;
              d1 = d;
            } else if (d < d2) {
              d2 = d;
            }
          }
          const double t = smoothstep01((d2 - d1) * inv_width);
          field[static_cast<std::size_t>(ix + X * (iy + Y * iz))] =
              static_cast<float>(p.membrane_level + (p.cytoplasm_level - p.membrane_level) * t);
        }
      }
    }
  });

  // Ellipsoid blobs near cell centers. min() composition keeps overlap
  // order-independent.
  const i64 n_org = n_cells * p.organelles_per_cell;
  for (i64 o = 0; o < n_org; ++o) {
    const auto ou = static_cast<std::uint64_t>(o);
    const Vec3& host = cells[static_cast<std::size_t>(o % n_cells)];
    Vec3 ctr{host.x + (rng.uniform(kOrganelleStream, ou * 6 + 0) - 0.5) * 20.0,
             host.y + (rng.uniform(kOrganelleStream, ou * 6 + 1) - 0.5) * 20.0,
             host.z + (rng.uniform(kOrganelleStream, ou * 6 + 2) - 0.5) * 20.0};
    const double rspan = p.organelle_radius_max - p.organelle_radius_min;
    const Vec3 rad{p.organelle_radius_min + rng.uniform(kOrganelleStream, ou * 6 + 3) * rspan,
                   p.organelle_radius_min + rng.uniform(kOrganelleStream, ou * 6 + 4) * rspan,
                   p.organelle_radius_min + rng.uniform(kOrganelleStream, ou * 6 + 5) * rspan};
    const i64 x0 = std::clamp<i64>(static_cast<i64>(std::floor(ctr.x - rad.x)) - 1, 0, X);
    const i64 x1 = std::clamp<i64>(static_cast<i64>(std::ceil(ctr.x + rad.x)) + 1, 0, X);
    const i64 y0 = std::clamp<i64>(static_cast<i64>(std::floor(ctr.y - rad.y)) - 1, 0, Y);
    const i64 y1 = std::clamp<i64>(static_cast<i64>(std::ceil(ctr.y + rad.y)) + 1, 0, Y);
    const i64 z0 = std::clamp<i64>(static_cast<i64>(std::floor(ctr.z - rad.z)) - 1, 0, Z);
    const i64 z1 = std::clamp<i64>(static_cast<i64>(std::ceil(ctr.z + rad.z)) + 1, 0, Z);
    for (i64 iz = z0; iz < z1; ++iz) {
      for (i64 iy = y0; iy < y1; ++iy) {
        for (i64 ix = x0; ix < x1; ++ix) {
          const double ex = (ix + 0.5 - ctr.x) / rad.x;
          const double ey = (iy + 0.5 - ctr.y) / rad.y;
          const double ez = (iz + 0.5 - ctr.z) / rad.z;
          const double r2 = ex * ex + ey * ey + ez * ez;
          if (r2 >= 1.0) continue;
          // soft edge over the outer 15% of the radius
          const double edge = smoothstep01((1.0 - std::sqrt(r2)) / 0.15);
          const auto idx = static_cast<std::size_t>(ix + X * (iy + Y * iz));
          const double lowered =
              static_cast<double>(field[idx]) + (p.organelle_level - static_cast<double>(field[idx])) * edge;
          field[idx] = std::min(field[idx], static_cast<float>(lowered));
        }
      }
    }
  }

  field = gaussian_blur(field, extents, p.blur_sigma);

  // Band-limited noise: trilinear interpolation of white noise on a
  // coarse lattice.
  const i64 g = std::max<i64>(2, p.noise_grid);
  const i64 gx = X / g + 2, gy = Y / g + 2, gz = Z / g + 2;
  std::vector<float> lattice(static_cast<std::size_t>(gx * gy * gz));
  for (i64 i = 0; i < gx * gy * gz; ++i) {
    lattice[static_cast<std::size_t>(i)] =
        static_cast<float>(2.0 * rng.uniform(kNoiseStream, static_cast<std::uint64_t>(i)) - 1.0);
  }
  const double inv_g = 1.0 / static_cast<double>(g);
  parallel_for(Z, [&](i64 z0, i64 z1) {
    for (i64 iz = z0; iz < z1; ++iz) {
      for (i64 iy = 0; iy < Y; ++iy) {
        for (i64 ix = 0; ix < X; ++ix) {
          const double fx = ix * inv_g, fy = iy * inv_g, fz = iz * inv_g;
          const i64 bx = static_cast<i64>(fx), by = static_cast<i64>(fy), bz = static_cast<i64>(fz);
          const double tx = fx - bx, ty = fy - by, tz = fz - bz;
          double acc = 0.0;
          for (int dz = 0; dz < 2; ++dz) {
            for (int dy = 0; dy < 2; ++dy) {
              for (int dx = 0; dx < 2; ++dx) {
                const double w = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty) * (dz ? tz : 1.0 - tz);
                acc += w * static_cast<double>(
                               lattice[static_cast<std::size_t>((bx + dx) + gx * ((by + dy) + gy * (bz + dz)))]);
              }
            }
          }
          const auto idx = static_cast<std::size_t>(ix + X * (iy + Y * iz));
          field[idx] = static_cast<float>(
              std::clamp(static_cast<double>(field[idx]) + p.noise_amp * acc, 0.0, 1.0));
        }
      }
    }
  });

  Volume v = Volume::make_f32(X, Y, Z);
  v.f32 = std::move(field);
  v.provenance = "synthetic";
  return v;
}

}  // namespace isosr
