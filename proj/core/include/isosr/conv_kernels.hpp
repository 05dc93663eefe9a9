#pragma once

// Raw 3D convolution / transposed-convolution / pooling kernels. No autograd
// here; ops.hpp wires these into the tape. Determinism contract: every output
// element is produced by exactly one task, and the per-element accumulation
// order is canonical and independent of how work is split across threads:
// summation channel ascending, then kx, ky, kz ascending. Weight gradients
// accumulate in 16 fixed double lanes (lane = z position mod 16) combined in
// ascending lane order at the end.
//
// The hot paths copy input planes into zero-padded buffers so the inner loops
// carry no boundary branches and every vector load stays in bounds, then
// accumulate register-resident z-row tiles. The padding is zeros, so padded
// lanes contribute exact zeros. Each z element rides one vector lane, an
// independent chain fed in the canonical tap order; multiply-adds may fuse,
// but identically on every run and thread count, so results are bitwise
// reproducible for a given build.

#include <array>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "isosr/error.hpp"
#include "isosr/tensor.hpp"
#include "isosr/threading.hpp"

namespace isosr {

enum class Pad { kSame, kValid };

struct AxisGeom {
  i64 in = 0, k = 1, s = 1;
  i64 out = 0, pad_before = 0;
};

// Zero-pad-same: out = ceil(in/s), pad_total = max(0,(out-1)s + k - in),
// split with the smaller half in front.
inline AxisGeom same_axis(i64 in, i64 k, i64 s) {
  AxisGeom g{in, k, s};
  g.out = (in + s - 1) / s;
  const i64 pad_total = std::max<i64>(0, (g.out - 1) * s + k - in);
  g.pad_before = pad_total / 2;
  return g;
}

inline AxisGeom valid_axis(i64 in, i64 k, i64 s) {
  if (in < k) {
    throw ShapeError("valid conv: kernel " + std::to_string(k) + " exceeds input extent " + std::to_string(in));
  }
  AxisGeom g{in, k, s};
  g.out = (in - k) / s + 1;
  g.pad_before = 0;
  return g;
}

// Transposed conv along one axis: out = in * f; the centering pad equals the
// pad of the SAME conv this operation is the adjoint of (in = out_extent,
// stride = f), which is max(0, k - f)/2.
inline AxisGeom deconv_axis(i64 in, i64 k, i64 f) {
  AxisGeom g{in, k, f};
  g.out = in * f;
  g.pad_before = std::max<i64>(0, k - f) / 2;
  return g;
}

struct Conv3dGeom {
  AxisGeom x, y, z;
  i64 batch = 0, in_ch = 0, out_ch = 0;
};

template <class T>
Conv3dGeom conv3d_geom(const Tensor<T>& x, const Tensor<T>& w, std::array<i64, 3> stride, Pad pad) {
  if (x.ndim() != 5) throw ShapeError("conv3d: input must be 5-d (b,c,x,y,z), got " + shape_str(x.shape()));
  if (w.ndim() != 5) throw ShapeError("conv3d: weights must be 5-d (oc,ic,kx,ky,kz)");
  if (x.extent(1) != w.extent(1)) {
    throw ShapeError("conv3d: channel mismatch, input has " + std::to_string(x.extent(1)) + ", weights expect " +
                     std::to_string(w.extent(1)));
  }
  for (int a = 0; a < 3; ++a) {
    if (w.extent(2 + a) < 1 || stride[static_cast<std::size_t>(a)] < 1) {
      throw ShapeError("conv3d: kernel extents and strides must be >= 1");
    }
  }
  Conv3dGeom g;
  const auto axis = (pad == Pad::kSame) ? same_axis : valid_axis;
  g.x = axis(x.extent(2), w.extent(2), stride[0]);
  g.y = axis(x.extent(3), w.extent(3), stride[1]);
  g.z = axis(x.extent(4), w.extent(4), stride[2]);
  g.batch = x.extent(0);
  g.in_ch = w.extent(1);
  g.out_ch = w.extent(0);
  return g;
}

template <class T>
Conv3dGeom deconv3d_geom(const Tensor<T>& x, const Tensor<T>& w, std::array<i64, 3> factor) {
  if (x.ndim() != 5) throw ShapeError("deconv3d: input must be 5-d (b,c,x,y,z)");
  if (w.ndim() != 5) throw ShapeError("deconv3d: weights must be 5-d (ic,oc,kx,ky,kz)");
  if (x.extent(1) != w.extent(0)) {
    throw ShapeError("deconv3d: channel mismatch, input has " + std::to_string(x.extent(1)) + ", weights expect " +
                     std::to_string(w.extent(0)));
  }
  for (int a = 0; a < 3; ++a) {
    if (factor[static_cast<std::size_t>(a)] < 1) throw ShapeError("deconv3d: factors must be >= 1");
  }
  Conv3dGeom g;
  g.x = deconv_axis(x.extent(2), w.extent(2), factor[0]);
  g.y = deconv_axis(x.extent(3), w.extent(3), factor[1]);
  g.z = deconv_axis(x.extent(4), w.extent(4), factor[2]);
  g.batch = x.extent(0);
  g.in_ch = w.extent(0);
  g.out_ch = w.extent(1);
  return g;
}

namespace detail {

constexpr i64 kLanes = 16;   // elements per accumulation lane group / z quantum
constexpr i64 kZChunk = 64;  // max z elements held in an accumulator tile

inline i64 round_lanes(i64 n) { return (n + kLanes - 1) & ~(kLanes - 1); }

inline i64 floor_div(i64 a, i64 b) {
  i64 q = a / b;
  if ((a % b) != 0 && ((a < 0) != (b < 0))) --q;
  return q;
}

// Fixed-width lane groups as GNU vector extensions. Accumulator tiles are
// arrays of these indexed only by compile-time constants, which keeps them in
// registers. Lane i of a pack carries an independent accumulation chain, so
// per-element evaluation order is the plain tap order.
template <class T>
struct PackOf;
template <>
struct PackOf<float> {
  typedef float type __attribute__((vector_size(kLanes * sizeof(float))));
};
template <>
struct PackOf<double> {
  typedef double type __attribute__((vector_size(kLanes * sizeof(double))));
};
template <class T>
using Pack = typename PackOf<T>::type;

template <class T>
inline Pack<T> pack_load(const T* p) {
  Pack<T> v;
  __builtin_memcpy(&v, p, sizeof(v));
  return v;
}

template <class T>
inline void pack_store(T* p, Pack<T> v) {
  __builtin_memcpy(p, &v, sizeof(v));
}

template <class T>
inline Pack<T> pack_bcast(T s) {
  return Pack<T>{} + s;  // vector-scalar op splats s across all lanes
}

// kLanes doubles span two native registers, so the weight-gradient kernels
// handle their 16 double chains as lo/hi halves of 8. Lane math is unchanged.
constexpr i64 kHalf = kLanes / 2;
typedef double PackH __attribute__((vector_size(kHalf * sizeof(double))));

inline PackH packh_load(const double* p) {
  PackH v;
  __builtin_memcpy(&v, p, sizeof(v));
  return v;
}

inline void packh_store(double* p, PackH v) { __builtin_memcpy(p, &v, sizeof(v)); }

// 8 values of T widened to double lanes.
template <class T>
inline PackH packh_cvt(const T* p) {
  if constexpr (std::is_same_v<T, double>) {
    return packh_load(p);
  } else {
#if defined(__AVX512F__)
    return _mm512_cvtps_pd(_mm256_loadu_ps(p));
#else
    typedef float F8 __attribute__((vector_size(kHalf * sizeof(float))));
    F8 h;
    __builtin_memcpy(&h, p, sizeof(h));
    return __builtin_convertvector(h, PackH);
#endif
  }
}

// Planes of a (b,c,x,y,z) tensor copied into a zero-padded buffer. Row (ix,iy)
// is addressed in source coordinates; indices in [-xlo, X+xhi) x [-ylo, Y+yhi)
// are valid and out-of-source rows are all zeros. Each row holds `orig` zeros,
// the source z run, and at least `ztail` zeros, so shifted vector loads stay
// inside the buffer and padded lanes contribute exact zeros.
template <class T>
struct PaddedPlanes {
  std::vector<T> buf;
  i64 nx = 0, ny = 0, xlo = 0, ylo = 0;
  i64 rs = 0, orig = 0, plane = 0;
  i64 phases = 1;

  const T* row(i64 plane_idx, i64 ix, i64 iy) const {
    return buf.data() + plane_idx * plane + ((ix + xlo) * ny + (iy + ylo)) * rs + orig;
  }
  // Phase-split rows: subrow p of (ix,iy) holds source z = p, p+phases, ...
  const T* row_phase(i64 plane_idx, i64 ix, i64 iy, i64 p) const {
    return buf.data() + plane_idx * plane + (((ix + xlo) * ny + (iy + ylo)) * phases + p) * rs + orig;
  }
};

template <class T>
PaddedPlanes<T> pad_planes(const T* src, i64 planes, i64 X, i64 Y, i64 Z, i64 xlo, i64 xhi, i64 ylo, i64 yhi,
                           i64 zlo, i64 ztail) {
  PaddedPlanes<T> p;
  p.nx = X + xlo + xhi;
  p.ny = Y + ylo + yhi;
  p.xlo = xlo;
  p.ylo = ylo;
  p.orig = zlo;
  p.rs = round_lanes(zlo + Z + ztail + kLanes);
  p.plane = p.nx * p.ny * p.rs;
  p.buf.assign(static_cast<std::size_t>(planes * p.plane), T{0});
  for (i64 pl = 0; pl < planes; ++pl) {
    const T* s = src + pl * X * Y * Z;
    for (i64 ix = 0; ix < X; ++ix) {
      for (i64 iy = 0; iy < Y; ++iy) {
        T* d = p.buf.data() + pl * p.plane + ((ix + xlo) * p.ny + (iy + ylo)) * p.rs + zlo;
        const T* r = s + (ix * Y + iy) * Z;
        for (i64 i = 0; i < Z; ++i) d[i] = r[i];
      }
    }
  }
  return p;
}

// Same, but each row is split into `phases` subrows by z modulo phases.
template <class T>
PaddedPlanes<T> pad_planes_phased(const T* src, i64 planes, i64 X, i64 Y, i64 Z, i64 phases, i64 xlo, i64 xhi,
                                  i64 ylo, i64 yhi, i64 zlo, i64 ztail) {
  PaddedPlanes<T> p;
  const i64 zsub = Z / phases;
  p.nx = X + xlo + xhi;
  p.ny = Y + ylo + yhi;
  p.xlo = xlo;
  p.ylo = ylo;
  p.orig = zlo;
  p.phases = phases;
  p.rs = round_lanes(zlo + zsub + ztail + kLanes);
  p.plane = p.nx * p.ny * phases * p.rs;
  p.buf.assign(static_cast<std::size_t>(planes * p.plane), T{0});
  for (i64 pl = 0; pl < planes; ++pl) {
    const T* s = src + pl * X * Y * Z;
    for (i64 ix = 0; ix < X; ++ix) {
      for (i64 iy = 0; iy < Y; ++iy) {
        const T* r = s + (ix * Y + iy) * Z;
        for (i64 ph = 0; ph < phases; ++ph) {
          T* d = p.buf.data() + pl * p.plane + (((ix + xlo) * p.ny + (iy + ylo)) * phases + ph) * p.rs + zlo;
          for (i64 t = 0; t < zsub; ++t) d[t] = r[t * phases + ph];
        }
      }
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Unit-stride convolution, forward.

template <class T>
struct ConvCtx {
  const PaddedPlanes<T>* xp = nullptr;
  const T* wd = nullptr;
  const T* bias = nullptr;
  T* yd = nullptr;
  i64 IC = 0, OC = 0, KX = 0, KY = 0, KZ = 0;
  i64 OX = 0, OY = 0, OZ = 0;
  i64 padx = 0, pady = 0, padz = 0;
};

// Accumulates OCB x OYB output z-chunks for one (ox, oy0, oz0) block over
// input channels [ic0, ic0+icn). acc packs are register-resident: ZRP, OCB,
// OYB are compile-time. When first is false the tile resumes from the partial
// sums already stored in y (reloading does not change any value, so the
// per-element order stays channel-then-tap ascending).
template <class T, int ZRP, int OCB, int OYB>
void conv_fwd_tile(const ConvCtx<T>& c, i64 b, i64 oc0, i64 ox, i64 oy0, i64 oz0, i64 zval, i64 ic0, i64 icn,
                   bool first) {
  constexpr int NV = ZRP / kLanes;
  Pack<T> acc[OCB][OYB][NV];
  for (int o = 0; o < OCB; ++o) {
    for (int j = 0; j < OYB; ++j) {
      if (first) {
        const Pack<T> bv = pack_bcast(c.bias ? c.bias[oc0 + o] : T{0});
        for (int v = 0; v < NV; ++v) acc[o][j][v] = bv;
      } else {
        const T* yr = c.yd + (((b * c.OC + oc0 + o) * c.OX + ox) * c.OY + oy0 + j) * c.OZ + oz0;
        T tmp[ZRP];
        for (i64 i = 0; i < zval; ++i) tmp[i] = yr[i];
        for (i64 i = zval; i < ZRP; ++i) tmp[i] = T{0};
        for (int v = 0; v < NV; ++v) acc[o][j][v] = pack_load(tmp + v * kLanes);
      }
    }
  }
  const i64 wt = c.KX * c.KY * c.KZ;
  const i64 wstride = c.IC * wt;
  const i64 rs = c.xp->rs;
  for (i64 ic = ic0; ic < ic0 + icn; ++ic) {
    const T* wic = c.wd + (oc0 * c.IC + ic) * wt;
    for (i64 kx = 0; kx < c.KX; ++kx) {
      for (i64 ky = 0; ky < c.KY; ++ky) {
        const T* xr0 = c.xp->row(b * c.IC + ic, ox + kx - c.padx, oy0 + ky - c.pady) + oz0 - c.padz;
        const T* wk = wic + (kx * c.KY + ky) * c.KZ;
        for (i64 kz = 0; kz < c.KZ; ++kz) {
          Pack<T> wv[OCB];
          for (int o = 0; o < OCB; ++o) wv[o] = pack_bcast(wk[o * wstride + kz]);
          const T* xq = xr0 + kz;
          for (int j = 0; j < OYB; ++j) {
            const T* xr = xq + j * rs;
            for (int v = 0; v < NV; ++v) {
              const Pack<T> xv = pack_load(xr + v * kLanes);
              for (int o = 0; o < OCB; ++o) acc[o][j][v] += wv[o] * xv;
            }
          }
        }
      }
    }
  }
  for (int o = 0; o < OCB; ++o) {
    for (int j = 0; j < OYB; ++j) {
      T tmp[ZRP];
      for (int v = 0; v < NV; ++v) pack_store(tmp + v * kLanes, acc[o][j][v]);
      T* yr = c.yd + (((b * c.OC + oc0 + o) * c.OX + ox) * c.OY + oy0 + j) * c.OZ + oz0;
      for (i64 i = 0; i < zval; ++i) yr[i] = tmp[i];
    }
  }
}

template <class T, int OCB, int OYB>
inline void conv_fwd_tile_z(const ConvCtx<T>& c, i64 b, i64 oc0, i64 ox, i64 oy0, i64 oz0, i64 zval, i64 ic0, i64 icn,
                            bool first) {
  const i64 zrp = round_lanes(zval);
  if (zrp <= 16) {
    conv_fwd_tile<T, 16, OCB, OYB>(c, b, oc0, ox, oy0, oz0, zval, ic0, icn, first);
  } else if (zrp <= 32) {
    conv_fwd_tile<T, 32, OCB, OYB>(c, b, oc0, ox, oy0, oz0, zval, ic0, icn, first);
  } else if (zrp <= 48) {
    conv_fwd_tile<T, 48, OCB, OYB>(c, b, oc0, ox, oy0, oz0, zval, ic0, icn, first);
  } else {
    conv_fwd_tile<T, 64, OCB, OYB>(c, b, oc0, ox, oy0, oz0, zval, ic0, icn, first);
  }
}

// Input channels processed in blocks sized so one block of padded x rows stays
// cache-resident while every output-channel block consumes it.
constexpr i64 kChanBlock = 16;

template <class T>
void conv_fwd_fast(const Conv3dGeom& g, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, Tensor<T>& y) {
  const i64 X = g.x.in, Y = g.y.in, Z = g.z.in;
  const i64 KX = g.x.k, KY = g.y.k, KZ = g.z.k;
  const i64 xhi = std::max<i64>(0, g.x.out - 1 + KX - 1 - g.x.pad_before - (X - 1));
  const i64 yhi = std::max<i64>(0, g.y.out - 1 + KY - 1 - g.y.pad_before - (Y - 1));
  const PaddedPlanes<T> xp =
      pad_planes(x.data(), g.batch * g.in_ch, X, Y, Z, g.x.pad_before, xhi, g.y.pad_before, yhi, g.z.pad_before, KZ);

  ConvCtx<T> c;
  c.xp = &xp;
  c.wd = w.data();
  c.bias = bias ? bias->data() : nullptr;
  c.yd = y.data();
  c.IC = g.in_ch;
  c.OC = g.out_ch;
  c.KX = KX;
  c.KY = KY;
  c.KZ = KZ;
  c.OX = g.x.out;
  c.OY = g.y.out;
  c.OZ = g.z.out;
  c.padx = g.x.pad_before;
  c.pady = g.y.pad_before;
  c.padz = g.z.pad_before;

  parallel_for(g.batch * c.OX, [&](i64 begin, i64 end) {
    for (i64 t = begin; t < end; ++t) {
      const i64 b = t / c.OX, ox = t % c.OX;
      for (i64 ic0 = 0; ic0 < c.IC; ic0 += kChanBlock) {
        const i64 icn = std::min(kChanBlock, c.IC - ic0);
        const bool first = ic0 == 0;
        for (i64 oc0 = 0; oc0 < c.OC; oc0 += 4) {
          const i64 ocb = std::min<i64>(4, c.OC - oc0);
          for (i64 oz0 = 0; oz0 < c.OZ; oz0 += kZChunk) {
            const i64 zval = std::min<i64>(kZChunk, c.OZ - oz0);
            const bool pair_y = round_lanes(zval) <= 32;  // keep acc tiles register-resident
            i64 oy0 = 0;
            if (ocb == 4) {
              if (pair_y) {
                for (; oy0 + 2 <= c.OY; oy0 += 2) conv_fwd_tile_z<T, 4, 2>(c, b, oc0, ox, oy0, oz0, zval, ic0, icn, first);
              }
              for (; oy0 < c.OY; ++oy0) conv_fwd_tile_z<T, 4, 1>(c, b, oc0, ox, oy0, oz0, zval, ic0, icn, first);
            } else {
              for (i64 o = 0; o < ocb; ++o) {
                oy0 = 0;
                if (pair_y) {
                  for (; oy0 + 2 <= c.OY; oy0 += 2) {
                    conv_fwd_tile_z<T, 1, 2>(c, b, oc0 + o, ox, oy0, oz0, zval, ic0, icn, first);
                  }
                }
                for (; oy0 < c.OY; ++oy0) conv_fwd_tile_z<T, 1, 1>(c, b, oc0 + o, ox, oy0, oz0, zval, ic0, icn, first);
              }
            }
          }
        }
      }
    }
  });
}

// Generic strided path: per-element gather with bounds checks.
template <class T>
void conv_fwd_generic(const Conv3dGeom& g, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                      Tensor<T>& y) {
  const i64 X = g.x.in, Y = g.y.in, Z = g.z.in;
  const i64 OX = g.x.out, OY = g.y.out, OZ = g.z.out;
  const i64 KX = g.x.k, KY = g.y.k, KZ = g.z.k;
  const T* xd = x.data();
  const T* wd = w.data();
  T* yd = y.data();
  parallel_for(g.batch * g.out_ch, [&](i64 begin, i64 end) {
    for (i64 bo = begin; bo < end; ++bo) {
      const i64 b = bo / g.out_ch, oc = bo % g.out_ch;
      T* yp = yd + ((b * g.out_ch + oc) * OX * OY) * OZ;
      const T bv = bias ? (*bias)[oc] : T{0};
      for (i64 i = 0; i < OX * OY * OZ; ++i) yp[i] = bv;
      for (i64 ic = 0; ic < g.in_ch; ++ic) {
        const T* xp = xd + ((b * g.in_ch + ic) * X * Y) * Z;
        const T* wp = wd + ((oc * g.in_ch + ic) * KX * KY) * KZ;
        for (i64 ox = 0; ox < OX; ++ox) {
          for (i64 oy = 0; oy < OY; ++oy) {
            for (i64 oz = 0; oz < OZ; ++oz) {
              T acc{0};
              for (i64 kx = 0; kx < KX; ++kx) {
                const i64 ix = ox * g.x.s + kx - g.x.pad_before;
                if (ix < 0 || ix >= X) continue;
                for (i64 ky = 0; ky < KY; ++ky) {
                  const i64 iy = oy * g.y.s + ky - g.y.pad_before;
                  if (iy < 0 || iy >= Y) continue;
                  const T* xrow = xp + (ix * Y + iy) * Z;
                  const T* wrow = wp + (kx * KY + ky) * KZ;
                  for (i64 kz = 0; kz < KZ; ++kz) {
                    const i64 iz = oz * g.z.s + kz - g.z.pad_before;
                    if (iz < 0 || iz >= Z) continue;
                    acc += wrow[kz] * xrow[iz];
                  }
                }
              }
              yp[(ox * OY + oy) * OZ + oz] += acc;
            }
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Unit-stride convolution, input gradient (full correlation, gather form).

template <class T, int ZRP, int ICB, int OYB>
void conv_bwd_in_tile(const ConvCtx<T>& c, i64 b, i64 ic0, i64 ix, i64 iy0, i64 iz0, i64 zval, i64 oc0, i64 ocn,
                      bool first) {
  // c.xp holds padded grad_out planes; c.yd is grad_x; OX/OY/OZ are input
  // extents here and padx/pady/padz the forward pads.
  constexpr int NV = ZRP / kLanes;
  Pack<T> acc[ICB][OYB][NV];
  for (int o = 0; o < ICB; ++o) {
    for (int j = 0; j < OYB; ++j) {
      if (first) {
        for (int v = 0; v < NV; ++v) acc[o][j][v] = pack_bcast(T{0});
      } else {
        const T* gx = c.yd + (((b * c.IC + ic0 + o) * c.OX + ix) * c.OY + iy0 + j) * c.OZ + iz0;
        T tmp[ZRP];
        for (i64 i = 0; i < zval; ++i) tmp[i] = gx[i];
        for (i64 i = zval; i < ZRP; ++i) tmp[i] = T{0};
        for (int v = 0; v < NV; ++v) acc[o][j][v] = pack_load(tmp + v * kLanes);
      }
    }
  }
  const i64 wt = c.KX * c.KY * c.KZ;
  const i64 rs = c.xp->rs;
  for (i64 oc = oc0; oc < oc0 + ocn; ++oc) {
    const T* woc = c.wd + (oc * c.IC + ic0) * wt;
    for (i64 kx = 0; kx < c.KX; ++kx) {
      for (i64 ky = 0; ky < c.KY; ++ky) {
        const T* gr0 = c.xp->row(b * c.OC + oc, ix + c.padx - kx, iy0 + c.pady - ky) + iz0 + c.padz;
        const T* wk = woc + (kx * c.KY + ky) * c.KZ;
        for (i64 kz = 0; kz < c.KZ; ++kz) {
          Pack<T> wv[ICB];
          for (int o = 0; o < ICB; ++o) wv[o] = pack_bcast(wk[o * wt + kz]);
          const T* gq = gr0 - kz;
          for (int j = 0; j < OYB; ++j) {
            const T* gr = gq + j * rs;
            for (int v = 0; v < NV; ++v) {
              const Pack<T> gv = pack_load(gr + v * kLanes);
              for (int o = 0; o < ICB; ++o) acc[o][j][v] += wv[o] * gv;
            }
          }
        }
      }
    }
  }
  for (int o = 0; o < ICB; ++o) {
    for (int j = 0; j < OYB; ++j) {
      T tmp[ZRP];
      for (int v = 0; v < NV; ++v) pack_store(tmp + v * kLanes, acc[o][j][v]);
      T* gx = c.yd + (((b * c.IC + ic0 + o) * c.OX + ix) * c.OY + iy0 + j) * c.OZ + iz0;
      for (i64 i = 0; i < zval; ++i) gx[i] = tmp[i];
    }
  }
}

template <class T, int ICB, int OYB>
inline void conv_bwd_in_tile_z(const ConvCtx<T>& c, i64 b, i64 ic0, i64 ix, i64 iy0, i64 iz0, i64 zval, i64 oc0,
                               i64 ocn, bool first) {
  const i64 zrp = round_lanes(zval);
  if (zrp <= 16) {
    conv_bwd_in_tile<T, 16, ICB, OYB>(c, b, ic0, ix, iy0, iz0, zval, oc0, ocn, first);
  } else if (zrp <= 32) {
    conv_bwd_in_tile<T, 32, ICB, OYB>(c, b, ic0, ix, iy0, iz0, zval, oc0, ocn, first);
  } else if (zrp <= 48) {
    conv_bwd_in_tile<T, 48, ICB, OYB>(c, b, ic0, ix, iy0, iz0, zval, oc0, ocn, first);
  } else {
    conv_bwd_in_tile<T, 64, ICB, OYB>(c, b, ic0, ix, iy0, iz0, zval, oc0, ocn, first);
  }
}

template <class T>
void conv_bwd_in_fast(const Conv3dGeom& g, const Tensor<T>& w, const Tensor<T>& grad_out, Tensor<T>& gx) {
  const i64 X = g.x.in, Y = g.y.in, Z = g.z.in;
  const i64 OX = g.x.out, OY = g.y.out, OZ = g.z.out;
  const i64 KX = g.x.k, KY = g.y.k, KZ = g.z.k;
  // grad_out is padded so that ox = ix + pad - kx is always addressable:
  // lo = k-1-pad, hi = pad (and symmetrically for y; z gets k-1-pad zeros in
  // front inside each row).
  const PaddedPlanes<T> gp =
      pad_planes(grad_out.data(), g.batch * g.out_ch, OX, OY, OZ, KX - 1 - g.x.pad_before,
                 std::max<i64>(0, X - 1 + g.x.pad_before - (OX - 1)), KY - 1 - g.y.pad_before,
                 std::max<i64>(0, Y - 1 + g.y.pad_before - (OY - 1)), KZ - 1 - g.z.pad_before, KZ + g.z.pad_before);

  ConvCtx<T> c;
  c.xp = &gp;
  c.wd = w.data();
  c.yd = gx.data();
  c.IC = g.in_ch;
  c.OC = g.out_ch;
  c.KX = KX;
  c.KY = KY;
  c.KZ = KZ;
  c.OX = X;
  c.OY = Y;
  c.OZ = Z;
  c.padx = g.x.pad_before;
  c.pady = g.y.pad_before;
  c.padz = g.z.pad_before;

  parallel_for(g.batch * X, [&](i64 begin, i64 end) {
    for (i64 t = begin; t < end; ++t) {
      const i64 b = t / X, ix = t % X;
      for (i64 oc0 = 0; oc0 < g.out_ch; oc0 += kChanBlock) {
        const i64 ocn = std::min(kChanBlock, g.out_ch - oc0);
        const bool first = oc0 == 0;
        for (i64 ic0 = 0; ic0 < g.in_ch; ic0 += 4) {
          const i64 icb = std::min<i64>(4, g.in_ch - ic0);
          for (i64 iz0 = 0; iz0 < Z; iz0 += kZChunk) {
            const i64 zval = std::min<i64>(kZChunk, Z - iz0);
            const bool pair_y = round_lanes(zval) <= 32;
            i64 iy0 = 0;
            if (icb == 4) {
              if (pair_y) {
                for (; iy0 + 2 <= Y; iy0 += 2) conv_bwd_in_tile_z<T, 4, 2>(c, b, ic0, ix, iy0, iz0, zval, oc0, ocn, first);
              }
              for (; iy0 < Y; ++iy0) conv_bwd_in_tile_z<T, 4, 1>(c, b, ic0, ix, iy0, iz0, zval, oc0, ocn, first);
            } else {
              for (i64 o = 0; o < icb; ++o) {
                iy0 = 0;
                if (pair_y) {
                  for (; iy0 + 2 <= Y; iy0 += 2) {
                    conv_bwd_in_tile_z<T, 1, 2>(c, b, ic0 + o, ix, iy0, iz0, zval, oc0, ocn, first);
                  }
                }
                for (; iy0 < Y; ++iy0) conv_bwd_in_tile_z<T, 1, 1>(c, b, ic0 + o, ix, iy0, iz0, zval, oc0, ocn, first);
              }
            }
          }
        }
      }
    }
  });
}

template <class T>
void conv_bwd_in_generic(const Conv3dGeom& g, const Tensor<T>& w, const Tensor<T>& grad_out, Tensor<T>& gx) {
  const i64 X = g.x.in, Y = g.y.in, Z = g.z.in;
  const i64 OX = g.x.out, OY = g.y.out, OZ = g.z.out;
  const i64 KX = g.x.k, KY = g.y.k, KZ = g.z.k;
  const T* wd = w.data();
  const T* gyd = grad_out.data();
  T* gxd = gx.data();
  parallel_for(g.batch * g.in_ch, [&](i64 begin, i64 end) {
    for (i64 bi = begin; bi < end; ++bi) {
      const i64 b = bi / g.in_ch, ic = bi % g.in_ch;
      T* gxp = gxd + ((b * g.in_ch + ic) * X * Y) * Z;
      for (i64 oc = 0; oc < g.out_ch; ++oc) {
        const T* gyp = gyd + ((b * g.out_ch + oc) * OX * OY) * OZ;
        const T* wp = wd + ((oc * g.in_ch + ic) * KX * KY) * KZ;
        for (i64 ox = 0; ox < OX; ++ox) {
          const i64 ix0 = ox * g.x.s - g.x.pad_before;
          const i64 kx_lo = std::max<i64>(0, -ix0);
          const i64 kx_hi = std::min<i64>(KX, X - ix0);
          for (i64 oy = 0; oy < OY; ++oy) {
            const i64 iy0 = oy * g.y.s - g.y.pad_before;
            const i64 ky_lo = std::max<i64>(0, -iy0);
            const i64 ky_hi = std::min<i64>(KY, Y - iy0);
            const T* gyrow = gyp + (ox * OY + oy) * OZ;
            for (i64 oz = 0; oz < OZ; ++oz) {
              const T gv = gyrow[oz];
              const i64 iz0 = oz * g.z.s - g.z.pad_before;
              const i64 kz_lo = std::max<i64>(0, -iz0);
              const i64 kz_hi = std::min<i64>(KZ, Z - iz0);
              for (i64 kx = kx_lo; kx < kx_hi; ++kx) {
                for (i64 ky = ky_lo; ky < ky_hi; ++ky) {
                  T* gxrow = gxp + ((ix0 + kx) * Y + (iy0 + ky)) * Z + iz0;
                  const T* wrow = wp + (kx * KY + ky) * KZ;
                  for (i64 kz = kz_lo; kz < kz_hi; ++kz) gxrow[kz] += gv * wrow[kz];
                }
              }
            }
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Unit-stride convolution, weight gradient. One streaming pass per (oc, ic)
// pair; per-tap accumulators hold 16 double lanes (lane = z mod 16) combined
// in ascending order at the end.

template <class T>
void conv_bwd_w_fast(const Conv3dGeom& g, const Tensor<T>& x, const Tensor<T>& grad_out, Tensor<T>& gw) {
  const i64 X = g.x.in, Y = g.y.in, Z = g.z.in;
  const i64 OX = g.x.out, OY = g.y.out, OZ = g.z.out;
  const i64 KX = g.x.k, KY = g.y.k, KZ = g.z.k;
  const i64 xhi = std::max<i64>(0, OX - 1 + KX - 1 - g.x.pad_before - (X - 1));
  const i64 yhi = std::max<i64>(0, OY - 1 + KY - 1 - g.y.pad_before - (Y - 1));
  const PaddedPlanes<T> xp =
      pad_planes(x.data(), g.batch * g.in_ch, X, Y, Z, g.x.pad_before, xhi, g.y.pad_before, yhi, g.z.pad_before,
                 KZ + kZChunk);
  const T* gyd = grad_out.data();
  T* gwd = gw.data();
  // Cap the per-chunk tap table so it stays L1-resident.
  i64 kx_chunk = std::max<i64>(1, 384 / std::max<i64>(1, KY * KZ));
  kx_chunk = std::min(kx_chunk, KX);

  parallel_for(g.out_ch * g.in_ch, [&](i64 begin, i64 end) {
    std::vector<double> acc(static_cast<std::size_t>(kx_chunk * KY * KZ * kLanes));
    for (i64 oi = begin; oi < end; ++oi) {
      const i64 oc = oi / g.in_ch, ic = oi % g.in_ch;
      T* gwp = gwd + ((oc * g.in_ch + ic) * KX * KY) * KZ;
      for (i64 kx0 = 0; kx0 < KX; kx0 += kx_chunk) {
        const i64 kxn = std::min(kx_chunk, KX - kx0);
        std::fill(acc.begin(), acc.begin() + kxn * KY * KZ * kLanes, 0.0);
        for (i64 b = 0; b < g.batch; ++b) {
          const i64 xplane = b * g.in_ch + ic;
          const T* gyp = gyd + ((b * g.out_ch + oc) * OX * OY) * OZ;
          for (i64 ox = 0; ox < OX; ++ox) {
            for (i64 oy = 0; oy < OY; ++oy) {
              const T* gyr = gyp + (ox * OY + oy) * OZ;
              for (i64 oz0 = 0; oz0 < OZ; oz0 += kLanes) {
                const i64 zn = std::min<i64>(kLanes, OZ - oz0);
                double gd[kLanes];
                for (i64 i = 0; i < zn; ++i) gd[i] = static_cast<double>(gyr[oz0 + i]);
                for (i64 i = zn; i < kLanes; ++i) gd[i] = 0.0;
                const PackH gd0 = packh_load(gd);
                const PackH gd1 = packh_load(gd + kHalf);
                for (i64 dkx = 0; dkx < kxn; ++dkx) {
                  const i64 kx = kx0 + dkx;
                  for (i64 ky = 0; ky < KY; ++ky) {
                    const T* xr0 = xp.row(xplane, ox + kx - g.x.pad_before, oy + ky - g.y.pad_before) + oz0 -
                                   g.z.pad_before;
                    double* ar = acc.data() + ((dkx * KY + ky) * KZ) * kLanes;
                    for (i64 kz = 0; kz < KZ; ++kz) {
                      double* a = ar + kz * kLanes;
                      PackH a0 = packh_load(a);
                      PackH a1 = packh_load(a + kHalf);
                      a0 += gd0 * packh_cvt(xr0 + kz);
                      a1 += gd1 * packh_cvt(xr0 + kz + kHalf);
                      packh_store(a, a0);
                      packh_store(a + kHalf, a1);
                    }
                  }
                }
              }
            }
          }
        }
        for (i64 dkx = 0; dkx < kxn; ++dkx) {
          for (i64 ky = 0; ky < KY; ++ky) {
            for (i64 kz = 0; kz < KZ; ++kz) {
              const double* a = acc.data() + ((dkx * KY + ky) * KZ + kz) * kLanes;
              double s = 0.0;
              for (i64 i = 0; i < kLanes; ++i) s += a[i];
              gwp[((kx0 + dkx) * KY + ky) * KZ + kz] = static_cast<T>(s);
            }
          }
        }
      }
    }
  });
}

template <class T>
void conv_bwd_w_generic(const Conv3dGeom& g, const Tensor<T>& x, const Tensor<T>& grad_out, Tensor<T>& gw) {
  const i64 X = g.x.in, Y = g.y.in, Z = g.z.in;
  const i64 OX = g.x.out, OY = g.y.out, OZ = g.z.out;
  const i64 KX = g.x.k, KY = g.y.k, KZ = g.z.k;
  const T* xd = x.data();
  const T* gyd = grad_out.data();
  T* gwd = gw.data();
  parallel_for(g.out_ch * g.in_ch, [&](i64 begin, i64 end) {
    for (i64 oi = begin; oi < end; ++oi) {
      const i64 oc = oi / g.in_ch, ic = oi % g.in_ch;
      T* gwp = gwd + ((oc * g.in_ch + ic) * KX * KY) * KZ;
      for (i64 kx = 0; kx < KX; ++kx) {
        for (i64 ky = 0; ky < KY; ++ky) {
          for (i64 kz = 0; kz < KZ; ++kz) {
            double acc = 0.0;
            for (i64 b = 0; b < g.batch; ++b) {
              const T* xp = xd + ((b * g.in_ch + ic) * X * Y) * Z;
              const T* gyp = gyd + ((b * g.out_ch + oc) * OX * OY) * OZ;
              for (i64 ox = 0; ox < OX; ++ox) {
                const i64 ix = ox * g.x.s + kx - g.x.pad_before;
                if (ix < 0 || ix >= X) continue;
                for (i64 oy = 0; oy < OY; ++oy) {
                  const i64 iy = oy * g.y.s + ky - g.y.pad_before;
                  if (iy < 0 || iy >= Y) continue;
                  const T* gyrow = gyp + (ox * OY + oy) * OZ;
                  const T* xrow = xp + (ix * Y + iy) * Z;
                  for (i64 oz = 0; oz < OZ; ++oz) {
                    const i64 iz = oz * g.z.s + kz - g.z.pad_before;
                    if (iz < 0 || iz >= Z) continue;
                    acc += static_cast<double>(gyrow[oz]) * static_cast<double>(xrow[iz]);
                  }
                }
              }
            }
            gwp[(kx * KY + ky) * KZ + kz] = static_cast<T>(acc);
          }
        }
      }
    }
  });
}

}  // namespace detail

// Cross-correlation + bias. Output shape (b, oc, out_x, out_y, out_z).
template <class T>
Tensor<T> conv3d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, std::array<i64, 3> stride,
                         Pad pad) {
  const Conv3dGeom g = conv3d_geom(x, w, stride, pad);
  if (bias && bias->numel() != g.out_ch) throw ShapeError("conv3d: bias length must equal out channels");
  Tensor<T> y({g.batch, g.out_ch, g.x.out, g.y.out, g.z.out});
  const bool unit_stride = g.x.s == 1 && g.y.s == 1 && g.z.s == 1;
  if (unit_stride && g.z.k <= detail::kLanes) {
    detail::conv_fwd_fast(g, x, w, bias, y);
  } else {
    detail::conv_fwd_generic(g, x, w, bias, y);
  }
  return y;
}

// Gradient of conv3d w.r.t. its input.
template <class T>
Tensor<T> conv3d_backward_input(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& grad_out,
                                std::array<i64, 3> stride, Pad pad) {
  const Conv3dGeom g = conv3d_geom(x, w, stride, pad);
  Tensor<T> gx(x.shape());
  const bool unit_stride = g.x.s == 1 && g.y.s == 1 && g.z.s == 1;
  if (unit_stride && g.z.k <= detail::kLanes) {
    detail::conv_bwd_in_fast(g, w, grad_out, gx);
  } else {
    detail::conv_bwd_in_generic(g, w, grad_out, gx);
  }
  return gx;
}

// Gradient of conv3d w.r.t. weights.
template <class T>
Tensor<T> conv3d_backward_weight(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& grad_out,
                                 std::array<i64, 3> stride, Pad pad) {
  const Conv3dGeom g = conv3d_geom(x, w, stride, pad);
  Tensor<T> gw(w.shape());
  const bool unit_stride = g.x.s == 1 && g.y.s == 1 && g.z.s == 1;
  if (unit_stride && g.z.k <= detail::kLanes) {
    detail::conv_bwd_w_fast(g, x, grad_out, gw);
  } else {
    detail::conv_bwd_w_generic(g, x, grad_out, gw);
  }
  return gw;
}

// Sum of grad_out over (batch, spatial) per output channel.
template <class T>
Tensor<T> sum_over_channel(const Tensor<T>& grad_out) {
  const i64 B = grad_out.extent(0), C = grad_out.extent(1);
  const i64 S = grad_out.numel() / std::max<i64>(1, B * C);
  Tensor<T> gb({C});
  const T* gd = grad_out.data();
  for (i64 c = 0; c < C; ++c) {
    double acc = 0.0;
    for (i64 b = 0; b < B; ++b) {
      const T* row = gd + (b * C + c) * S;
      for (i64 i = 0; i < S; ++i) acc += static_cast<double>(row[i]);
    }
    gb[c] = static_cast<T>(acc);
  }
  return gb;
}

namespace detail {

// ---------------------------------------------------------------------------
// Transposed convolution, forward: gather form decomposed by output phase.
// Output element (ox,oy,oz) receives taps k with (o + pad - k) divisible by
// the factor; for a fixed phase those taps read a contiguous z run of the
// input, so each phase accumulates like a unit-stride conv.

template <class T>
struct DeconvCtx {
  const PaddedPlanes<T>* xp = nullptr;
  const T* wd = nullptr;
  const T* bias = nullptr;
  T* yd = nullptr;
  i64 IC = 0, OC = 0, KX = 0, KY = 0, KZ = 0;
  i64 X = 0, Y = 0, Z = 0, OX = 0, OY = 0, OZ = 0;
  i64 fx = 1, fy = 1, fz = 1;
  i64 padx = 0, pady = 0, padz = 0;
};

// Phase tile. Phase (px,py,pz) holds the output elements
// (px - padx + fx*r, py - pady + fy*s, pz - padz + fz*t); its taps are
// k = (px + fx*u, py + fy*v, pz + fz*w) reading x[r-u, s-v, t-w], so each
// phase accumulates like a unit-stride conv with a subsampled kernel. One
// call covers OCB output channels and OYB consecutive s rows for a fixed
// (ox = px - padx + fx*rx) and one t chunk.
template <class T, int ZRP, int OCB, int OYB>
void deconv_fwd_tile(const DeconvCtx<T>& c, i64 b, i64 oc0, i64 ox, i64 rx, i64 px, i64 py, i64 s0, i64 pz, i64 t0,
                     i64 tn) {
  constexpr int NV = ZRP / kLanes;
  Pack<T> acc[OCB][OYB][NV];
  for (int o = 0; o < OCB; ++o) {
    const Pack<T> bv = pack_bcast(c.bias ? c.bias[oc0 + o] : T{0});
    for (int j = 0; j < OYB; ++j) {
      for (int v = 0; v < NV; ++v) acc[o][j][v] = bv;
    }
  }
  const i64 UX = (c.KX > px) ? (c.KX - px + c.fx - 1) / c.fx : 0;
  const i64 UY = (c.KY > py) ? (c.KY - py + c.fy - 1) / c.fy : 0;
  const i64 UZ = (c.KZ > pz) ? (c.KZ - pz + c.fz - 1) / c.fz : 0;
  const i64 wt = c.KX * c.KY * c.KZ;
  const i64 rs = c.xp->rs;
  for (i64 ic = 0; ic < c.IC; ++ic) {
    const T* wic = c.wd + (ic * c.OC + oc0) * wt;
    for (i64 u = 0; u < UX; ++u) {
      for (i64 v = 0; v < UY; ++v) {
        const T* xr0 = c.xp->row(b * c.IC + ic, rx - u, s0 - v) + t0;
        const T* wk = wic + ((px + u * c.fx) * c.KY + (py + v * c.fy)) * c.KZ + pz;
        for (i64 w = 0; w < UZ; ++w) {
          Pack<T> wv[OCB];
          for (int o = 0; o < OCB; ++o) wv[o] = pack_bcast(wk[o * wt + w * c.fz]);
          const T* xq = xr0 - w;
          for (int j = 0; j < OYB; ++j) {
            const T* xr = xq + j * rs;
            for (int n = 0; n < NV; ++n) {
              const Pack<T> xv = pack_load(xr + n * kLanes);
              for (int o = 0; o < OCB; ++o) acc[o][j][n] += wv[o] * xv;
            }
          }
        }
      }
    }
  }
  for (int o = 0; o < OCB; ++o) {
    for (int j = 0; j < OYB; ++j) {
      T tmp[ZRP];
      for (int v = 0; v < NV; ++v) pack_store(tmp + v * kLanes, acc[o][j][v]);
      T* yr = c.yd + (((b * c.OC + oc0 + o) * c.OX + ox) * c.OY + (py - c.pady + c.fy * (s0 + j))) * c.OZ;
      for (i64 t = 0; t < tn; ++t) yr[pz - c.padz + c.fz * (t0 + t)] = tmp[t];
    }
  }
}

template <class T, int OCB, int OYB>
inline void deconv_fwd_tile_z(const DeconvCtx<T>& c, i64 b, i64 oc0, i64 ox, i64 rx, i64 px, i64 py, i64 s0, i64 pz,
                              i64 t0, i64 tn) {
  const i64 zrp = round_lanes(tn);
  if (zrp <= 16) {
    deconv_fwd_tile<T, 16, OCB, OYB>(c, b, oc0, ox, rx, px, py, s0, pz, t0, tn);
  } else if (zrp <= 32) {
    deconv_fwd_tile<T, 32, OCB, OYB>(c, b, oc0, ox, rx, px, py, s0, pz, t0, tn);
  } else if (zrp <= 48) {
    deconv_fwd_tile<T, 48, OCB, OYB>(c, b, oc0, ox, rx, px, py, s0, pz, t0, tn);
  } else {
    deconv_fwd_tile<T, 64, OCB, OYB>(c, b, oc0, ox, rx, px, py, s0, pz, t0, tn);
  }
}

template <class T>
void deconv_fwd(const Conv3dGeom& g, std::array<i64, 3> factor, const Tensor<T>& x, const Tensor<T>& w,
                const Tensor<T>* bias, Tensor<T>& y) {
  const i64 X = g.x.in, Y = g.y.in, Z = g.z.in;
  const i64 fx = factor[0], fy = factor[1], fz = factor[2];
  const i64 xsl = (g.x.k + fx - 1) / fx;
  const i64 ysl = (g.y.k + fy - 1) / fy;
  const i64 zsl = (g.z.k + fz - 1) / fz;
  const PaddedPlanes<T> xp =
      pad_planes(x.data(), g.batch * g.in_ch, X, Y, Z, xsl, xsl + 1, ysl, ysl + 4, zsl, zsl + 1);

  DeconvCtx<T> c;
  c.xp = &xp;
  c.wd = w.data();
  c.bias = bias ? bias->data() : nullptr;
  c.yd = y.data();
  c.IC = g.in_ch;
  c.OC = g.out_ch;
  c.KX = g.x.k;
  c.KY = g.y.k;
  c.KZ = g.z.k;
  c.X = X;
  c.Y = Y;
  c.Z = Z;
  c.OX = g.x.out;
  c.OY = g.y.out;
  c.OZ = g.z.out;
  c.fx = fx;
  c.fy = fy;
  c.fz = fz;
  c.padx = g.x.pad_before;
  c.pady = g.y.pad_before;
  c.padz = g.z.pad_before;

  parallel_for(g.batch * c.OX, [&](i64 begin, i64 end) {
    for (i64 task = begin; task < end; ++task) {
      const i64 b = task / c.OX, ox = task % c.OX;
      const i64 px = (ox + c.padx) % fx;
      const i64 rx = (ox + c.padx) / fx;
      for (i64 oc0 = 0; oc0 < c.OC; oc0 += 4) {
        const i64 ocb = std::min<i64>(4, c.OC - oc0);
        for (i64 py = 0; py < fy; ++py) {
          const i64 s_lo = floor_div(c.pady - py + fy - 1, fy);
          const i64 s_hi = floor_div(c.OY - 1 - py + c.pady, fy) + 1;
          if (s_lo >= s_hi) continue;
          for (i64 pz = 0; pz < fz; ++pz) {
            const i64 t_lo = floor_div(c.padz - pz + fz - 1, fz);
            const i64 t_hi = floor_div(c.OZ - 1 - pz + c.padz, fz) + 1;
            if (t_lo >= t_hi) continue;
            for (i64 tc = t_lo; tc < t_hi; tc += kZChunk) {
              const i64 tn = std::min<i64>(kZChunk, t_hi - tc);
              const bool pair_s = round_lanes(tn) <= 32;
              i64 s = s_lo;
              if (ocb == 4) {
                if (pair_s) {
                  for (; s + 2 <= s_hi; s += 2) deconv_fwd_tile_z<T, 4, 2>(c, b, oc0, ox, rx, px, py, s, pz, tc, tn);
                }
                for (; s < s_hi; ++s) deconv_fwd_tile_z<T, 4, 1>(c, b, oc0, ox, rx, px, py, s, pz, tc, tn);
              } else {
                for (i64 o = 0; o < ocb; ++o) {
                  s = s_lo;
                  if (pair_s) {
                    for (; s + 4 <= s_hi; s += 4) {
                      deconv_fwd_tile_z<T, 1, 4>(c, b, oc0 + o, ox, rx, px, py, s, pz, tc, tn);
                    }
                    for (; s + 2 <= s_hi; s += 2) {
                      deconv_fwd_tile_z<T, 1, 2>(c, b, oc0 + o, ox, rx, px, py, s, pz, tc, tn);
                    }
                  }
                  for (; s < s_hi; ++s) deconv_fwd_tile_z<T, 1, 1>(c, b, oc0 + o, ox, rx, px, py, s, pz, tc, tn);
                }
              }
            }
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Transposed convolution, input gradient: the forward strided-conv gather
// gx[i] = sum_k gy[i*f + k - pad] w[k], with grad_out phase-split along z so
// the inner loops stay contiguous.

// IYB consecutive input y rows share the tap set; row iy+j reads grad rows
// shifted by j*fy, a fixed address stride in the phase-split buffer.
template <class T, int ZRP, int ICB, int IYB>
void deconv_bwd_in_tile(const DeconvCtx<T>& c, i64 b, i64 ic0, i64 ix, i64 iy, i64 iz0, i64 zval) {
  constexpr int NV = ZRP / kLanes;
  Pack<T> acc[ICB][IYB][NV];
  for (int o = 0; o < ICB; ++o) {
    for (int j = 0; j < IYB; ++j) {
      for (int v = 0; v < NV; ++v) acc[o][j][v] = pack_bcast(T{0});
    }
  }
  const i64 wt = c.KX * c.KY * c.KZ;
  const i64 wstride = c.OC * wt;
  const i64 ystride = c.fy * c.xp->phases * c.xp->rs;
  // Phase and offset of each z tap: kz - padz = q*fz + p with p in [0, fz).
  i64 q0 = floor_div(-c.padz, c.fz);
  i64 p0 = -c.padz - q0 * c.fz;
  for (i64 oc = 0; oc < c.OC; ++oc) {
    const T* woc = c.wd + (ic0 * c.OC + oc) * wt;
    for (i64 kx = 0; kx < c.KX; ++kx) {
      const i64 ox = ix * c.fx + kx - c.padx;
      for (i64 ky = 0; ky < c.KY; ++ky) {
        const i64 oy = iy * c.fy + ky - c.pady;
        const T* wk = woc + (kx * c.KY + ky) * c.KZ;
        const T* gbase = c.xp->row_phase(b * c.OC + oc, ox, oy, 0) + iz0;
        const i64 prs = c.xp->rs;
        for (i64 kz = 0, q = q0, p = p0; kz < c.KZ; ++kz) {
          const T* gr = gbase + p * prs + q;
          Pack<T> wv[ICB];
          for (int o = 0; o < ICB; ++o) wv[o] = pack_bcast(wk[o * wstride + kz]);
          for (int j = 0; j < IYB; ++j) {
            const T* gj = gr + j * ystride;
            for (int v = 0; v < NV; ++v) {
              const Pack<T> gv = pack_load(gj + v * kLanes);
              for (int o = 0; o < ICB; ++o) acc[o][j][v] += wv[o] * gv;
            }
          }
          if (++p == c.fz) {
            p = 0;
            ++q;
          }
        }
      }
    }
  }
  for (int o = 0; o < ICB; ++o) {
    for (int j = 0; j < IYB; ++j) {
      T tmp[ZRP];
      for (int v = 0; v < NV; ++v) pack_store(tmp + v * kLanes, acc[o][j][v]);
      T* gx = c.yd + (((b * c.IC + ic0 + o) * c.X + ix) * c.Y + iy + j) * c.Z + iz0;
      for (i64 i = 0; i < zval; ++i) gx[i] = tmp[i];
    }
  }
}

template <class T, int ICB, int IYB>
inline void deconv_bwd_in_tile_z(const DeconvCtx<T>& c, i64 b, i64 ic0, i64 ix, i64 iy, i64 iz0, i64 zval) {
  const i64 zrp = round_lanes(zval);
  if (zrp <= 16) {
    deconv_bwd_in_tile<T, 16, ICB, IYB>(c, b, ic0, ix, iy, iz0, zval);
  } else if (zrp <= 32) {
    deconv_bwd_in_tile<T, 32, ICB, IYB>(c, b, ic0, ix, iy, iz0, zval);
  } else if (zrp <= 48) {
    deconv_bwd_in_tile<T, 48, ICB, IYB>(c, b, ic0, ix, iy, iz0, zval);
  } else {
    deconv_bwd_in_tile<T, 64, ICB, IYB>(c, b, ic0, ix, iy, iz0, zval);
  }
}

template <class T>
void deconv_bwd_in(const Conv3dGeom& g, std::array<i64, 3> factor, const Tensor<T>& w, const Tensor<T>& grad_out,
                   Tensor<T>& gx) {
  const i64 X = g.x.in, Y = g.y.in, Z = g.z.in;
  const i64 OX = g.x.out, OY = g.y.out, OZ = g.z.out;
  const i64 fx = factor[0], fy = factor[1], fz = factor[2];
  const i64 xlo = g.x.pad_before;
  const i64 xhi = std::max<i64>(0, (X - 1) * fx + g.x.k - 1 - g.x.pad_before - (OX - 1));
  const i64 ylo = g.y.pad_before;
  const i64 yhi = std::max<i64>(0, (Y - 1) * fy + g.y.k - 1 - g.y.pad_before - (OY - 1)) + fy;
  const i64 zslack = (g.z.k + fz - 1) / fz + 1;
  const PaddedPlanes<T> gp =
      pad_planes_phased(grad_out.data(), g.batch * g.out_ch, OX, OY, OZ, fz, xlo, xhi, ylo, yhi, zslack, zslack);

  DeconvCtx<T> c;
  c.xp = &gp;
  c.wd = w.data();
  c.yd = gx.data();
  c.IC = g.in_ch;
  c.OC = g.out_ch;
  c.KX = g.x.k;
  c.KY = g.y.k;
  c.KZ = g.z.k;
  c.X = X;
  c.Y = Y;
  c.Z = Z;
  c.OX = OX;
  c.OY = OY;
  c.OZ = OZ;
  c.fx = fx;
  c.fy = fy;
  c.fz = fz;
  c.padx = g.x.pad_before;
  c.pady = g.y.pad_before;
  c.padz = g.z.pad_before;

  parallel_for(g.batch * X, [&](i64 begin, i64 end) {
    for (i64 t = begin; t < end; ++t) {
      const i64 b = t / X, ix = t % X;
      for (i64 ic0 = 0; ic0 < g.in_ch; ic0 += 4) {
        const i64 icb = std::min<i64>(4, g.in_ch - ic0);
        for (i64 iz0 = 0; iz0 < Z; iz0 += kZChunk) {
          const i64 zval = std::min<i64>(kZChunk, Z - iz0);
          const bool pair_y = round_lanes(zval) <= 32;
          i64 iy = 0;
          if (icb == 4) {
            if (pair_y) {
              for (; iy + 2 <= Y; iy += 2) deconv_bwd_in_tile_z<T, 4, 2>(c, b, ic0, ix, iy, iz0, zval);
            }
            for (; iy < Y; ++iy) deconv_bwd_in_tile_z<T, 4, 1>(c, b, ic0, ix, iy, iz0, zval);
          } else {
            for (i64 o = 0; o < icb; ++o) {
              iy = 0;
              if (pair_y) {
                for (; iy + 2 <= Y; iy += 2) deconv_bwd_in_tile_z<T, 1, 2>(c, b, ic0 + o, ix, iy, iz0, zval);
              }
              for (; iy < Y; ++iy) deconv_bwd_in_tile_z<T, 1, 1>(c, b, ic0 + o, ix, iy, iz0, zval);
            }
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Transposed convolution, weight gradient: gw[ic,oc,k] = sum over input
// positions of x[i] * gy[i*f + k - pad]. Streams x against phase-split
// grad_out with 16 fixed double lanes per tap (lane = input z mod 16).

template <class T>
void deconv_bwd_w(const Conv3dGeom& g, std::array<i64, 3> factor, const Tensor<T>& x, const Tensor<T>& grad_out,
                  Tensor<T>& gw) {
  const i64 X = g.x.in, Y = g.y.in, Z = g.z.in;
  const i64 OX = g.x.out, OY = g.y.out, OZ = g.z.out;
  const i64 KX = g.x.k, KY = g.y.k, KZ = g.z.k;
  const i64 fx = factor[0], fy = factor[1], fz = factor[2];
  const i64 xlo = g.x.pad_before;
  const i64 xhi = std::max<i64>(0, (X - 1) * fx + KX - 1 - g.x.pad_before - (OX - 1));
  const i64 ylo = g.y.pad_before;
  const i64 yhi = std::max<i64>(0, (Y - 1) * fy + KY - 1 - g.y.pad_before - (OY - 1));
  const i64 zslack = (KZ + fz - 1) / fz + 1 + kZChunk;
  const PaddedPlanes<T> gp =
      pad_planes_phased(grad_out.data(), g.batch * g.out_ch, OX, OY, OZ, fz, xlo, xhi, ylo, yhi, zslack, zslack);
  const T* xd = x.data();
  T* gwd = gw.data();
  i64 kx_chunk = std::max<i64>(1, 384 / std::max<i64>(1, KY * KZ));
  kx_chunk = std::min(kx_chunk, KX);

  parallel_for(g.in_ch * g.out_ch, [&](i64 begin, i64 end) {
    std::vector<double> acc(static_cast<std::size_t>(kx_chunk * KY * KZ * kLanes));
    for (i64 io = begin; io < end; ++io) {
      const i64 ic = io / g.out_ch, oc = io % g.out_ch;
      T* gwp = gwd + ((ic * g.out_ch + oc) * KX * KY) * KZ;
      for (i64 kx0 = 0; kx0 < KX; kx0 += kx_chunk) {
        const i64 kxn = std::min(kx_chunk, KX - kx0);
        std::fill(acc.begin(), acc.begin() + kxn * KY * KZ * kLanes, 0.0);
        for (i64 b = 0; b < g.batch; ++b) {
          const T* xp = xd + ((b * g.in_ch + ic) * X * Y) * Z;
          const i64 gplane = b * g.out_ch + oc;
          for (i64 ix = 0; ix < X; ++ix) {
            for (i64 iy = 0; iy < Y; ++iy) {
              const T* xr = xp + (ix * Y + iy) * Z;
              for (i64 iz0 = 0; iz0 < Z; iz0 += kLanes) {
                const i64 zn = std::min<i64>(kLanes, Z - iz0);
                double xv[kLanes];
                for (i64 i = 0; i < zn; ++i) xv[i] = static_cast<double>(xr[iz0 + i]);
                for (i64 i = zn; i < kLanes; ++i) xv[i] = 0.0;
                const PackH xv0 = packh_load(xv);
                const PackH xv1 = packh_load(xv + kHalf);
                const i64 q0 = floor_div(-g.z.pad_before, fz);
                const i64 p0 = -g.z.pad_before - q0 * fz;
                for (i64 dkx = 0; dkx < kxn; ++dkx) {
                  const i64 kx = kx0 + dkx;
                  const i64 ox = ix * fx + kx - g.x.pad_before;
                  for (i64 ky = 0; ky < KY; ++ky) {
                    const i64 oy = iy * fy + ky - g.y.pad_before;
                    const T* gbase = gp.row_phase(gplane, ox, oy, 0) + iz0;
                    double* ar = acc.data() + ((dkx * KY + ky) * KZ) * kLanes;
                    for (i64 kz = 0, q = q0, p = p0; kz < KZ; ++kz) {
                      const T* gr = gbase + p * gp.rs + q;
                      double* a = ar + kz * kLanes;
                      PackH a0 = packh_load(a);
                      PackH a1 = packh_load(a + kHalf);
                      a0 += xv0 * packh_cvt(gr);
                      a1 += xv1 * packh_cvt(gr + kHalf);
                      packh_store(a, a0);
                      packh_store(a + kHalf, a1);
                      if (++p == fz) {
                        p = 0;
                        ++q;
                      }
                    }
                  }
                }
              }
            }
          }
        }
        for (i64 dkx = 0; dkx < kxn; ++dkx) {
          for (i64 ky = 0; ky < KY; ++ky) {
            for (i64 kz = 0; kz < KZ; ++kz) {
              const double* a = acc.data() + ((dkx * KY + ky) * KZ + kz) * kLanes;
              double s = 0.0;
              for (i64 i = 0; i < kLanes; ++i) s += a[i];
              gwp[((kx0 + dkx) * KY + ky) * KZ + kz] = static_cast<T>(s);
            }
          }
        }
      }
    }
  });
}

}  // namespace detail

// Transposed convolution: the exact adjoint of conv3d with SAME padding and
// stride == factor, plus bias. Output extent = input extent * factor.
template <class T>
Tensor<T> deconv3d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, std::array<i64, 3> factor) {
  const Conv3dGeom g = deconv3d_geom(x, w, factor);
  if (bias && bias->numel() != g.out_ch) throw ShapeError("deconv3d: bias length must equal out channels");
  Tensor<T> y({g.batch, g.out_ch, g.x.out, g.y.out, g.z.out});
  detail::deconv_fwd(g, factor, x, w, bias, y);
  return y;
}

// Gradient of deconv3d w.r.t. its input: the forward strided-conv gather.
template <class T>
Tensor<T> deconv3d_backward_input(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& grad_out,
                                  std::array<i64, 3> factor) {
  const Conv3dGeom g = deconv3d_geom(x, w, factor);
  Tensor<T> gx(x.shape());
  detail::deconv_bwd_in(g, factor, w, grad_out, gx);
  return gx;
}

template <class T>
Tensor<T> deconv3d_backward_weight(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& grad_out,
                                   std::array<i64, 3> factor) {
  const Conv3dGeom g = deconv3d_geom(x, w, factor);
  Tensor<T> gw(w.shape());
  detail::deconv_bwd_w(g, factor, x, grad_out, gw);
  return gw;
}

// Non-overlapping block means. Every spatial extent must divide by its window.
template <class T>
Tensor<T> avgpool3d_forward(const Tensor<T>& x, std::array<i64, 3> window) {
  if (x.ndim() != 5) throw ShapeError("avgpool3d: input must be 5-d (b,c,x,y,z)");
  const i64 B = x.extent(0), C = x.extent(1), X = x.extent(2), Y = x.extent(3), Z = x.extent(4);
  const auto [wx, wy, wz] = window;
  if (wx < 1 || wy < 1 || wz < 1) throw ShapeError("avgpool3d: window extents must be >= 1");
  if (X % wx || Y % wy || Z % wz) {
    throw ShapeError("avgpool3d: extents " + shape_str({X, Y, Z}) + " not divisible by window " +
                     shape_str({wx, wy, wz}));
  }
  const i64 OX = X / wx, OY = Y / wy, OZ = Z / wz;
  Tensor<T> y({B, C, OX, OY, OZ});
  const T inv = T{1} / static_cast<T>(wx * wy * wz);
  const T* xd = x.data();
  T* yd = y.data();
  parallel_for(B * C, [&](i64 begin, i64 end) {
    for (i64 bc = begin; bc < end; ++bc) {
      const T* xp = xd + bc * X * Y * Z;
      T* yp = yd + bc * OX * OY * OZ;
      for (i64 ox = 0; ox < OX; ++ox) {
        for (i64 oy = 0; oy < OY; ++oy) {
          for (i64 oz = 0; oz < OZ; ++oz) {
            T acc{0};
            for (i64 dx = 0; dx < wx; ++dx) {
              for (i64 dy = 0; dy < wy; ++dy) {
                const T* xrow = xp + ((ox * wx + dx) * Y + (oy * wy + dy)) * Z + oz * wz;
                for (i64 dz = 0; dz < wz; ++dz) acc += xrow[dz];
              }
            }
            yp[(ox * OY + oy) * OZ + oz] = acc * inv;
          }
        }
      }
    }
  });
  return y;
}

template <class T>
Tensor<T> avgpool3d_backward(const Tensor<T>& x, const Tensor<T>& grad_out, std::array<i64, 3> window) {
  const i64 B = x.extent(0), C = x.extent(1), X = x.extent(2), Y = x.extent(3), Z = x.extent(4);
  const auto [wx, wy, wz] = window;
  const i64 OX = X / wx, OY = Y / wy, OZ = Z / wz;
  Tensor<T> gx(x.shape());
  const T inv = T{1} / static_cast<T>(wx * wy * wz);
  const T* gd = grad_out.data();
  T* gxd = gx.data();
  parallel_for(B * C, [&](i64 begin, i64 end) {
    for (i64 bc = begin; bc < end; ++bc) {
      const T* gp = gd + bc * OX * OY * OZ;
      T* gxp = gxd + bc * X * Y * Z;
      for (i64 ox = 0; ox < OX; ++ox) {
        for (i64 oy = 0; oy < OY; ++oy) {
          for (i64 oz = 0; oz < OZ; ++oz) {
            const T gv = gp[(ox * OY + oy) * OZ + oz] * inv;
            for (i64 dx = 0; dx < wx; ++dx) {
              for (i64 dy = 0; dy < wy; ++dy) {
                T* gxrow = gxp + ((ox * wx + dx) * Y + (oy * wy + dy)) * Z + oz * wz;
                for (i64 dz = 0; dz < wz; ++dz) gxrow[dz] = gv;
              }
            }
          }
        }
      }
    }
  });
  return gx;
}

}  // namespace isosr
