#include <array>
#include <random>

#include "doctest.h"
#include "isosr/conv_kernels.hpp"
#include "test_util.hpp"

using namespace isosr;

namespace {

// Direct-summation references. Geometry is re-derived here from the closed
// forms rather than calling the library helpers, and every accumulation is a
// plain double loop, so the optimized kernels are checked against an
// independent implementation.

struct RefAxis {
  i64 out = 0, pad = 0;
};

RefAxis ref_same(i64 in, i64 k, i64 s) {
  RefAxis a;
  a.out = (in + s - 1) / s;
  a.pad = std::max<i64>(0, (a.out - 1) * s + k - in) / 2;
  return a;
}

RefAxis ref_valid(i64 in, i64 k, i64 s) {
  RefAxis a;
  a.out = (in - k) / s + 1;
  a.pad = 0;
  return a;
}

RefAxis ref_deconv(i64 in, i64 k, i64 f) {
  RefAxis a;
  a.out = in * f;
  a.pad = std::max<i64>(0, k - f) / 2;
  return a;
}

template <class T>
Tensor<double> ref_conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, std::array<i64, 3> s,
                          Pad pad) {
  const i64 B = x.extent(0), IC = x.extent(1), X = x.extent(2), Y = x.extent(3), Z = x.extent(4);
  const i64 OC = w.extent(0), KX = w.extent(2), KY = w.extent(3), KZ = w.extent(4);
  const auto ax = pad == Pad::kSame ? ref_same(X, KX, s[0]) : ref_valid(X, KX, s[0]);
  const auto ay = pad == Pad::kSame ? ref_same(Y, KY, s[1]) : ref_valid(Y, KY, s[1]);
  const auto az = pad == Pad::kSame ? ref_same(Z, KZ, s[2]) : ref_valid(Z, KZ, s[2]);
  Tensor<double> y({B, OC, ax.out, ay.out, az.out});
  for (i64 b = 0; b < B; ++b)
    for (i64 oc = 0; oc < OC; ++oc)
      for (i64 ox = 0; ox < ax.out; ++ox)
        for (i64 oy = 0; oy < ay.out; ++oy)
          for (i64 oz = 0; oz < az.out; ++oz) {
            double acc = bias ? static_cast<double>((*bias)[oc]) : 0.0;
            for (i64 ic = 0; ic < IC; ++ic)
              for (i64 kx = 0; kx < KX; ++kx)
                for (i64 ky = 0; ky < KY; ++ky)
                  for (i64 kz = 0; kz < KZ; ++kz) {
                    const i64 ix = ox * s[0] - ax.pad + kx;
                    const i64 iy = oy * s[1] - ay.pad + ky;
                    const i64 iz = oz * s[2] - az.pad + kz;
                    if (ix < 0 || ix >= X || iy < 0 || iy >= Y || iz < 0 || iz >= Z) continue;
                    acc += static_cast<double>(x.at({b, ic, ix, iy, iz})) *
                           static_cast<double>(w.at({oc, ic, kx, ky, kz}));
                  }
            y.at({b, oc, ox, oy, oz}) = acc;
          }
  return y;
}

template <class T>
Tensor<double> ref_conv3d_bwd_in(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& g, std::array<i64, 3> s,
                                 Pad pad) {
  const i64 B = x.extent(0), IC = x.extent(1), X = x.extent(2), Y = x.extent(3), Z = x.extent(4);
  const i64 OC = w.extent(0), KX = w.extent(2), KY = w.extent(3), KZ = w.extent(4);
  const auto ax = pad == Pad::kSame ? ref_same(X, KX, s[0]) : ref_valid(X, KX, s[0]);
  const auto ay = pad == Pad::kSame ? ref_same(Y, KY, s[1]) : ref_valid(Y, KY, s[1]);
  const auto az = pad == Pad::kSame ? ref_same(Z, KZ, s[2]) : ref_valid(Z, KZ, s[2]);
  Tensor<double> gx(x.shape());
  for (i64 b = 0; b < B; ++b)
    for (i64 oc = 0; oc < OC; ++oc)
      for (i64 ox = 0; ox < ax.out; ++ox)
        for (i64 oy = 0; oy < ay.out; ++oy)
          for (i64 oz = 0; oz < az.out; ++oz) {
            const double gv = static_cast<double>(g.at({b, oc, ox, oy, oz}));
            for (i64 ic = 0; ic < IC; ++ic)
              for (i64 kx = 0; kx < KX; ++kx)
                for (i64 ky = 0; ky < KY; ++ky)
                  for (i64 kz = 0; kz < KZ; ++kz) {
                    const i64 ix = ox * s[0] - ax.pad + kx;
                    const i64 iy = oy * s[1] - ay.pad + ky;
                    const i64 iz = oz * s[2] - az.pad + kz;
                    if (ix < 0 || ix >= X || iy < 0 || iy >= Y || iz < 0 || iz >= Z) continue;
                    gx.at({b, ic, ix, iy, iz}) += gv * static_cast<double>(w.at({oc, ic, kx, ky, kz}));
                  }
          }
  return gx;
}

template <class T>
Tensor<double> ref_conv3d_bwd_w(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& g, std::array<i64, 3> s,
                                Pad pad) {
  const i64 B = x.extent(0), IC = x.extent(1), X = x.extent(2), Y = x.extent(3), Z = x.extent(4);
  const i64 OC = w.extent(0), KX = w.extent(2), KY = w.extent(3), KZ = w.extent(4);
  const auto ax = pad == Pad::kSame ? ref_same(X, KX, s[0]) : ref_valid(X, KX, s[0]);
  const auto ay = pad == Pad::kSame ? ref_same(Y, KY, s[1]) : ref_valid(Y, KY, s[1]);
  const auto az = pad == Pad::kSame ? ref_same(Z, KZ, s[2]) : ref_valid(Z, KZ, s[2]);
  Tensor<double> gw(w.shape());
  for (i64 b = 0; b < B; ++b)
    for (i64 oc = 0; oc < OC; ++oc)
      for (i64 ox = 0; ox < ax.out; ++ox)
        for (i64 oy = 0; oy < ay.out; ++oy)
          for (i64 oz = 0; oz < az.out; ++oz) {
            const double gv = static_cast<double>(g.at({b, oc, ox, oy, oz}));
            for (i64 ic = 0; ic < IC; ++ic)
              for (i64 kx = 0; kx < KX; ++kx)
                for (i64 ky = 0; ky < KY; ++ky)
                  for (i64 kz = 0; kz < KZ; ++kz) {
                    const i64 ix = ox * s[0] - ax.pad + kx;
                    const i64 iy = oy * s[1] - ay.pad + ky;
                    const i64 iz = oz * s[2] - az.pad + kz;
                    if (ix < 0 || ix >= X || iy < 0 || iy >= Y || iz < 0 || iz >= Z) continue;
                    gw.at({oc, ic, kx, ky, kz}) += gv * static_cast<double>(x.at({b, ic, ix, iy, iz}));
                  }
          }
  return gw;
}

template <class T>
Tensor<double> ref_deconv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, std::array<i64, 3> f) {
  const i64 B = x.extent(0), IC = x.extent(1), X = x.extent(2), Y = x.extent(3), Z = x.extent(4);
  const i64 OC = w.extent(1), KX = w.extent(2), KY = w.extent(3), KZ = w.extent(4);
  const auto ax = ref_deconv(X, KX, f[0]);
  const auto ay = ref_deconv(Y, KY, f[1]);
  const auto az = ref_deconv(Z, KZ, f[2]);
  Tensor<double> y({B, OC, ax.out, ay.out, az.out});
  for (i64 b = 0; b < B; ++b)
    for (i64 oc = 0; oc < OC; ++oc) {
      if (bias) {
        const double bv = static_cast<double>((*bias)[oc]);
        for (i64 ox = 0; ox < ax.out; ++ox)
          for (i64 oy = 0; oy < ay.out; ++oy)
            for (i64 oz = 0; oz < az.out; ++oz) y.at({b, oc, ox, oy, oz}) = bv;
      }
      for (i64 ic = 0; ic < IC; ++ic)
        for (i64 ix = 0; ix < X; ++ix)
          for (i64 iy = 0; iy < Y; ++iy)
            for (i64 iz = 0; iz < Z; ++iz) {
              const double xv = static_cast<double>(x.at({b, ic, ix, iy, iz}));
              for (i64 kx = 0; kx < KX; ++kx)
                for (i64 ky = 0; ky < KY; ++ky)
                  for (i64 kz = 0; kz < KZ; ++kz) {
                    const i64 ox = ix * f[0] + kx - ax.pad;
                    const i64 oy = iy * f[1] + ky - ay.pad;
                    const i64 oz = iz * f[2] + kz - az.pad;
                    if (ox < 0 || ox >= ax.out || oy < 0 || oy >= ay.out || oz < 0 || oz >= az.out) continue;
                    y.at({b, oc, ox, oy, oz}) += xv * static_cast<double>(w.at({ic, oc, kx, ky, kz}));
                  }
            }
    }
  return y;
}

template <class T>
Tensor<double> ref_deconv3d_bwd_in(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& g,
                                   std::array<i64, 3> f) {
  const i64 B = x.extent(0), IC = x.extent(1), X = x.extent(2), Y = x.extent(3), Z = x.extent(4);
  const i64 OC = w.extent(1), KX = w.extent(2), KY = w.extent(3), KZ = w.extent(4);
  const auto ax = ref_deconv(X, KX, f[0]);
  const auto ay = ref_deconv(Y, KY, f[1]);
  const auto az = ref_deconv(Z, KZ, f[2]);
  Tensor<double> gx(x.shape());
  for (i64 b = 0; b < B; ++b)
    for (i64 ic = 0; ic < IC; ++ic)
      for (i64 ix = 0; ix < X; ++ix)
        for (i64 iy = 0; iy < Y; ++iy)
          for (i64 iz = 0; iz < Z; ++iz) {
            double acc = 0.0;
            for (i64 oc = 0; oc < OC; ++oc)
              for (i64 kx = 0; kx < KX; ++kx)
                for (i64 ky = 0; ky < KY; ++ky)
                  for (i64 kz = 0; kz < KZ; ++kz) {
                    const i64 ox = ix * f[0] + kx - ax.pad;
                    const i64 oy = iy * f[1] + ky - ay.pad;
                    const i64 oz = iz * f[2] + kz - az.pad;
                    if (ox < 0 || ox >= ax.out || oy < 0 || oy >= ay.out || oz < 0 || oz >= az.out) continue;
                    acc += static_cast<double>(w.at({ic, oc, kx, ky, kz})) *
                           static_cast<double>(g.at({b, oc, ox, oy, oz}));
                  }
            gx.at({b, ic, ix, iy, iz}) = acc;
          }
  return gx;
}

template <class T>
Tensor<double> ref_deconv3d_bwd_w(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& g, std::array<i64, 3> f) {
  const i64 B = x.extent(0), IC = x.extent(1), X = x.extent(2), Y = x.extent(3), Z = x.extent(4);
  const i64 OC = w.extent(1), KX = w.extent(2), KY = w.extent(3), KZ = w.extent(4);
  const auto ax = ref_deconv(X, KX, f[0]);
  const auto ay = ref_deconv(Y, KY, f[1]);
  const auto az = ref_deconv(Z, KZ, f[2]);
  Tensor<double> gw(w.shape());
  for (i64 b = 0; b < B; ++b)
    for (i64 ic = 0; ic < IC; ++ic)
      for (i64 oc = 0; oc < OC; ++oc)
        for (i64 ix = 0; ix < X; ++ix)
          for (i64 iy = 0; iy < Y; ++iy)
            for (i64 iz = 0; iz < Z; ++iz) {
              const double xv = static_cast<double>(x.at({b, ic, ix, iy, iz}));
              for (i64 kx = 0; kx < KX; ++kx)
                for (i64 ky = 0; ky < KY; ++ky)
                  for (i64 kz = 0; kz < KZ; ++kz) {
                    const i64 ox = ix * f[0] + kx - ax.pad;
                    const i64 oy = iy * f[1] + ky - ay.pad;
                    const i64 oz = iz * f[2] + kz - az.pad;
                    if (ox < 0 || ox >= ax.out || oy < 0 || oy >= ay.out || oz < 0 || oz >= az.out) continue;
                    gw.at({ic, oc, kx, ky, kz}) += xv * static_cast<double>(g.at({b, oc, ox, oy, oz}));
                  }
            }
  return gw;
}

struct ConvCase {
  Shape x;                  // (b, ic, X, Y, Z)
  Shape k;                  // (oc, kx, ky, kz)
  std::array<i64, 3> stride;
  Pad pad;
  bool bias;
};

const std::vector<ConvCase> kConvCases = {
    {{2, 3, 7, 6, 5}, {4, 3, 3, 3}, {1, 1, 1}, Pad::kSame, true},     // unit-stride fast path
    {{1, 2, 9, 8, 6}, {3, 3, 3, 3}, {2, 2, 1}, Pad::kSame, true},     // lateral stride
    {{1, 2, 8, 6, 6}, {3, 2, 2, 2}, {2, 2, 2}, Pad::kSame, false},    // cubic stride, even kernel
    {{1, 1, 6, 6, 6}, {2, 3, 3, 3}, {1, 1, 1}, Pad::kValid, true},    // valid
    {{1, 2, 9, 7, 8}, {2, 3, 3, 3}, {2, 2, 2}, Pad::kValid, true},    // valid strided
    {{2, 3, 5, 5, 4}, {4, 1, 1, 1}, {1, 1, 1}, Pad::kSame, true},     // pointwise
    {{1, 2, 4, 4, 20}, {2, 1, 1, 17}, {1, 1, 1}, Pad::kSame, true},   // axial kernel past the 16-lane block
    {{1, 1, 5, 5, 5}, {2, 2, 2, 2}, {1, 1, 1}, Pad::kSame, true},     // asymmetric padding
    {{1, 2, 7, 6, 8}, {3, 5, 3, 5}, {1, 1, 1}, Pad::kSame, false},    // mixed kernel, no bias
};

struct DeconvCase {
  Shape x;                  // (b, ic, X, Y, Z)
  Shape k;                  // (oc, kx, ky, kz)
  std::array<i64, 3> factor;
  bool bias;
};

const std::vector<DeconvCase> kDeconvCases = {
    {{1, 2, 5, 5, 3}, {3, 5, 5, 7}, {1, 1, 4}, true},   // axial upsampling, k > f
    {{1, 3, 4, 4, 4}, {2, 2, 2, 2}, {2, 2, 2}, true},   // cubic doubling, zero pad
    {{2, 2, 5, 4, 6}, {2, 3, 3, 4}, {1, 1, 2}, true},   // isotropizing shape
    {{1, 2, 4, 4, 4}, {2, 3, 3, 3}, {1, 1, 1}, false},  // factor one
    {{1, 1, 3, 3, 3}, {2, 1, 1, 2}, {1, 1, 4}, true},   // k < f leaves bias-only samples
};

template <class T>
void fill_case(Tensor<T>& t, std::uint64_t salt) {
  std::mt19937_64 rng(salt);
  testutil::fill_uniform(t, rng);
}

}  // namespace

TEST_CASE("conv3d matches the direct-summation reference") {
  int idx = 0;
  for (const auto& c : kConvCases) {
    CAPTURE(idx);
    const Shape wshape{c.k[0], c.x[1], c.k[1], c.k[2], c.k[3]};
    Tensor<float> x(c.x), w(wshape), bias({c.k[0]});
    fill_case(x, 100 + static_cast<std::uint64_t>(idx));
    fill_case(w, 200 + static_cast<std::uint64_t>(idx));
    fill_case(bias, 300 + static_cast<std::uint64_t>(idx));
    const Tensor<float>* bp = c.bias ? &bias : nullptr;

    const auto ref = ref_conv3d(x, w, bp, c.stride, c.pad);
    const auto got = conv3d_forward(x, w, bp, c.stride, c.pad);
    REQUIRE(got.shape() == ref.shape());
    CHECK(testutil::max_rel_diff(got, ref) < 1e-4);

    Tensor<float> g(got.shape());
    fill_case(g, 400 + static_cast<std::uint64_t>(idx));
    CHECK(testutil::max_rel_diff(conv3d_backward_input(x, w, g, c.stride, c.pad),
                                 ref_conv3d_bwd_in(x, w, g, c.stride, c.pad)) < 1e-4);
    CHECK(testutil::max_rel_diff(conv3d_backward_weight(x, w, g, c.stride, c.pad),
                                 ref_conv3d_bwd_w(x, w, g, c.stride, c.pad)) < 1e-4);
    ++idx;
  }
}

TEST_CASE("conv3d in double precision is tight against the reference") {
  for (int idx : {0, 1, 6}) {
    CAPTURE(idx);
    const auto& c = kConvCases[static_cast<std::size_t>(idx)];
    const Shape wshape{c.k[0], c.x[1], c.k[1], c.k[2], c.k[3]};
    Tensor<double> x(c.x), w(wshape), bias({c.k[0]});
    fill_case(x, 500 + static_cast<std::uint64_t>(idx));
    fill_case(w, 600 + static_cast<std::uint64_t>(idx));
    fill_case(bias, 700 + static_cast<std::uint64_t>(idx));

    const auto ref = ref_conv3d(x, w, &bias, c.stride, c.pad);
    const auto got = conv3d_forward(x, w, &bias, c.stride, c.pad);
    CHECK(testutil::max_rel_diff(got, ref) < 1e-12);

    Tensor<double> g(got.shape());
    fill_case(g, 800 + static_cast<std::uint64_t>(idx));
    CHECK(testutil::max_rel_diff(conv3d_backward_input(x, w, g, c.stride, c.pad),
                                 ref_conv3d_bwd_in(x, w, g, c.stride, c.pad)) < 1e-12);
    CHECK(testutil::max_rel_diff(conv3d_backward_weight(x, w, g, c.stride, c.pad),
                                 ref_conv3d_bwd_w(x, w, g, c.stride, c.pad)) < 1e-12);
  }
}

TEST_CASE("conv3d with zero weights reduces to broadcast bias") {
  Tensor<float> x({1, 2, 5, 5, 4});
  fill_case(x, 42);
  Tensor<float> w({3, 2, 3, 3, 3});
  Tensor<float> bias({3});
  bias[0] = 1.5f;
  bias[1] = -2.0f;
  bias[2] = 0.25f;
  const auto y = conv3d_forward(x, w, &bias, {1, 1, 1}, Pad::kSame);
  for (i64 oc = 0; oc < 3; ++oc)
    for (i64 i = 0; i < 5 * 5 * 4; ++i) CHECK(y[oc * 5 * 5 * 4 + i] == bias[oc]);
}

TEST_CASE("deconv3d matches the direct scatter reference") {
  int idx = 0;
  for (const auto& c : kDeconvCases) {
    CAPTURE(idx);
    const Shape wshape{c.x[1], c.k[0], c.k[1], c.k[2], c.k[3]};
    Tensor<float> x(c.x), w(wshape), bias({c.k[0]});
    fill_case(x, 1100 + static_cast<std::uint64_t>(idx));
    fill_case(w, 1200 + static_cast<std::uint64_t>(idx));
    fill_case(bias, 1300 + static_cast<std::uint64_t>(idx));
    const Tensor<float>* bp = c.bias ? &bias : nullptr;

    const auto ref = ref_deconv3d(x, w, bp, c.factor);
    const auto got = deconv3d_forward(x, w, bp, c.factor);
    REQUIRE(got.shape() == ref.shape());
    CHECK(testutil::max_rel_diff(got, ref) < 1e-4);

    Tensor<float> g(got.shape());
    fill_case(g, 1400 + static_cast<std::uint64_t>(idx));
    CHECK(testutil::max_rel_diff(deconv3d_backward_input(x, w, g, c.factor),
                                 ref_deconv3d_bwd_in(x, w, g, c.factor)) < 1e-4);
    CHECK(testutil::max_rel_diff(deconv3d_backward_weight(x, w, g, c.factor),
                                 ref_deconv3d_bwd_w(x, w, g, c.factor)) < 1e-4);
    ++idx;
  }
}

TEST_CASE("deconv3d output extent is input times factor") {
  Tensor<float> x({1, 2, 5, 4, 3});
  Tensor<float> w({2, 3, 3, 3, 8});
  fill_case(x, 7);
  fill_case(w, 8);
  const auto y = deconv3d_forward(x, w, nullptr, {1, 1, 4});
  CHECK(y.shape() == Shape{1, 3, 5, 4, 12});
}

TEST_CASE("avgpool3d computes block means and spreads gradients evenly") {
  for (auto window : {std::array<i64, 3>{2, 2, 1}, {2, 2, 2}, {1, 1, 4}}) {
    CAPTURE(window[0]);
    CAPTURE(window[2]);
    Tensor<float> x({2, 2, 4, 4, 8});
    fill_case(x, 2100 + static_cast<std::uint64_t>(window[0] * 10 + window[2]));
    const auto y = avgpool3d_forward(x, window);
    const i64 OX = 4 / window[0], OY = 4 / window[1], OZ = 8 / window[2];
    REQUIRE(y.shape() == Shape{2, 2, OX, OY, OZ});
    for (i64 b = 0; b < 2; ++b)
      for (i64 c = 0; c < 2; ++c)
        for (i64 ox = 0; ox < OX; ++ox)
          for (i64 oy = 0; oy < OY; ++oy)
            for (i64 oz = 0; oz < OZ; ++oz) {
              double acc = 0.0;
              for (i64 dx = 0; dx < window[0]; ++dx)
                for (i64 dy = 0; dy < window[1]; ++dy)
                  for (i64 dz = 0; dz < window[2]; ++dz)
                    acc += x.at({b, c, ox * window[0] + dx, oy * window[1] + dy, oz * window[2] + dz});
              acc /= static_cast<double>(window[0] * window[1] * window[2]);
              CHECK(testutil::rel_err(y.at({b, c, ox, oy, oz}), acc) < 1e-6);
            }

    // Pooling preserves the global mean on divisible extents.
    double xm = 0.0, ym = 0.0;
    for (i64 i = 0; i < x.numel(); ++i) xm += x[i];
    for (i64 i = 0; i < y.numel(); ++i) ym += y[i];
    CHECK(testutil::rel_err(xm / static_cast<double>(x.numel()), ym / static_cast<double>(y.numel())) < 1e-6);

    Tensor<float> g(y.shape());
    fill_case(g, 2200);
    const auto gx = avgpool3d_backward(x, g, window);
    const float inv = 1.0f / static_cast<float>(window[0] * window[1] * window[2]);
    for (i64 b = 0; b < 2; ++b)
      for (i64 c = 0; c < 2; ++c)
        for (i64 ix = 0; ix < 4; ++ix)
          for (i64 iy = 0; iy < 4; ++iy)
            for (i64 iz = 0; iz < 8; ++iz)
              CHECK(gx.at({b, c, ix, iy, iz}) ==
                    g.at({b, c, ix / window[0], iy / window[1], iz / window[2]}) * inv);
  }
}

TEST_CASE("kernel shape errors are typed and specific") {
  Tensor<float> x({1, 2, 5, 5, 5});
  Tensor<float> w_badc({3, 4, 3, 3, 3});
  CHECK_THROWS_AS(conv3d_forward(x, w_badc, nullptr, {1, 1, 1}, Pad::kSame), ShapeError);

  Tensor<float> w({3, 2, 7, 3, 3});
  CHECK_THROWS_AS(conv3d_forward(x, w, nullptr, {1, 1, 1}, Pad::kValid), ShapeError);

  Tensor<float> bias({2});
  Tensor<float> w_ok({3, 2, 3, 3, 3});
  CHECK_THROWS_AS(conv3d_forward(x, w_ok, &bias, {1, 1, 1}, Pad::kSame), ShapeError);

  CHECK_THROWS_AS(avgpool3d_forward(x, {2, 2, 2}), ShapeError);
  Tensor<float> x4({2, 5, 5, 5});
  CHECK_THROWS_AS(avgpool3d_forward(x4, {1, 1, 1}), ShapeError);
}
