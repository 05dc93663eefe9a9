#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "isosr/resample.hpp"
#include "isosr/sampling.hpp"
#include "isosr/split.hpp"
#include "isosr/synth.hpp"
#include "test_util.hpp"

using namespace isosr;

namespace {

Volume ramp_volume(i64 x, i64 y, i64 z, float ax, float ay, float az) {
  Volume v = Volume::make_f32(x, y, z);
  for (i64 iz = 0; iz < z; ++iz)
    for (i64 iy = 0; iy < y; ++iy)
      for (i64 ix = 0; ix < x; ++ix)
        v.f32[static_cast<std::size_t>(v.index(ix, iy, iz))] =
            ax * static_cast<float>(ix) + ay * static_cast<float>(iy) + az * static_cast<float>(iz);
  return v;
}

}  // namespace

TEST_CASE("simulate_anisotropy takes non-overlapping z block means") {
  const Volume v = ramp_volume(3, 2, 16, 0.0f, 0.0f, 1.0f);
  const Volume lr = simulate_anisotropy(v, 4);
  CHECK(lr.x == 3);
  CHECK(lr.y == 2);
  CHECK(lr.z == 4);
  for (i64 iz = 0; iz < 4; ++iz) {
    const float expect = static_cast<float>(4 * iz) + 1.5f;  // mean of 4 consecutive slices
    for (i64 iy = 0; iy < 2; ++iy)
      for (i64 ix = 0; ix < 3; ++ix) CHECK(std::abs(lr.value01(ix, iy, iz) - expect) < 1e-6f);
  }

  // Purely lateral structure is untouched.
  const Volume lat = ramp_volume(5, 4, 8, 1.0f, 10.0f, 0.0f);
  const Volume lat_lr = simulate_anisotropy(lat, 4);
  for (i64 iz = 0; iz < 2; ++iz)
    for (i64 iy = 0; iy < 4; ++iy)
      for (i64 ix = 0; ix < 5; ++ix)
        CHECK(lat_lr.value01(ix, iy, iz) == lat.value01(ix, iy, 0));

  CHECK_THROWS_AS(simulate_anisotropy(ramp_volume(3, 3, 10, 0, 0, 1), 4), DataError);
}

TEST_CASE("cubic upsampling reproduces linear z ramps away from the ends") {
  const Volume lr = ramp_volume(3, 3, 12, 0.0f, 0.0f, 4.0f);
  const int f = 4;
  const Volume hi = cubic_upsample_z(lr, f);
  CHECK(hi.z == 48);
  // Output sample oz sits at source coordinate (oz + 0.5)/f - 0.5, so the
  // interior reproduces the ramp 4t exactly; the clamped ends do not.
  for (i64 oz = 2 * f; oz < hi.z - 2 * f; ++oz) {
    const double t = (static_cast<double>(oz) + 0.5) / f - 0.5;
    CHECK(std::abs(hi.value01(1, 1, oz) - 4.0 * t) < 1e-4);
  }
}

TEST_CASE("cubic upsampling preserves constants everywhere") {
  Volume lr = Volume::make_f32(4, 4, 6);
  for (auto& s : lr.f32) s = 0.37f;
  for (auto mode : {CubicMode::kZOnly, CubicMode::kTricubic}) {
    const Volume hi = cubic_upsample_z(lr, 4, mode);
    REQUIRE(hi.z == 24);
    for (const float s : hi.f32) CHECK(std::abs(s - 0.37f) < 1e-6f);
  }
}

TEST_CASE("cubic upsampling agrees between volume and tensor entry points") {
  std::mt19937_64 rng(404);
  Volume lr = Volume::make_f32(5, 4, 6);
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  for (auto& s : lr.f32) s = d(rng);

  const Volume hv = cubic_upsample_z(lr, 4);
  const Tensor<float> ht = cubic_upsample_z(volume_to_tensor(lr), 4);
  const Tensor<float> hv_t = volume_to_tensor(hv);
  REQUIRE(ht.shape() == hv_t.shape());
  for (i64 i = 0; i < ht.numel(); ++i) CHECK(ht[i] == hv_t[i]);
}

TEST_CASE("synthetic volumes are deterministic in the seed") {
  const Volume a = generate_synthetic_volume({64, 64, 64}, 0);
  const Volume b = generate_synthetic_volume({64, 64, 64}, 0);
  REQUIRE(a.f32.size() == b.f32.size());
  CHECK(a.f32 == b.f32);

  const Volume c = generate_synthetic_volume({64, 64, 64}, 1);
  CHECK(a.f32 != c.f32);

  double lo = 1e9, hi = -1e9, mean = 0.0;
  for (const float s : a.f32) {
    lo = std::min(lo, static_cast<double>(s));
    hi = std::max(hi, static_cast<double>(s));
    mean += s;
  }
  mean /= static_cast<double>(a.f32.size());
  CHECK(lo >= 0.0);
  CHECK(hi <= 1.0);
  CHECK(mean > 0.2);
  CHECK(mean < 0.9);
  CHECK(hi - lo > 0.3);  // membranes against cytoplasm leave real contrast
}

TEST_CASE("patch sampler corners are pure functions of seed, iteration, item") {
  const Volume v = generate_synthetic_volume({64, 64, 64}, 3);
  const Region r = Region::whole(v);
  PatchSampler s1(v, r, {32, 32, 32}, 4, 11);
  PatchSampler s2(v, r, {32, 32, 32}, 4, 11);
  for (std::uint64_t it : {0ull, 1ull, 999ull})
    for (std::uint64_t item : {0ull, 5ull}) CHECK(s1.corner_at(it, item) == s2.corner_at(it, item));

  PatchSampler s3(v, r, {32, 32, 32}, 4, 12);
  bool any_differ = false;
  for (std::uint64_t it = 0; it < 8; ++it) any_differ = any_differ || s1.corner_at(it, 0) != s3.corner_at(it, 0);
  CHECK(any_differ);
}

TEST_CASE("patch sampler covers the corner range roughly uniformly") {
  const Volume v = generate_synthetic_volume({64, 64, 64}, 4);
  PatchSampler s(v, Region::whole(v), {32, 32, 32}, 4, 21);
  const i64 range = 64 - 32 + 1;
  std::array<std::vector<int>, 3> hits;
  for (auto& h : hits) h.assign(static_cast<std::size_t>(range), 0);
  const int draws = 10000;
  for (int it = 0; it < draws; ++it) {
    const auto c = s.corner_at(static_cast<std::uint64_t>(it), 0);
    for (int a = 0; a < 3; ++a) {
      REQUIRE(c[static_cast<std::size_t>(a)] >= 0);
      REQUIRE(c[static_cast<std::size_t>(a)] < range);
      ++hits[static_cast<std::size_t>(a)][static_cast<std::size_t>(c[static_cast<std::size_t>(a)])];
    }
  }
  const double expect = static_cast<double>(draws) / static_cast<double>(range);
  for (int a = 0; a < 3; ++a)
    for (int bin = 0; bin < range; ++bin) {
      CAPTURE(a);
      CAPTURE(bin);
      CHECK(hits[static_cast<std::size_t>(a)][static_cast<std::size_t>(bin)] > expect * 0.5);
      CHECK(hits[static_cast<std::size_t>(a)][static_cast<std::size_t>(bin)] < expect * 1.6);
    }
}

TEST_CASE("sampled pairs hold the volume patch and its axial block means") {
  const Volume v = generate_synthetic_volume({64, 64, 64}, 5);
  const Region r{{4, 4, 4}, {60, 60, 60}};
  PatchSampler s(v, r, {16, 16, 16}, 4, 31, 2);
  const auto pair = s.sample(7, 3);
  REQUIRE(pair.hr.shape() == Shape{1, 1, 16, 16, 16});
  REQUIRE(pair.lr.shape() == Shape{1, 1, 16, 16, 4});

  // Corner respects region begin plus margin on every axis.
  for (int a = 0; a < 3; ++a) {
    CHECK(pair.corner[static_cast<std::size_t>(a)] >= 6);
    CHECK(pair.corner[static_cast<std::size_t>(a)] + 16 <= 58);
  }

  for (i64 ix = 0; ix < 16; ++ix)
    for (i64 iy = 0; iy < 16; ++iy)
      for (i64 iz = 0; iz < 16; ++iz)
        CHECK(pair.hr.at({0, 0, ix, iy, iz}) ==
              v.value01(pair.corner[0] + ix, pair.corner[1] + iy, pair.corner[2] + iz));

  for (i64 ix = 0; ix < 16; ++ix)
    for (i64 iy = 0; iy < 16; ++iy)
      for (i64 iz = 0; iz < 4; ++iz) {
        double acc = 0.0;
        for (i64 dz = 0; dz < 4; ++dz) acc += pair.hr.at({0, 0, ix, iy, 4 * iz + dz});
        CHECK(std::abs(pair.lr.at({0, 0, ix, iy, iz}) - acc / 4.0) < 1e-6);
      }
}

TEST_CASE("patch sampler rejects geometry that cannot fit") {
  const Volume v = generate_synthetic_volume({64, 64, 64}, 6);
  const Region r = Region::whole(v);
  CHECK_THROWS_AS(PatchSampler(v, r, {32, 32, 30}, 4, 0), UsageError);   // z not divisible
  CHECK_THROWS_AS(PatchSampler(v, r, {80, 32, 32}, 4, 0), DataError);    // wider than the region
  CHECK_THROWS_AS(PatchSampler(v, r, {32, 32, 32}, 4, 0, 20), DataError);  // margin eats the range
}

TEST_CASE("contiguous splits follow the fractions on the long lateral axis") {
  const Volume vx = Volume::make_f32(256, 64, 64);
  const auto sx = split(vx, SplitSpec{});
  CHECK(sx.axis == 0);
  CHECK(sx.train.begin[0] == 0);
  CHECK(sx.train.end[0] == 179);
  CHECK(sx.val.begin[0] == 179);
  CHECK(sx.val.end[0] == 217);
  CHECK(sx.test.begin[0] == 217);
  CHECK(sx.test.end[0] == 256);
  // Off-axis extents cover the whole volume.
  CHECK(sx.train.extent(1) == 64);
  CHECK(sx.train.extent(2) == 64);

  const Volume vy = Volume::make_f32(64, 256, 64);
  const auto sy = split(vy, SplitSpec{});
  CHECK(sy.axis == 1);
  CHECK(sy.train.extent(1) == 179);

  // Ties go to x, including the cubic case.
  const Volume vc = Volume::make_f32(128, 128, 128);
  CHECK(split(vc, SplitSpec{}).axis == 0);
}

TEST_CASE("split fractions must be positive and sum to one") {
  const Volume v = Volume::make_f32(64, 64, 64);
  CHECK_THROWS_AS(split(v, SplitSpec{0.5, 0.2, 0.2, SplitAxis::kAuto}), UsageError);
  CHECK_THROWS_AS(split(v, SplitSpec{1.2, -0.1, -0.1, SplitAxis::kAuto}), UsageError);
}
