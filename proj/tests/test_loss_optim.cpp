#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "isosr/metrics.hpp"
#include "isosr/ops.hpp"
#include "isosr/optim.hpp"
#include "test_util.hpp"

using namespace isosr;

namespace {

// Scalar-loop transcription of the weighted loss: weights 1/2 + d^2/(2 max d^2)
// over the cubic residual d, applied to the squared prediction error, meaned.
double ref_wmse(const Tensor<double>& pred, const Tensor<double>& hr, const Tensor<double>& cub) {
  double maxd2 = 0.0;
  for (i64 i = 0; i < hr.numel(); ++i) {
    const double d = hr[i] - cub[i];
    maxd2 = std::max(maxd2, d * d);
  }
  double acc = 0.0;
  for (i64 i = 0; i < hr.numel(); ++i) {
    const double d = hr[i] - cub[i];
    const double w = maxd2 > 0.0 ? 0.5 + d * d / (2.0 * maxd2) : 0.5;
    const double e = hr[i] - pred[i];
    acc += w * e * e;
  }
  return acc / static_cast<double>(hr.numel());
}

}  // namespace

TEST_CASE("weighted mse agrees with the scalar-loop reference on random data") {
  for (int c = 0; c < 100; ++c) {
    CAPTURE(c);
    std::mt19937_64 rng(3000 + static_cast<std::uint64_t>(c));
    std::uniform_int_distribution<i64> dim(1, 4);
    const Shape shape{1, 1, dim(rng), dim(rng), dim(rng)};
    Tensor<double> pred(shape), hr(shape), cub(shape);
    testutil::fill_uniform(pred, rng, 0.0, 1.0);
    testutil::fill_uniform(hr, rng, 0.0, 1.0);
    testutil::fill_uniform(cub, rng, 0.0, 1.0);

    Tape<double> tape;
    auto* p = tape.leaf(pred, true);
    auto* loss = op_wmse_loss(tape, p, hr, cub);
    CHECK(std::abs(loss->value[0] - ref_wmse(pred, hr, cub)) < 1e-9);
  }
}

TEST_CASE("weighted mse hand case") {
  Tensor<double> hr({2}, {2.0, 0.0});
  Tensor<double> cub({2}, {0.0, 0.0});
  Tensor<double> pred({2}, {1.0, 0.0});
  Tape<double> tape;
  auto* loss = op_wmse_loss(tape, tape.leaf(pred, true), hr, cub);
  // weights are (1.0, 0.5); errors (1, 0): mean = 0.5 exactly
  CHECK(loss->value[0] == 0.5);
}

TEST_CASE("wmse weights live in [0.5, 1] and hit both ends") {
  std::mt19937_64 rng(31);
  Tensor<float> hr({1, 1, 4, 4, 4}), cub(hr.shape());
  testutil::fill_uniform(hr, rng, 0.0, 1.0);
  testutil::fill_uniform(cub, rng, 0.0, 1.0);
  const auto w = wmse_weights(hr, cub);
  float top = 0.0f;
  for (i64 i = 0; i < w.numel(); ++i) {
    CHECK(w[i] >= 0.5f);
    CHECK(w[i] <= 1.0f);
    top = std::max(top, w[i]);
  }
  CHECK(top == 1.0f);  // the argmax voxel always gets full weight

  // A perfect cubic baseline degenerates to uniform half weights.
  const auto flat = wmse_weights(hr, hr);
  for (i64 i = 0; i < flat.numel(); ++i) CHECK(flat[i] == 0.5f);
}

TEST_CASE("wmse gradient only flows into the prediction") {
  std::mt19937_64 rng(32);
  Tensor<double> pred({1, 1, 3, 3, 3}), hr(pred.shape()), cub(pred.shape());
  testutil::fill_uniform(pred, rng);
  testutil::fill_uniform(hr, rng);
  testutil::fill_uniform(cub, rng);
  Tape<double> tape;
  auto* p = tape.leaf(pred, true);
  auto* loss = op_wmse_loss(tape, p, hr, cub);
  tape.backward(loss);
  const auto w = wmse_weights(hr, cub);
  for (i64 i = 0; i < pred.numel(); ++i) {
    const double expect = 2.0 * w[i] * (pred[i] - hr[i]) / static_cast<double>(pred.numel());
    CHECK(testutil::rel_err(p->grad[i], expect, 1e-9) < 1e-12);
  }
}

TEST_CASE("adam first step and recursion match a scalar reimplementation") {
  const double lr = 1e-4;
  std::vector<Tensor<float>> params{Tensor<float>({3}, {0.5f, -0.25f, 2.0f})};
  std::vector<std::string> names{"p"};
  auto state = AdamState<float>::init(params);

  // Scalar shadow of the same recursion in double.
  double sp[3] = {0.5, -0.25, 2.0};
  double sm[3] = {0, 0, 0}, sv[3] = {0, 0, 0};

  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> gd(-1.0, 1.0);
  for (int step = 1; step <= 6; ++step) {
    Tensor<float> g({3});
    for (int i = 0; i < 3; ++i) g[i] = static_cast<float>(gd(rng));
    std::vector<Tensor<float>> grads{g};
    adam_step(params, grads, names, state, lr);

    const double bc1 = 1.0 - std::pow(0.9, step);
    const double bc2 = 1.0 - std::pow(0.999, step);
    for (int i = 0; i < 3; ++i) {
      const double gi = static_cast<double>(g[i]);
      sm[i] = 0.9 * sm[i] + 0.1 * gi;
      sv[i] = 0.999 * sv[i] + 0.001 * gi * gi;
      sp[i] -= lr * (sm[i] / bc1) / (std::sqrt(sv[i] / bc2) + 1e-8);
      CHECK(testutil::rel_err(params[0][i], sp[i], 1e-6) < 1e-5);
    }
    CHECK(state.t == step);
  }
}

TEST_CASE("adam first step moves by lr against a unit gradient") {
  std::vector<Tensor<float>> params{Tensor<float>({1}, {1.0f})};
  std::vector<Tensor<float>> grads{Tensor<float>({1}, {1.0f})};
  auto state = AdamState<float>::init(params);
  adam_step(params, grads, {"p"}, state, 1e-3);
  // bias correction makes mhat = g, vhat = g^2 on step one
  CHECK(std::abs(static_cast<double>(params[0][0]) - (1.0 - 1e-3 / (1.0 + 1e-8))) < 1e-9);
}

TEST_CASE("adam rejects non-finite gradients by parameter name") {
  std::vector<Tensor<float>> params{Tensor<float>({2}, {1.0f, 1.0f})};
  std::vector<Tensor<float>> grads{Tensor<float>({2}, {0.0f, std::numeric_limits<float>::quiet_NaN()})};
  auto state = AdamState<float>::init(params);
  CHECK_THROWS_WITH_AS(adam_step(params, grads, {"enc0.conv0.w"}, state, 1e-4),
                       doctest::Contains("enc0.conv0.w"), NumericError);
}

TEST_CASE("learning rate follows square-root step decay") {
  LrSchedule s{1e-4, 100};
  CHECK(s.at(0) == 1e-4);
  CHECK(s.at(99) == 1e-4);
  CHECK(testutil::rel_err(s.at(100), 1e-4 / std::sqrt(2.0), 1e-12) < 1e-12);
  CHECK(testutil::rel_err(s.at(399), 1e-4 / 2.0, 1e-12) < 1e-12);
  LrSchedule bad{1e-4, 0};
  CHECK_THROWS_AS(bad.at(0), UsageError);
}

TEST_CASE("psnr converts mse on the intensity range") {
  CHECK(psnr_from_mse(255.0 * 255.0) == 0.0);
  CHECK(testutil::rel_err(psnr_from_mse(255.0 * 255.0 / 100.0), 20.0, 1e-12) < 1e-12);
  CHECK(std::isinf(psnr_from_mse(0.0)));
  CHECK(psnr_from_mse(1.0, 1.0) == 0.0);
}

TEST_CASE("metric csv rows line up with the header") {
  MetricsRecord rec;
  rec.mse = 1.0;
  const auto header = metrics_csv_header();
  const auto row = metrics_csv_row("fsrcnn3d", 42, "val", rec);
  CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));
  CHECK(row.find("fsrcnn3d,42,val,") == 0);
}

TEST_CASE("mse over matching regions is zero and psnr infinite") {
  Volume a = Volume::make_f32(4, 4, 4);
  for (std::size_t i = 0; i < a.f32.size(); ++i) a.f32[i] = static_cast<float>(i) / 64.0f;
  const Volume b = a;
  const auto r = Region::whole(a);
  CHECK(mse_region(a, b, r) == 0.0);
  CHECK(std::isinf(psnr_from_mse(mse_region(a, b, r))));

  // One voxel off by 1/255 on the unit scale is an mse of 1/voxels on the
  // 8-bit scale.
  Volume c = a;
  c.f32[0] += 1.0f / 255.0f;
  CHECK(testutil::rel_err(mse_region(a, c, r), 1.0 / 64.0, 1e-9) < 1e-5);
}
