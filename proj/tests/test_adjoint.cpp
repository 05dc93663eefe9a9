#include <array>
#include <random>

#include "doctest.h"
#include "isosr/conv_kernels.hpp"
#include "test_util.hpp"

using namespace isosr;

namespace {

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double acc = 0.0;
  for (i64 i = 0; i < a.numel(); ++i) acc += a[i] * b[i];
  return acc;
}

std::array<i64, 3> random_factor(std::mt19937_64& rng) {
  static const i64 choices[] = {1, 2, 4};
  std::uniform_int_distribution<int> pick(0, 2);
  return {choices[pick(rng)], choices[pick(rng)], choices[pick(rng)]};
}

}  // namespace

// The transposed convolution must be the exact adjoint of the zero-pad-same
// strided convolution with the same weight tensor: <deconv(x), u> = <x, conv(u)>.
TEST_CASE("deconv3d is the adjoint of the strided same-padded conv3d") {
  for (int c = 0; c < 50; ++c) {
    CAPTURE(c);
    std::mt19937_64 rng(9000 + static_cast<std::uint64_t>(c));
    std::uniform_int_distribution<i64> dim(2, 6), ch(1, 3), kd(1, 5);
    const i64 B = 1 + (c % 2), IC = ch(rng), OC = ch(rng);
    const i64 X = dim(rng), Y = dim(rng), Z = dim(rng);
    const auto f = random_factor(rng);
    const i64 KX = kd(rng), KY = kd(rng), KZ = kd(rng);

    Tensor<double> x({B, IC, X, Y, Z});
    Tensor<double> w({IC, OC, KX, KY, KZ});
    testutil::fill_uniform(x, rng);
    testutil::fill_uniform(w, rng);

    const auto y = deconv3d_forward(x, w, nullptr, f);
    Tensor<double> u(y.shape());
    testutil::fill_uniform(u, rng);

    // Viewed as a conv weight the same tensor maps OC channels back to IC.
    const auto v = conv3d_forward(u, w, nullptr, f, Pad::kSame);
    REQUIRE(v.shape() == x.shape());

    const double lhs = dot(y, u);
    const double rhs = dot(x, v);
    CHECK(testutil::rel_err(lhs, rhs, 1e-9) < 1e-5);
  }
}

TEST_CASE("deconv3d backward pairs are the forward maps of each other") {
  for (int c = 0; c < 8; ++c) {
    CAPTURE(c);
    std::mt19937_64 rng(9500 + static_cast<std::uint64_t>(c));
    std::uniform_int_distribution<i64> dim(2, 5), ch(1, 3), kd(1, 4);
    const auto f = random_factor(rng);
    Tensor<double> x({1, ch(rng), dim(rng), dim(rng), dim(rng)});
    Tensor<double> w({x.extent(1), ch(rng), kd(rng), kd(rng), kd(rng)});
    testutil::fill_uniform(x, rng);
    testutil::fill_uniform(w, rng);

    const auto y = deconv3d_forward(x, w, nullptr, f);
    Tensor<double> g(y.shape());
    testutil::fill_uniform(g, rng);

    // d/dx of the scatter is precisely the strided gather with the same taps.
    const auto gx = deconv3d_backward_input(x, w, g, f);
    const auto conv = conv3d_forward(g, w, nullptr, f, Pad::kSame);
    CHECK(testutil::max_rel_diff(gx, conv, 1e-9) < 1e-12);

    // And the reverse: the strided conv's input gradient is the scatter.
    const auto gconv = conv3d_backward_input(g, w, x, f, Pad::kSame);
    const auto dec = deconv3d_forward(x, w, nullptr, f);
    CHECK(testutil::max_rel_diff(gconv, dec, 1e-9) < 1e-12);
  }
}
