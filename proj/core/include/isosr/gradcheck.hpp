#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "isosr/tensor.hpp"

namespace isosr {

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  i64 elements = 0;

  bool ok(double tol) const { return max_rel_err < tol; }
};

// 64-bit finite-difference checks of every differentiable op plus tiny
// end-to-end builds of both architectures. Inputs are frozen functions of
// the seed. Relative error uses denominator max(|a|,|b|,1e-3).
std::vector<std::string> gradcheck_names();
GradCheckResult run_gradcheck(const std::string& name, std::uint64_t seed);
std::vector<GradCheckResult> run_all_gradchecks(std::uint64_t seed);

// Control with a deliberately wrong conv weight backward (scaled by 1.01).
// A healthy harness reports a large error here; if this "passes", the
// checker itself is broken.
GradCheckResult run_negative_control(std::uint64_t seed);

inline constexpr double kGradCheckTol = 1e-4;

}  // namespace isosr
