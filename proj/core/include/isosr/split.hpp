#pragma once

#include <cmath>

#include "isosr/volume.hpp"

namespace isosr {

enum class SplitAxis { kAuto, kX, kY, kZ };

// Contiguous train/val/test slabs along one axis. Train and val slab
// thickness are floors of fraction*extent; test takes the remainder.
struct SplitSpec {
  double train_frac = 0.70;
  double val_frac = 0.15;
  double test_frac = 0.15;
  SplitAxis axis = SplitAxis::kAuto;  // auto picks the larger lateral axis, x on ties
};

struct SplitRegions {
  int axis = 0;
  Region train, val, test;
};

inline SplitRegions split(const Volume& v, const SplitSpec& spec) {
  if (spec.train_frac <= 0.0 || spec.val_frac <= 0.0 || spec.test_frac <= 0.0) {
    throw UsageError("split fractions must be positive");
  }
  if (std::abs(spec.train_frac + spec.val_frac + spec.test_frac - 1.0) > 1e-9) {
    throw UsageError("split fractions must sum to 1");
  }
  int axis;
  switch (spec.axis) {
    case SplitAxis::kX: axis = 0; break;
    case SplitAxis::kY: axis = 1; break;
    case SplitAxis::kZ: axis = 2; break;
    case SplitAxis::kAuto: axis = v.y > v.x ? 1 : 0; break;
    default: throw UsageError("bad split axis");
  }
  const i64 ext = axis == 0 ? v.x : axis == 1 ? v.y : v.z;
  const i64 n_train = static_cast<i64>(std::floor(spec.train_frac * static_cast<double>(ext)));
  const i64 n_val = static_cast<i64>(std::floor(spec.val_frac * static_cast<double>(ext)));
  const i64 n_test = ext - n_train - n_val;
  if (n_train < 1 || n_val < 1 || n_test < 1) {
    throw DataError("split leaves an empty region along axis " + std::string(1, "xyz"[static_cast<std::size_t>(axis)]));
  }
  SplitRegions out;
  out.axis = axis;
  out.train = out.val = out.test = Region::whole(v);
  const auto ai = static_cast<std::size_t>(axis);
  out.train.begin[ai] = 0;
  out.train.end[ai] = n_train;
  out.val.begin[ai] = n_train;
  out.val.end[ai] = n_train + n_val;
  out.test.begin[ai] = n_train + n_val;
  out.test.end[ai] = ext;
  return out;
}

}  // namespace isosr
