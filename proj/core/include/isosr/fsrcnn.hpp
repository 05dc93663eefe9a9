#pragma once

#include <string>

#include "isosr/model.hpp"

namespace isosr {

// Anisotropic 3D FSRCNN hyperparameters: m mapping layers, d feature filters,
// s shrink filters, and the axial upscaling factor.
struct FsrcnnSpec {
  i64 m = 2;
  i64 d = 240;
  i64 s = 48;
  i64 z_factor = 4;
  bool relu = false;  // swap PReLU for ReLU (ablation knob; changes nP)

  void validate() const {
    if (m < 0) throw UsageError("fsrcnn: m must be >= 0");
    if (s < 1 || d < s) throw UsageError("fsrcnn: require d >= s >= 1");
    if (z_factor < 1) throw UsageError("fsrcnn: z_factor must be >= 1");
  }
};

namespace detail {

struct FsrcnnBuild {
  NetworkDesc desc;
  int next_slot = 1;

  int add_conv(const std::string& tag, i64 ic, i64 oc, std::array<i64, 3> k, bool prelu, int src) {
    LayerDesc l;
    l.kind = LayerKind::kConv;
    l.tag = tag;
    l.src = src;
    l.dst = next_slot++;
    l.w = add_param({tag + ".w", {oc, ic, k[0], k[1], k[2]}, InitKind::kGaussFanIn, ic * k[0] * k[1] * k[2]});
    l.b = add_param({tag + ".b", {oc}, InitKind::kZero});
    if (prelu) {
      l.act = Act::kPrelu;
      l.act_param = add_param({tag + ".a", {oc}, InitKind::kConst, 1, 0.25});
    } else {
      l.act = Act::kRelu;
    }
    desc.layers.push_back(l);
    return l.dst;
  }

  int add_param(ParamDef def) {
    desc.params.push_back(std::move(def));
    return static_cast<int>(desc.params.size()) - 1;
  }
};

}  // namespace detail

// Layer stack per the architecture: 13x13x5 feature extraction, 1x1x1 shrink,
// m mapping layers at 9x9x3, 1x1x1 expand, then a fractionally-strided
// 13x13x13 output layer upsampling z by z_factor. Zero-pad-same throughout.
inline NetworkDesc build_fsrcnn3d(const FsrcnnSpec& spec) {
  spec.validate();
  detail::FsrcnnBuild b;
  b.desc.arch = "fsrcnn3d";
  b.desc.z_factor = spec.z_factor;
  b.desc.spec_fields = {{"m", std::to_string(spec.m)},
                        {"d", std::to_string(spec.d)},
                        {"s", std::to_string(spec.s)},
                        {"z_factor", std::to_string(spec.z_factor)},
                        {"activation", spec.relu ? "relu" : "prelu"}};
  const bool prelu = !spec.relu;
  int cur = b.add_conv("feat", 1, spec.d, {13, 13, 5}, prelu, 0);
  cur = b.add_conv("shrink", spec.d, spec.s, {1, 1, 1}, prelu, cur);
  for (i64 i = 0; i < spec.m; ++i) {
    cur = b.add_conv("map" + std::to_string(i), spec.s, spec.s, {9, 9, 3}, prelu, cur);
  }
  cur = b.add_conv("expand", spec.s, spec.d, {1, 1, 1}, prelu, cur);

  LayerDesc out;
  out.kind = LayerKind::kDeconv;
  out.tag = "deconv";
  out.src = cur;
  out.dst = b.next_slot++;
  // Effective fan-in of a transposed conv is taps / upsampling volume.
  out.w = b.add_param({"deconv.w",
                       {spec.d, 1, 13, 13, 13},
                       InitKind::kGaussFanIn,
                       std::max<i64>(1, spec.d * 13 * 13 * 13 / spec.z_factor)});
  out.b = b.add_param({"deconv.b", {1}, InitKind::kZero});
  out.geom = {1, 1, spec.z_factor};
  b.desc.layers.push_back(out);

  b.desc.num_slots = b.next_slot;
  b.desc.output_slot = out.dst;
  return b.desc;
}

}  // namespace isosr
