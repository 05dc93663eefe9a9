#pragma once

#include <string>
#include <vector>

#include "isosr/model.hpp"

namespace isosr {

enum class ChannelMode { kPaper, kDouble };
enum class SkipDeconvPosition { kAfterConvs, kBeforeConvs };

// 3D SRU-Net hyperparameters: h levels below the top, w initial filters,
// d convs per level, and the axial anisotropy factor (power of two).
struct SrunetSpec {
  i64 h = 3;
  i64 w = 32;
  i64 d = 3;
  i64 z_factor = 4;
  // Channel growth doubles per level except across the first pooling at full
  // isotropy, which keeps the width (kPaper). kDouble doubles everywhere.
  ChannelMode channel_mode = ChannelMode::kPaper;
  i64 skip_kernel_lateral = 3;  // lateral taps of the isotropizing deconvs
  SkipDeconvPosition skip_position = SkipDeconvPosition::kAfterConvs;

  void validate() const {
    if (h < 1) throw UsageError("srunet: h must be >= 1");
    if (w < 1) throw UsageError("srunet: w must be >= 1");
    if (d < 1) throw UsageError("srunet: d must be >= 1");
    if (z_factor < 1 || (z_factor & (z_factor - 1)) != 0) {
      throw UsageError("srunet: z_factor must be a power of two");
    }
    if (skip_kernel_lateral < 1) throw UsageError("srunet: skip_kernel_lateral must be >= 1");
  }

  i64 lateral_log2() const {
    i64 lg = 0;
    while ((i64{1} << lg) < z_factor) ++lg;
    return lg;
  }

  // Channel width of contracting level i.
  i64 channels(i64 i) const {
    i64 e = i;
    if (channel_mode == ChannelMode::kPaper) {
      const i64 lg = lateral_log2();
      if (lg >= 1 && i > lg) e = i - 1;
    }
    return w << e;
  }

  // Remaining axial anisotropy at level i (the z factor its skip restores).
  i64 aniso(i64 i) const { return z_factor >> std::min(i, lateral_log2()); }

  // Expanding-path width at level j: half the channels arriving from below.
  i64 expand_channels(i64 j) const { return channels(j + 1) / 2; }

  // Pooling window between level i and i+1: lateral-only until the lateral
  // downscale has caught up with the axial one.
  std::array<i64, 3> pool_window(i64 i) const { return i < lateral_log2() ? std::array<i64, 3>{2, 2, 1} : std::array<i64, 3>{2, 2, 2}; }
};

namespace detail {

struct SrunetBuild {
  NetworkDesc desc;
  int next_slot = 1;

  int add_param(ParamDef def) {
    desc.params.push_back(std::move(def));
    return static_cast<int>(desc.params.size()) - 1;
  }

  int conv(const std::string& tag, i64 ic, i64 oc, std::array<i64, 3> k, Act act, int src) {
    LayerDesc l;
    l.kind = LayerKind::kConv;
    l.tag = tag;
    l.src = src;
    l.dst = next_slot++;
    l.w = add_param({tag + ".w", {oc, ic, k[0], k[1], k[2]}, InitKind::kGaussFanIn, ic * k[0] * k[1] * k[2]});
    l.b = add_param({tag + ".b", {oc}, InitKind::kZero});
    l.act = act;
    desc.layers.push_back(l);
    return l.dst;
  }

  int deconv(const std::string& tag, i64 ic, i64 oc, std::array<i64, 3> k, std::array<i64, 3> f, Act act, int src) {
    LayerDesc l;
    l.kind = LayerKind::kDeconv;
    l.tag = tag;
    l.src = src;
    l.dst = next_slot++;
    const i64 taps = k[0] * k[1] * k[2];
    const i64 vol = f[0] * f[1] * f[2];
    l.w = add_param({tag + ".w", {ic, oc, k[0], k[1], k[2]}, InitKind::kGaussFanIn, std::max<i64>(1, ic * taps / vol)});
    l.b = add_param({tag + ".b", {oc}, InitKind::kZero});
    l.geom = f;
    l.act = act;
    desc.layers.push_back(l);
    return l.dst;
  }

  int pool(const std::string& tag, std::array<i64, 3> window, int src) {
    LayerDesc l;
    l.kind = LayerKind::kAvgPool;
    l.tag = tag;
    l.src = src;
    l.dst = next_slot++;
    l.geom = window;
    desc.layers.push_back(l);
    return l.dst;
  }

  int concat(const std::string& tag, int a, int b) {
    LayerDesc l;
    l.kind = LayerKind::kConcat;
    l.tag = tag;
    l.src = a;
    l.src2 = b;
    l.dst = next_slot++;
    desc.layers.push_back(l);
    return l.dst;
  }
};

}  // namespace detail

// Contracting path: levels 0..h of d 3x3x3 SAME convs (ReLU), lateral-only
// avg pooling until isotropy, then cubic pooling. Each level's stream feeds an
// isotropizing deconv (kernel (kl,kl,2f), factor (1,1,f), channels kept) whose
// output is a cube: extent input/2^i per axis. Those cubes are the skip
// tensors, so the whole expanding path lives on an isotropic pyramid and every
// up-deconv is kernel (2,2,2), factor (2,2,2). The bottom level's isotropizing
// deconv is the bridge into the expanding path. Merges concatenate (skip
// first), followed by d convs; a 1x1x1 conv to one channel closes the net.
inline NetworkDesc build_srunet3d(const SrunetSpec& spec) {
  spec.validate();
  detail::SrunetBuild b;
  b.desc.arch = "srunet3d";
  b.desc.z_factor = spec.z_factor;
  b.desc.spec_fields = {
      {"h", std::to_string(spec.h)},
      {"w", std::to_string(spec.w)},
      {"d", std::to_string(spec.d)},
      {"z_factor", std::to_string(spec.z_factor)},
      {"channel_mode", spec.channel_mode == ChannelMode::kPaper ? "paper" : "double"},
      {"skip_kernel_lateral", std::to_string(spec.skip_kernel_lateral)},
      {"skip_deconv_position",
       spec.skip_position == SkipDeconvPosition::kAfterConvs ? "after_convs" : "before_convs"},
  };

  const i64 kl = spec.skip_kernel_lateral;
  std::vector<int> skip_slot(static_cast<std::size_t>(spec.h + 1), -1);
  std::vector<i64> skip_ch(static_cast<std::size_t>(spec.h + 1), 0);
  int cur = 0;
  i64 cur_ch = 1;
  for (i64 i = 0; i <= spec.h; ++i) {
    const i64 ci = spec.channels(i);
    const int level_in = cur;
    const i64 level_in_ch = cur_ch;
    for (i64 k = 0; k < spec.d; ++k) {
      cur = b.conv("enc" + std::to_string(i) + ".conv" + std::to_string(k), k == 0 ? cur_ch : ci, ci, {3, 3, 3},
                   Act::kRelu, cur);
    }
    cur_ch = ci;
    const i64 f = spec.aniso(i);
    // The bottom bridge always taps the level output; otherwise the knob
    // selects the level output (default) or the level input.
    const bool before = spec.skip_position == SkipDeconvPosition::kBeforeConvs && i < spec.h;
    const int skip_src = before ? level_in : cur;
    const i64 skip_c = before ? level_in_ch : ci;
    const std::string tag = (i == spec.h) ? "bridge" : "skip" + std::to_string(i);
    skip_slot[static_cast<std::size_t>(i)] =
        b.deconv(tag, skip_c, skip_c, {kl, kl, 2 * f}, {1, 1, f}, Act::kRelu, skip_src);
    skip_ch[static_cast<std::size_t>(i)] = skip_c;
    if (i < spec.h) {
      cur = b.pool("pool" + std::to_string(i), spec.pool_window(i), cur);
    }
  }

  int up = skip_slot[static_cast<std::size_t>(spec.h)];
  i64 up_ch = skip_ch[static_cast<std::size_t>(spec.h)];
  for (i64 j = spec.h - 1; j >= 0; --j) {
    const i64 ej = spec.expand_channels(j);
    up = b.deconv("up" + std::to_string(j), up_ch, ej, {2, 2, 2}, {2, 2, 2}, Act::kRelu, up);
    up = b.concat("dec" + std::to_string(j) + ".cat", skip_slot[static_cast<std::size_t>(j)], up);
    i64 ic = skip_ch[static_cast<std::size_t>(j)] + ej;
    for (i64 k = 0; k < spec.d; ++k) {
      up = b.conv("dec" + std::to_string(j) + ".conv" + std::to_string(k), ic, ej, {3, 3, 3}, Act::kRelu, up);
      ic = ej;
    }
    up_ch = ej;
  }

  const int head = b.conv("head", up_ch, 1, {1, 1, 1}, Act::kNone, up);
  b.desc.num_slots = b.next_slot;
  b.desc.output_slot = head;
  return b.desc;
}

}  // namespace isosr
