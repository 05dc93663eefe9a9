#pragma once

// Declarative network description: a parameter table plus a flat layer program
// over activation slots. Builders (fsrcnn.hpp / srunet.hpp) emit descriptions;
// forward() interprets one on a tape at float or double precision.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "isosr/autograd.hpp"
#include "isosr/ops.hpp"
#include "isosr/rng.hpp"
#include "isosr/tensor.hpp"

namespace isosr {

enum class LayerKind { kConv, kDeconv, kAvgPool, kConcat };
enum class Act { kNone, kRelu, kPrelu };

enum class InitKind { kGaussFanIn, kZero, kConst };

struct ParamDef {
  std::string name;
  Shape shape;
  InitKind init = InitKind::kZero;
  std::int64_t fan_in = 1;    // for kGaussFanIn: std = sqrt(2 / fan_in)
  double const_value = 0.0;   // for kConst
};

struct LayerDesc {
  LayerKind kind;
  std::string tag;            // names the layer in error messages
  int src = -1, src2 = -1, dst = -1;
  int w = -1, b = -1;         // param table indices
  Act act = Act::kNone;
  int act_param = -1;         // PReLU slope param index
  Pad pad = Pad::kSame;
  std::array<i64, 3> geom{1, 1, 1};  // conv stride / deconv factor / pool window
};

struct NetworkDesc {
  std::string arch;
  std::vector<std::pair<std::string, std::string>> spec_fields;  // echoed in checkpoints
  std::vector<ParamDef> params;
  std::vector<LayerDesc> layers;
  int num_slots = 0;
  int output_slot = -1;
  i64 z_factor = 1;
};

inline i64 count_params(const NetworkDesc& desc) {
  i64 total = 0;
  for (const auto& p : desc.params) total += shape_numel(p.shape);
  return total;
}

inline int param_index(const NetworkDesc& desc, const std::string& name) {
  for (std::size_t i = 0; i < desc.params.size(); ++i) {
    if (desc.params[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

/// Deterministic parameter init: each parameter draws from its own RNG stream
// (its table index), so values depend only on (seed, index) and never on
// evaluation order.
template <class T>
std::vector<Tensor<T>> init_params(const NetworkDesc& desc, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<Tensor<T>> out;
  out.reserve(desc.params.size());
  for (std::size_t p = 0; p < desc.params.size(); ++p) {
    const ParamDef& def = desc.params[p];
    Tensor<T> t(def.shape);
    switch (def.init) {
      case InitKind::kZero:
        break;
      case InitKind::kConst:
        for (i64 i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(def.const_value);
        break;
      case InitKind::kGaussFanIn: {
        const double std_dev = std::sqrt(2.0 / static_cast<double>(def.fan_in));
        for (i64 i = 0; i < t.numel(); ++i) {
          t[i] = static_cast<T>(std_dev * rng.gaussian(p, static_cast<std::uint64_t>(i)));
        }
        break;
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

// Walks the layer program symbolically and returns the output shape for a
// given input shape; errors name the offending layer and axis. Used both as
// the build-time divisibility check and the shape-contract test hook.
inline Shape shape_walk(const NetworkDesc& desc, const Shape& input) {
  if (input.size() != 5) throw ShapeError("forward: input must be 5-d (b,c,x,y,z), got " + shape_str(input));
  std::vector<Shape> slots(static_cast<std::size_t>(desc.num_slots));
  slots[0] = input;
  auto spatial = [](const Shape& s) { return Shape{s[2], s[3], s[4]}; };
  for (const LayerDesc& l : desc.layers) {
    const Shape& in = slots[static_cast<std::size_t>(l.src)];
    if (in.empty()) throw ShapeError(l.tag + ": unset input slot");
    Shape out = in;
    switch (l.kind) {
      case LayerKind::kConv: {
        const Shape& ws = desc.params[static_cast<std::size_t>(l.w)].shape;
        if (in[1] != ws[1]) {
          throw ShapeError(l.tag + ": expects " + std::to_string(ws[1]) + " channels, got " + std::to_string(in[1]));
        }
        out[1] = ws[0];
        for (int a = 0; a < 3; ++a) {
          const auto g = (l.pad == Pad::kSame) ? same_axis(in[static_cast<std::size_t>(2 + a)], ws[static_cast<std::size_t>(2 + a)], l.geom[static_cast<std::size_t>(a)])
                                               : valid_axis(in[static_cast<std::size_t>(2 + a)], ws[static_cast<std::size_t>(2 + a)], l.geom[static_cast<std::size_t>(a)]);
          out[static_cast<std::size_t>(2 + a)] = g.out;
        }
        break;
      }
      case LayerKind::kDeconv: {
        const Shape& ws = desc.params[static_cast<std::size_t>(l.w)].shape;
        if (in[1] != ws[0]) {
          throw ShapeError(l.tag + ": expects " + std::to_string(ws[0]) + " channels, got " + std::to_string(in[1]));
        }
        out[1] = ws[1];
        for (int a = 0; a < 3; ++a) {
          out[static_cast<std::size_t>(2 + a)] = in[static_cast<std::size_t>(2 + a)] * l.geom[static_cast<std::size_t>(a)];
        }
        break;
      }
      case LayerKind::kAvgPool: {
        static const char* axis_name[3] = {"x", "y", "z"};
        for (int a = 0; a < 3; ++a) {
          const i64 e = in[static_cast<std::size_t>(2 + a)];
          const i64 wnd = l.geom[static_cast<std::size_t>(a)];
          if (e % wnd) {
            throw ShapeError(l.tag + ": " + axis_name[a] + " extent " + std::to_string(e) + " not divisible by " +
                             std::to_string(wnd));
          }
          out[static_cast<std::size_t>(2 + a)] = e / wnd;
        }
        break;
      }
      case LayerKind::kConcat: {
        const Shape& in2 = slots[static_cast<std::size_t>(l.src2)];
        if (spatial(in) != spatial(in2) || in[0] != in2[0]) {
          throw ShapeError(l.tag + ": extent mismatch " + shape_str(in) + " vs " + shape_str(in2));
        }
        out[1] = in[1] + in2[1];
        break;
      }
    }
    slots[static_cast<std::size_t>(l.dst)] = std::move(out);
  }
  return slots[static_cast<std::size_t>(desc.output_slot)];
}

// Smallest power-of-two extent multiple each spatial axis must honor for the
// layer program to run (pooling divisibility). Probed through shape_walk, so
// it tracks whatever constraints the builders emit. z is in input voxels.
inline std::array<i64, 3> extent_multiples(const NetworkDesc& desc) {
  std::array<i64, 3> mult{1, 1, 1};
  const Shape base{1, 1, 1024, 1024, 1024};
  for (int a = 0; a < 3; ++a) {
    bool found = false;
    for (i64 m = 1; m <= 1024; m *= 2) {
      Shape probe = base;
      probe[static_cast<std::size_t>(2 + a)] = m;
      try {
        shape_walk(desc, probe);
      } catch (const ShapeError&) {
        continue;
      }
      mult[static_cast<std::size_t>(a)] = m;
      found = true;
      break;
    }
    if (!found) throw ShapeError(desc.arch + ": no workable extent multiple on axis " + std::to_string(a));
  }
  return mult;
}

template <class T>
struct ForwardResult {
  Node<T>* output = nullptr;
  std::vector<Node<T>*> param_nodes;  // same order as desc.params
  Node<T>* input = nullptr;
};

// Runs the layer program on a tape. Fresh leaf nodes are created for the
// parameters each call (define-by-run); pass train=true to request parameter
// gradients, input_grad=true to request the input gradient (gradcheck).
template <class T>
ForwardResult<T> forward(const NetworkDesc& desc, const std::vector<Tensor<T>>& params, Tape<T>& tape,
                         Tensor<T> input, bool train, bool input_grad = false) {
  shape_walk(desc, input.shape());  // reject bad extents before any compute
  ForwardResult<T> r;
  r.param_nodes.reserve(desc.params.size());
  for (std::size_t p = 0; p < desc.params.size(); ++p) {
    r.param_nodes.push_back(tape.leaf(params[p], train, desc.params[p].name));
  }
  r.input = tape.leaf(std::move(input), input_grad, "input");
  std::vector<Node<T>*> slots(static_cast<std::size_t>(desc.num_slots), nullptr);
  slots[0] = r.input;
  for (const LayerDesc& l : desc.layers) {
    Node<T>* in = slots[static_cast<std::size_t>(l.src)];
    Node<T>* out = nullptr;
    switch (l.kind) {
      case LayerKind::kConv:
        out = op_conv3d(tape, in, r.param_nodes[static_cast<std::size_t>(l.w)],
                        l.b >= 0 ? r.param_nodes[static_cast<std::size_t>(l.b)] : nullptr, l.geom, l.pad);
        break;
      case LayerKind::kDeconv:
        out = op_deconv3d(tape, in, r.param_nodes[static_cast<std::size_t>(l.w)],
                          l.b >= 0 ? r.param_nodes[static_cast<std::size_t>(l.b)] : nullptr, l.geom);
        break;
      case LayerKind::kAvgPool:
        out = op_avgpool3d(tape, in, l.geom);
        break;
      case LayerKind::kConcat:
        out = op_concat_channels(tape, in, slots[static_cast<std::size_t>(l.src2)]);
        break;
    }
    if (l.act == Act::kRelu) {
      out = op_relu(tape, out);
    } else if (l.act == Act::kPrelu) {
      out = op_prelu(tape, out, r.param_nodes[static_cast<std::size_t>(l.act_param)]);
    }
    slots[static_cast<std::size_t>(l.dst)] = out;
  }
  r.output = slots[static_cast<std::size_t>(desc.output_slot)];
  return r;
}

}  // namespace isosr
