#include "isosr/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <map>

#include "isosr/fsrcnn.hpp"
#include "isosr/model.hpp"
#include "isosr/ops.hpp"
#include "isosr/rng.hpp"
#include "isosr/srunet.hpp"

namespace isosr {

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

Tensor<double> draw(const CounterRng& rng, std::uint64_t stream, const Shape& shape, double scale = 0.5,
                    double kink_shift = 0.0) {
  Tensor<double> t(shape);
  for (i64 i = 0; i < t.numel(); ++i) {
    double v = scale * rng.gaussian(stream, static_cast<std::uint64_t>(i));
    if (kink_shift > 0.0) v += v >= 0.0 ? kink_shift : -kink_shift;
    t[i] = v;
  }
  return t;
}

// Builds the scalar graph from leaves made of `inputs`; must be a pure
// function of the leaf values.
using Builder = std::function<Node<double>*(Tape<double>&, const std::vector<Node<double>*>&)>;

GradCheckResult check_builder(const std::string& name, const std::vector<Tensor<double>>& inputs,
                              const Builder& build, double step) {
  GradCheckResult res;
  res.name = name;

  Tape<double> tape;
  std::vector<Node<double>*> leaves;
  leaves.reserve(inputs.size());
  for (const auto& x : inputs) leaves.push_back(tape.leaf(x, true));
  Node<double>* loss = build(tape, leaves);
  tape.backward(loss);

  for (std::size_t which = 0; which < inputs.size(); ++which) {
    const auto f = [&](const Tensor<double>& probe) {
      Tape<double> t2;
      std::vector<Node<double>*> lv;
      lv.reserve(inputs.size());
      for (std::size_t j = 0; j < inputs.size(); ++j) {
        lv.push_back(t2.leaf(j == which ? probe : inputs[j], false));
      }
      return build(t2, lv)->value[0];
    };
    const Tensor<double> fd = finite_diff_grad(f, inputs[which], step);
    const Tensor<double>& an = leaves[which]->grad;
    for (i64 i = 0; i < fd.numel(); ++i) {
      res.max_rel_err = std::max(res.max_rel_err, rel_err(an[i], fd[i]));
    }
    res.elements += fd.numel();
  }
  return res;
}

// Random but fixed linear projection makes the loss sensitive to every
// output element.
Node<double>* project(Tape<double>& tape, Node<double>* out, const CounterRng& rng, std::uint64_t stream) {
  Tensor<double> r(out->value.shape());
  for (i64 i = 0; i < r.numel(); ++i) r[i] = rng.gaussian(stream, static_cast<std::uint64_t>(i));
  Node<double>* rn = tape.leaf(std::move(r), false);
  return op_reduce_sum(tape, op_mul(tape, out, rn));
}

GradCheckResult check_arch(const std::string& name, const NetworkDesc& desc, const Shape& input_shape,
                           std::uint64_t seed, double step) {
  GradCheckResult res;
  res.name = name;
  const CounterRng rng(seed ^ 0xA5C4ULL);

  std::vector<Tensor<double>> params = init_params<double>(desc, seed);
  Tensor<double> input = draw(rng, 900, input_shape, 0.5);
  const Tensor<double> target = draw(rng, 901, shape_walk(desc, input_shape), 0.5);

  Tape<double> tape;
  ForwardResult<double> fwd = forward(desc, params, tape, input, /*train=*/true, /*input_grad=*/true);
  Node<double>* loss = op_mse_loss(tape, fwd.output, target);
  tape.backward(loss);

  const auto value_at = [&](const std::vector<Tensor<double>>& pr, const Tensor<double>& in) {
    Tape<double> t2;
    ForwardResult<double> f2 = forward(desc, pr, t2, in, /*train=*/false);
    double acc = 0.0;
    for (i64 i = 0; i < target.numel(); ++i) {
      const double d = f2.output->value[i] - target[i];
      acc += d * d;
    }
    return acc / static_cast<double>(target.numel());
  };

  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto f = [&](const Tensor<double>& probe) {
      std::vector<Tensor<double>> pr = params;
      pr[p] = probe;
      return value_at(pr, input);
    };
    const Tensor<double> fd = finite_diff_grad(f, params[p], step);
    const Tensor<double>& an = fwd.param_nodes[p]->grad;
    for (i64 i = 0; i < fd.numel(); ++i) res.max_rel_err = std::max(res.max_rel_err, rel_err(an[i], fd[i]));
    res.elements += fd.numel();
  }
  {
    const auto f = [&](const Tensor<double>& probe) { return value_at(params, probe); };
    const Tensor<double> fd = finite_diff_grad(f, input, step);
    const Tensor<double>& an = fwd.input->grad;
    for (i64 i = 0; i < fd.numel(); ++i) res.max_rel_err = std::max(res.max_rel_err, rel_err(an[i], fd[i]));
    res.elements += fd.numel();
  }
  return res;
}

using CheckFn = std::function<GradCheckResult(std::uint64_t)>;

const std::vector<std::pair<std::string, CheckFn>>& registry() {
  static const std::vector<std::pair<std::string, CheckFn>> table = {
      {"add",
       [](std::uint64_t seed) {
         const CounterRng rng(seed);
         return check_builder("add", {draw(rng, 0, {2, 3, 4}), draw(rng, 1, {2, 3, 4})},
                              [&rng](Tape<double>& t, const std::vector<Node<double>*>& v) {
                                return project(t, op_add(t, v[0], v[1]), rng, 100);
                              },
                              1e-5);
       }},
      {"sub",
       [](std::uint64_t seed) {
         const CounterRng rng(seed);
         return check_builder("sub", {draw(rng, 0, {3, 5}), draw(rng, 1, {3, 5})},
                              [&rng](Tape<double>& t, const std::vector<Node<double>*>& v) {
                                return project(t, op_sub(t, v[0], v[1]), rng, 100);
                              },
                              1e-5);
       }},
      {"mul",
       [](std::uint64_t seed) {
         const CounterRng rng(seed);
         return check_builder("mul", {draw(rng, 0, {2, 3, 4}), draw(rng, 1, {2, 3, 4})},
                              [&rng](Tape<double>& t, const std::vector<Node<double>*>& v) {
                                return project(t, op_mul(t, v[0], v[1]), rng, 100);
                              },
                              1e-5);
       }},
      {"scale",
       [](std::uint64_t seed) {
         const CounterRng rng(seed);
         return check_builder("scale", {draw(rng, 0, {4, 4})},
                              [&rng](Tape<double>& t, const std::vector<Node<double>*>& v) {
                                return project(t, op_scale(t, v[0], 1.7), rng, 100);
                              },
                              1e-5);
       }},
      {"reduce_mean",
       [](std::uint64_t seed) {
         const CounterRng rng(seed);
         return check_builder("reduce_mean", {draw(rng, 0, {3, 4, 5})},
                              [](Tape<double>& t, const std::vector<Node<double>*>& v) {
                                return op_reduce_mean(t, v[0]);
                              },
                              1e-5);
       }},
      {"reduce_sum",
       [](std::uint64_t seed) {
         const CounterRng rng(seed);
         return check_builder("reduce_sum", {draw(rng, 0, {3, 4, 5})},
                              [](Tape<double>& t, const std::vector<Node<double>*>& v) {
                                return op_reduce_sum(t, v[0]);
                              },
                              1e-5);
       }},
      {"relu",
       [](std::uint64_t seed) {
         const CounterRng rng(seed);
         // inputs shifted 0.05 away from the kink so central differences
         // never straddle it
         return check_builder("relu", {draw(rng, 0, {1, 2, 3, 3, 2}, 0.5, 0.05)},
                              [&rng](Tape<double>& t, const std::vector<Node<double>*>& v) {
                                return project(t, op_relu(t, v[0]), rng, 100);
                              },
                              1e-5);
       }},
      {"prelu",
       [](std::uint64_t seed) {
         const CounterRng rng(seed);
         return check_builder("prelu",
                              {draw(rng, 0, {2, 3, 2, 2, 2}, 0.5, 0.05), draw(rng, 1, {3}, 0.3, 0.1)},
                              [&rng](Tape<double>& t, const std::vector<Node<double>*>& v) {
                                return project(t, op_prelu(t, v[0], v[1]), rng, 100);
                              },
                              1e-5);
       }},
      {"concat_channels",
       [](std::uint64_t seed) {
         const CounterRng rng(seed);
         return check_builder("concat_channels", {draw(rng, 0, {2, 2, 2, 3, 2}), draw(rng, 1, {2, 3, 2, 3, 2})},
                              [&rng](Tape<double>& t, const std::vector<Node<double>*>& v) {
                                return project(t, op_concat_channels(t, v[0], v[1]), rng, 100);
                              },
                              1e-5);
       }},
      {"conv3d_same",
       [](std::uint64_t seed) {
         const CounterRng rng(seed);
         return check_builder("conv3d_same",
                              {draw(rng, 0, {2, 2, 5, 4, 3}), draw(rng, 1, {3, 2, 3, 3, 2}), draw(rng, 2, {3})},
                              [&rng](Tape<double>& t, const std::vector<Node<double>*>& v) {
                                return project(t, op_conv3d(t, v[0], v[1], v[2], {1, 1, 1}, Pad::kSame), rng, 100);
                              },
                              1e-5);
       }},
      {"conv3d_valid",
       [](std::uint64_t seed) {
         const CounterRng rng(seed);
         return check_builder("conv3d_valid",
                              {draw(rng, 0, {1, 2, 5, 4, 4}), draw(rng, 1, {2, 2, 3, 2, 3}), draw(rng, 2, {2})},
                              [&rng](Tape<double>& t, const std::vector<Node<double>*>& v) {
                                return project(t, op_conv3d(t, v[0], v[1], v[2], {1, 1, 1}, Pad::kValid), rng, 100);
                              },
                              1e-5);
       }},
      {"conv3d_strided",
       [](std::uint64_t seed) {
         const CounterRng rng(seed);
         return check_builder("conv3d_strided",
                              {draw(rng, 0, {1, 2, 6, 5, 4}), draw(rng, 1, {3, 2, 3, 3, 3}), draw(rng, 2, {3})},
                              [&rng](Tape<double>& t, const std::vector<Node<double>*>& v) {
                                return project(t, op_conv3d(t, v[0], v[1], v[2], {2, 2, 2}, Pad::kSame), rng, 100);
                              },
                              1e-5);
       }},
      {"deconv3d_z",
       [](std::uint64_t seed) {
         const CounterRng rng(seed);
         return check_builder("deconv3d_z",
                              {draw(rng, 0, {1, 2, 3, 3, 2}), draw(rng, 1, {2, 3, 3, 3, 4}), draw(rng, 2, {3})},
                              [&rng](Tape<double>& t, const std::vector<Node<double>*>& v) {
                                return project(t, op_deconv3d(t, v[0], v[1], v[2], {1, 1, 2}), rng, 100);
                              },
                              1e-5);
       }},
      {"deconv3d_iso",
       [](std::uint64_t seed) {
         const CounterRng rng(seed);
         return check_builder("deconv3d_iso",
                              {draw(rng, 0, {1, 3, 3, 2, 2}), draw(rng, 1, {3, 2, 2, 2, 2}), draw(rng, 2, {2})},
                              [&rng](Tape<double>& t, const std::vector<Node<double>*>& v) {
                                return project(t, op_deconv3d(t, v[0], v[1], v[2], {2, 2, 2}), rng, 100);
                              },
                              1e-5);
       }},
      {"avgpool3d",
       [](std::uint64_t seed) {
         const CounterRng rng(seed);
         return check_builder("avgpool3d", {draw(rng, 0, {2, 2, 4, 4, 2})},
                              [&rng](Tape<double>& t, const std::vector<Node<double>*>& v) {
                                return project(t, op_avgpool3d(t, v[0], {2, 2, 1}), rng, 100);
                              },
                              1e-5);
       }},
      {"mse_loss",
       [](std::uint64_t seed) {
         const CounterRng rng(seed);
         const Tensor<double> target = draw(rng, 50, {1, 1, 3, 3, 4});
         return check_builder("mse_loss", {draw(rng, 0, {1, 1, 3, 3, 4})},
                              [target](Tape<double>& t, const std::vector<Node<double>*>& v) {
                                return op_mse_loss(t, v[0], target);
                              },
                              1e-5);
       }},
      {"wmse_loss",
       [](std::uint64_t seed) {
         const CounterRng rng(seed);
         const Tensor<double> hr = draw(rng, 50, {1, 1, 3, 3, 4});
         const Tensor<double> cub = draw(rng, 51, {1, 1, 3, 3, 4});
         return check_builder("wmse_loss", {draw(rng, 0, {1, 1, 3, 3, 4})},
                              [hr, cub](Tape<double>& t, const std::vector<Node<double>*>& v) {
                                return op_wmse_loss(t, v[0], hr, cub);
                              },
                              1e-5);
       }},
      {"fsrcnn3d",
       [](std::uint64_t seed) {
         FsrcnnSpec s;
         s.m = 1;
         s.d = 2;
         s.s = 1;
         s.z_factor = 2;
         return check_arch("fsrcnn3d", build_fsrcnn3d(s), {1, 1, 6, 6, 2}, seed, 1e-6);
       }},
      {"srunet3d",
       [](std::uint64_t seed) {
         SrunetSpec s;
         s.h = 1;
         s.w = 2;
         s.d = 1;
         s.z_factor = 2;
         return check_arch("srunet3d", build_srunet3d(s), {1, 1, 4, 4, 2}, seed, 1e-6);
       }},
  };
  return table;
}

}  // namespace

std::vector<std::string> gradcheck_names() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : registry()) names.push_back(name);
  return names;
}

GradCheckResult run_gradcheck(const std::string& name, std::uint64_t seed) {
  for (const auto& [n, fn] : registry()) {
    if (n == name) return fn(seed);
  }
  throw UsageError("unknown gradcheck '" + name + "'");
}

std::vector<GradCheckResult> run_all_gradchecks(std::uint64_t seed) {
  std::vector<GradCheckResult> out;
  for (const auto& [n, fn] : registry()) out.push_back(fn(seed));
  return out;
}

GradCheckResult run_negative_control(std::uint64_t seed) {
  const CounterRng rng(seed);
  return check_builder(
      "corrupted_conv_backward", {draw(rng, 0, {1, 2, 4, 4, 3}), draw(rng, 1, {2, 2, 3, 3, 2})},
      [&rng](Tape<double>& t, const std::vector<Node<double>*>& v) {
        Node<double>* x = v[0];
        Node<double>* w = v[1];
        Tensor<double> out = conv3d_forward<double>(x->value, w->value, nullptr, {1, 1, 1}, Pad::kSame);
        Node<double>* n = t.make(std::move(out), x->requires_grad || w->requires_grad, {});
        n->backward_fn = [n, x, w] {
          if (x->requires_grad) {
            Tensor<double> gx = conv3d_backward_input(x->value, w->value, n->grad, {1, 1, 1}, Pad::kSame);
            for (i64 i = 0; i < gx.numel(); ++i) x->grad[i] += gx[i];
          }
          if (w->requires_grad) {
            Tensor<double> gw = conv3d_backward_weight(x->value, w->value, n->grad, {1, 1, 1}, Pad::kSame);
            // deliberate 1% corruption; the harness must flag this
            for (i64 i = 0; i < gw.numel(); ++i) w->grad[i] += 1.01 * gw[i];
          }
        };
        return project(t, n, rng, 100);
      },
      1e-5);
}

}  // namespace isosr
