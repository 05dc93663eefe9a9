#pragma once

// Differentiable ops: forward via conv_kernels / elementwise loops, backward
// closures accumulating into parent grads. Backward skips parents that do not
// require grad (saves the input-gradient pass of the first layer in training).

#include <array>
#include <cmath>

#include "isosr/autograd.hpp"
#include "isosr/conv_kernels.hpp"
#include "isosr/tensor.hpp"

namespace isosr {

template <class T>
Node<T>* op_add(Tape<T>& tape, Node<T>* a, Node<T>* b) {
  check_same_shape(a->value, b->value, "add");
  Tensor<T> out = add(a->value, b->value);
  const bool rg = a->requires_grad || b->requires_grad;
  Node<T>* n = tape.make(std::move(out), rg, {});
  n->backward_fn = [n, a, b] {
    const auto& g = n->grad;
    if (a->requires_grad) {
      for (i64 i = 0; i < g.numel(); ++i) a->grad[i] += g[i];
    }
    if (b->requires_grad) {
      for (i64 i = 0; i < g.numel(); ++i) b->grad[i] += g[i];
    }
  };
  return n;
}

template <class T>
Node<T>* op_sub(Tape<T>& tape, Node<T>* a, Node<T>* b) {
  check_same_shape(a->value, b->value, "sub");
  Tensor<T> out = sub(a->value, b->value);
  const bool rg = a->requires_grad || b->requires_grad;
  Node<T>* n = tape.make(std::move(out), rg, {});
  n->backward_fn = [n, a, b] {
    const auto& g = n->grad;
    if (a->requires_grad) {
      for (i64 i = 0; i < g.numel(); ++i) a->grad[i] += g[i];
    }
    if (b->requires_grad) {
      for (i64 i = 0; i < g.numel(); ++i) b->grad[i] -= g[i];
    }
  };
  return n;
}

template <class T>
Node<T>* op_mul(Tape<T>& tape, Node<T>* a, Node<T>* b) {
  check_same_shape(a->value, b->value, "mul");
  Tensor<T> out = mul(a->value, b->value);
  const bool rg = a->requires_grad || b->requires_grad;
  Node<T>* n = tape.make(std::move(out), rg, {});
  n->backward_fn = [n, a, b] {
    const auto& g = n->grad;
    if (a->requires_grad) {
      for (i64 i = 0; i < g.numel(); ++i) a->grad[i] += g[i] * b->value[i];
    }
    if (b->requires_grad) {
      for (i64 i = 0; i < g.numel(); ++i) b->grad[i] += g[i] * a->value[i];
    }
  };
  return n;
}

template <class T>
Node<T>* op_scale(Tape<T>& tape, Node<T>* a, T s) {
  Node<T>* n = tape.make(scale(a->value, s), a->requires_grad, {});
  n->backward_fn = [n, a, s] {
    if (!a->requires_grad) return;
    for (i64 i = 0; i < n->grad.numel(); ++i) a->grad[i] += n->grad[i] * s;
  };
  return n;
}

template <class T>
Node<T>* op_reduce_mean(Tape<T>& tape, Node<T>* a) {
  if (a->value.empty()) throw DataError("reduce_mean: empty tensor");
  Tensor<T> out({1});
  out[0] = static_cast<T>(reduce_mean(a->value));
  Node<T>* n = tape.make(std::move(out), a->requires_grad, {});
  n->backward_fn = [n, a] {
    if (!a->requires_grad) return;
    const T g = n->grad[0] / static_cast<T>(a->value.numel());
    for (i64 i = 0; i < a->value.numel(); ++i) a->grad[i] += g;
  };
  return n;
}

template <class T>
Node<T>* op_reduce_sum(Tape<T>& tape, Node<T>* a) {
  if (a->value.empty()) throw DataError("reduce_sum: empty tensor");
  double acc = 0.0;
  for (i64 i = 0; i < a->value.numel(); ++i) acc += static_cast<double>(a->value[i]);
  Tensor<T> out({1});
  out[0] = static_cast<T>(acc);
  Node<T>* n = tape.make(std::move(out), a->requires_grad, {});
  n->backward_fn = [n, a] {
    if (!a->requires_grad) return;
    const T g = n->grad[0];
    for (i64 i = 0; i < a->value.numel(); ++i) a->grad[i] += g;
  };
  return n;
}

template <class T>
Node<T>* op_relu(Tape<T>& tape, Node<T>* x) {
  Tensor<T> out(x->value.shape());
  for (i64 i = 0; i < out.numel(); ++i) out[i] = x->value[i] > T{0} ? x->value[i] : T{0};
  Node<T>* n = tape.make(std::move(out), x->requires_grad, {});
  // Subgradient at exactly 0 is 0.
  n->backward_fn = [n, x] {
    if (!x->requires_grad) return;
    for (i64 i = 0; i < n->grad.numel(); ++i) {
      if (x->value[i] > T{0}) x->grad[i] += n->grad[i];
    }
  };
  return n;
}

// Channel-wise PReLU: x if x > 0 else a_c * x. Slope gradient sums x * g over
// the negative branch per channel, fixed (batch, spatial) order.
template <class T>
Node<T>* op_prelu(Tape<T>& tape, Node<T>* x, Node<T>* slopes) {
  const i64 C = x->value.extent(1);
  if (slopes->value.numel() != C) throw ShapeError("prelu: slope count must equal channels");
  const i64 B = x->value.extent(0);
  const i64 S = x->value.numel() / std::max<i64>(1, B * C);
  Tensor<T> out(x->value.shape());
  for (i64 b = 0; b < B; ++b) {
    for (i64 c = 0; c < C; ++c) {
      const T a = slopes->value[c];
      const T* xi = x->value.data() + (b * C + c) * S;
      T* oi = out.data() + (b * C + c) * S;
      for (i64 i = 0; i < S; ++i) oi[i] = xi[i] > T{0} ? xi[i] : a * xi[i];
    }
  }
  const bool rg = x->requires_grad || slopes->requires_grad;
  Node<T>* n = tape.make(std::move(out), rg, {});
  n->backward_fn = [n, x, slopes, B, C, S] {
    for (i64 c = 0; c < C; ++c) {
      const T a = slopes->value[c];
      double ga = 0.0;
      for (i64 b = 0; b < B; ++b) {
        const T* xi = x->value.data() + (b * C + c) * S;
        const T* gi = n->grad.data() + (b * C + c) * S;
        T* gx = x->requires_grad ? x->grad.data() + (b * C + c) * S : nullptr;
        for (i64 i = 0; i < S; ++i) {
          if (xi[i] > T{0}) {
            if (gx) gx[i] += gi[i];
          } else {
            if (gx) gx[i] += a * gi[i];
            ga += static_cast<double>(gi[i]) * static_cast<double>(xi[i]);
          }
        }
      }
      if (slopes->requires_grad) slopes->grad[c] += static_cast<T>(ga);
    }
  };
  return n;
}

template <class T>
Node<T>* op_concat_channels(Tape<T>& tape, Node<T>* a, Node<T>* b) {
  const auto& sa = a->value.shape();
  const auto& sb = b->value.shape();
  if (sa.size() != 5 || sb.size() != 5) throw ShapeError("concat_channels: inputs must be 5-d");
  for (int axis : {0, 2, 3, 4}) {
    if (sa[static_cast<std::size_t>(axis)] != sb[static_cast<std::size_t>(axis)]) {
      throw ShapeError("concat_channels: extent mismatch on axis " + std::to_string(axis) + ": " + shape_str(sa) +
                       " vs " + shape_str(sb));
    }
  }
  const i64 B = sa[0], CA = sa[1], CB = sb[1], S = sa[2] * sa[3] * sa[4];
  Tensor<T> out({B, CA + CB, sa[2], sa[3], sa[4]});
  for (i64 bi = 0; bi < B; ++bi) {
    T* o = out.data() + bi * (CA + CB) * S;
    const T* pa = a->value.data() + bi * CA * S;
    const T* pb = b->value.data() + bi * CB * S;
    for (i64 i = 0; i < CA * S; ++i) o[i] = pa[i];
    for (i64 i = 0; i < CB * S; ++i) o[CA * S + i] = pb[i];
  }
  const bool rg = a->requires_grad || b->requires_grad;
  Node<T>* n = tape.make(std::move(out), rg, {});
  n->backward_fn = [n, a, b, B, CA, CB, S] {
    for (i64 bi = 0; bi < B; ++bi) {
      const T* g = n->grad.data() + bi * (CA + CB) * S;
      if (a->requires_grad) {
        T* ga = a->grad.data() + bi * CA * S;
        for (i64 i = 0; i < CA * S; ++i) ga[i] += g[i];
      }
      if (b->requires_grad) {
        T* gb = b->grad.data() + bi * CB * S;
        for (i64 i = 0; i < CB * S; ++i) gb[i] += g[CA * S + i];
      }
    }
  };
  return n;
}

template <class T>
Node<T>* op_conv3d(Tape<T>& tape, Node<T>* x, Node<T>* w, Node<T>* bias, std::array<i64, 3> stride, Pad pad) {
  Tensor<T> out = conv3d_forward(x->value, w->value, bias ? &bias->value : nullptr, stride, pad);
  const bool rg = x->requires_grad || w->requires_grad || (bias && bias->requires_grad);
  Node<T>* n = tape.make(std::move(out), rg, {});
  n->backward_fn = [n, x, w, bias, stride, pad] {
    if (x->requires_grad) {
      Tensor<T> gx = conv3d_backward_input(x->value, w->value, n->grad, stride, pad);
      for (i64 i = 0; i < gx.numel(); ++i) x->grad[i] += gx[i];
    }
    if (w->requires_grad) {
      Tensor<T> gw = conv3d_backward_weight(x->value, w->value, n->grad, stride, pad);
      for (i64 i = 0; i < gw.numel(); ++i) w->grad[i] += gw[i];
    }
    if (bias && bias->requires_grad) {
      Tensor<T> gb = sum_over_channel(n->grad);
      for (i64 i = 0; i < gb.numel(); ++i) bias->grad[i] += gb[i];
    }
  };
  return n;
}

template <class T>
Node<T>* op_deconv3d(Tape<T>& tape, Node<T>* x, Node<T>* w, Node<T>* bias, std::array<i64, 3> factor) {
  Tensor<T> out = deconv3d_forward(x->value, w->value, bias ? &bias->value : nullptr, factor);
  const bool rg = x->requires_grad || w->requires_grad || (bias && bias->requires_grad);
  Node<T>* n = tape.make(std::move(out), rg, {});
  n->backward_fn = [n, x, w, bias, factor] {
    if (x->requires_grad) {
      Tensor<T> gx = deconv3d_backward_input(x->value, w->value, n->grad, factor);
      for (i64 i = 0; i < gx.numel(); ++i) x->grad[i] += gx[i];
    }
    if (w->requires_grad) {
      Tensor<T> gw = deconv3d_backward_weight(x->value, w->value, n->grad, factor);
      for (i64 i = 0; i < gw.numel(); ++i) w->grad[i] += gw[i];
    }
    if (bias && bias->requires_grad) {
      Tensor<T> gb = sum_over_channel(n->grad);
      for (i64 i = 0; i < gb.numel(); ++i) bias->grad[i] += gb[i];
    }
  };
  return n;
}

template <class T>
Node<T>* op_avgpool3d(Tape<T>& tape, Node<T>* x, std::array<i64, 3> window) {
  Tensor<T> out = avgpool3d_forward(x->value, window);
  Node<T>* n = tape.make(std::move(out), x->requires_grad, {});
  n->backward_fn = [n, x, window] {
    if (!x->requires_grad) return;
    Tensor<T> gx = avgpool3d_backward(x->value, n->grad, window);
    for (i64 i = 0; i < gx.numel(); ++i) x->grad[i] += gx[i];
  };
  return n;
}

// mean((pred - target)^2) against a constant target.
template <class T>
Node<T>* op_mse_loss(Tape<T>& tape, Node<T>* pred, const Tensor<T>& target) {
  check_same_shape(pred->value, target, "mse_loss");
  if (pred->value.empty()) throw DataError("mse_loss: empty tensors");
  double acc = 0.0;
  for (i64 i = 0; i < target.numel(); ++i) {
    const double d = static_cast<double>(pred->value[i]) - static_cast<double>(target[i]);
    acc += d * d;
  }
  Tensor<T> out({1});
  out[0] = static_cast<T>(acc / static_cast<double>(target.numel()));
  Node<T>* n = tape.make(std::move(out), pred->requires_grad, {});
  // Capturing target by value keeps the constant alive for the backward pass.
  n->backward_fn = [n, pred, target] {
    if (!pred->requires_grad) return;
    const T g = n->grad[0] * T{2} / static_cast<T>(target.numel());
    for (i64 i = 0; i < target.numel(); ++i) pred->grad[i] += g * (pred->value[i] - target[i]);
  };
  return n;
}

// Per-voxel weights for the cubic-weighted MSE: 1/2 + (hr-cub)^2 / (2 max),
// where max is the volume-wide maximum of (hr-cub)^2. Weights live in
// [0.5, 1.0]; a perfect cubic baseline (max = 0) degenerates to uniform 0.5.
template <class T>
Tensor<T> wmse_weights(const Tensor<T>& hr, const Tensor<T>& cub) {
  check_same_shape(hr, cub, "wmse_weights");
  Tensor<T> w(hr.shape());
  double maxsq = 0.0;
  for (i64 i = 0; i < hr.numel(); ++i) {
    const double d = static_cast<double>(hr[i]) - static_cast<double>(cub[i]);
    maxsq = std::max(maxsq, d * d);
  }
  if (maxsq == 0.0) {
    for (i64 i = 0; i < w.numel(); ++i) w[i] = T{0.5};
    return w;
  }
  for (i64 i = 0; i < hr.numel(); ++i) {
    const double d = static_cast<double>(hr[i]) - static_cast<double>(cub[i]);
    w[i] = static_cast<T>(0.5 + (d * d) / (2.0 * maxsq));
  }
  return w;
}

// mean((hr - pred)^2 * weight(hr, cub)) with hr and cub constant.
template <class T>
Node<T>* op_wmse_loss(Tape<T>& tape, Node<T>* pred, const Tensor<T>& hr, const Tensor<T>& cub) {
  check_same_shape(pred->value, hr, "wmse_loss");
  if (pred->value.empty()) throw DataError("wmse_loss: empty tensors");
  Tensor<T> wts = wmse_weights(hr, cub);
  double acc = 0.0;
  for (i64 i = 0; i < hr.numel(); ++i) {
    const double d = static_cast<double>(hr[i]) - static_cast<double>(pred->value[i]);
    acc += d * d * static_cast<double>(wts[i]);
  }
  Tensor<T> out({1});
  out[0] = static_cast<T>(acc / static_cast<double>(hr.numel()));
  Node<T>* n = tape.make(std::move(out), pred->requires_grad, {});
  n->backward_fn = [n, pred, hr, wts] {
    if (!pred->requires_grad) return;
    const T g = n->grad[0] * T{2} / static_cast<T>(hr.numel());
    for (i64 i = 0; i < hr.numel(); ++i) {
      pred->grad[i] += g * wts[i] * (pred->value[i] - hr[i]);
    }
  };
  return n;
}

}  // namespace isosr
