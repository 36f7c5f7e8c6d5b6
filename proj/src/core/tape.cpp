#include "agcl/core/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "agcl/core/kernels.hpp"

namespace agcl {

template <typename T>
Var<T> Tape<T>::input(Tensor<T> value, std::string name, bool trainable) {
  Node node;
  node.label = std::move(name);
  node.value = std::move(value);
  node.requires_grad = trainable;
  nodes_.push_back(std::move(node));
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
std::string Tape<T>::next_label(std::string_view op) const {
  return std::string(op) + "#" + std::to_string(nodes_.size());
}

template <typename T>
Var<T> Tape<T>::record(std::string_view op, Tensor<T> value,
                       std::initializer_list<Var<T>> parents,
                       BackwardFn backward) {
  return record(op, std::move(value), std::vector<Var<T>>(parents),
                std::move(backward));
}

template <typename T>
Var<T> Tape<T>::record(std::string_view op, Tensor<T> value,
                       const std::vector<Var<T>>& parents,
                       BackwardFn backward) {
  Node node;
  node.label = next_label(op);
  if (check_finite_ && !value.all_finite()) {
    throw NumericError("non-finite value produced by node '" + node.label + "'");
  }
  for (const auto& p : parents) {
    if (p.tape != this) throw StructuralError(node.label + ": operand from another tape");
    node.requires_grad = node.requires_grad || nodes_[p.id].requires_grad;
  }
  node.value = std::move(value);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(std::size_t id) {
  Node& node = nodes_.at(id);
  if (node.grad.empty() && !node.value.empty()) node.grad = Tensor<T>(node.value.shape());
  return node.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> output, const Tensor<T>& output_grad) {
  if (nodes_.empty()) throw StateError("backward called before any forward evaluation");
  if (backward_done_) throw StateError("backward may run only once per forward pass");
  if (output.tape != this) throw StructuralError("backward: output belongs to another tape");
  if (output_grad.shape() != value(output.id).shape()) {
    throw StructuralError("backward: output gradient shape " +
                          shape_string(output_grad.shape()) + " != output shape " +
                          shape_string(value(output.id).shape()));
  }
  backward_done_ = true;
  nodes_[output.id].grad = output_grad;
  for (std::size_t id = output.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.backward && !node.grad.empty()) node.backward(*this, id);
  }
}

template <typename T>
void Tape<T>::backward(Var<T> output) {
  if (nodes_.empty()) throw StateError("backward called before any forward evaluation");
  if (value(output.id).numel() != 1) {
    throw StructuralError("backward without seed needs a scalar output, got " +
                          shape_string(value(output.id).shape()));
  }
  backward(output, Tensor<T>(value(output.id).shape(), T{1}));
}

namespace {

template <typename T>
void require_same_shape(const Tape<T>& tape, std::string_view op, Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) {
    throw StructuralError(tape.next_label(op) + ": shape mismatch " +
                          shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

template <typename T>
void require_rank(const Tape<T>& tape, std::string_view op, Var<T> a, std::size_t rank) {
  if (a.value().rank() != rank) {
    throw StructuralError(tape.next_label(op) + ": expected rank " + std::to_string(rank) +
                          ", got shape " + shape_string(a.shape()));
  }
}

template <typename T>
void accumulate(Tape<T>& t, Var<T> target, const Tensor<T>& g) {
  if (!t.requires_grad(target.id)) return;
  auto& buf = t.grad_buffer(target.id);
  for (std::size_t i = 0; i < g.numel(); ++i) buf[i] += g[i];
}

template <typename T>
std::vector<T> transpose(const T* a, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = a[i * cols + j];
  return out;
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& t = *a.tape;
  require_same_shape(t, "add", a, b);
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  return t.record("add", std::move(out), {a, b}, [a, b](Tape<T>& tp, std::size_t self) {
    accumulate(tp, a, tp.upstream(self));
    accumulate(tp, b, tp.upstream(self));
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  Tape<T>& t = *a.tape;
  require_same_shape(t, "sub", a, b);
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  return t.record("sub", std::move(out), {a, b}, [a, b](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    accumulate(tp, a, g);
    if (!tp.requires_grad(b.id)) return;
    auto& buf = tp.grad_buffer(b.id);
    for (std::size_t i = 0; i < g.numel(); ++i) buf[i] -= g[i];
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T>& t = *a.tape;
  require_same_shape(t, "mul", a, b);
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return t.record("mul", std::move(out), {a, b}, [a, b](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    if (tp.requires_grad(a.id)) {
      auto& buf = tp.grad_buffer(a.id);
      const auto& bv = tp.value(b.id);
      for (std::size_t i = 0; i < g.numel(); ++i) buf[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(b.id)) {
      auto& buf = tp.grad_buffer(b.id);
      const auto& av = tp.value(a.id);
      for (std::size_t i = 0; i < g.numel(); ++i) buf[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= factor;
  return a.tape->record("scale", std::move(out), {a}, [a, factor](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    auto& buf = tp.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.numel(); ++i) buf[i] += factor * g[i];
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v = v > T{0} ? v : T{0};
  return x.tape->record("relu", std::move(out), {x}, [x](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    const auto& xv = tp.value(x.id);
    auto& buf = tp.grad_buffer(x.id);
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (xv[i] > T{0}) buf[i] += g[i];
  });
}

template <typename T>
Var<T> exp(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v = std::exp(v);
  return x.tape->record("exp", std::move(out), {x}, [x](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    const auto& y = tp.value(self);
    auto& buf = tp.grad_buffer(x.id);
    for (std::size_t i = 0; i < g.numel(); ++i) buf[i] += g[i] * y[i];
  });
}

template <typename T>
Var<T> log(Var<T> x) {
  Tape<T>& t = *x.tape;
  Tensor<T> out = x.value();
  for (auto& v : out.values()) {
    if (!(v > T{0})) throw NumericError(t.next_label("log") + ": logarithm of non-positive value");
    v = std::log(v);
  }
  return t.record("log", std::move(out), {x}, [x](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    const auto& xv = tp.value(x.id);
    auto& buf = tp.grad_buffer(x.id);
    for (std::size_t i = 0; i < g.numel(); ++i) buf[i] += g[i] / xv[i];
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T total{0};
  for (T v : x.value().values()) total += v;
  return x.tape->record("sum", Tensor<T>::scalar(total), {x}, [x](Tape<T>& tp, std::size_t self) {
    const T g = tp.upstream(self)[0];
    for (auto& v : tp.grad_buffer(x.id).values()) v += g;
  });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tape<T>& t = *x.tape;
  if (shape_numel(shape) != x.value().numel()) {
    throw StructuralError(t.next_label("reshape") + ": cannot reshape " +
                          shape_string(x.shape()) + " to " + shape_string(shape));
  }
  return t.record("reshape", x.value().reshaped(std::move(shape)), {x},
                  [x](Tape<T>& tp, std::size_t self) {
                    const auto& g = tp.upstream(self);
                    auto& buf = tp.grad_buffer(x.id);
                    for (std::size_t i = 0; i < g.numel(); ++i) buf[i] += g[i];
                  });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tape<T>& t = *a.tape;
  require_rank(t, "matmul", a, 2);
  require_rank(t, "matmul", b, 2);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw StructuralError(t.next_label("matmul") + ": inner extents differ " +
                          shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor<T> out({m, n});
  kernels::parallel::matmul(m, k, n, a.value().data(), b.value().data(), out.data());
  return t.record("matmul", std::move(out), {a, b}, [a, b, m, k, n](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    if (tp.requires_grad(a.id)) {
      auto bt = transpose(tp.value(b.id).data(), k, n);
      Tensor<T> da({m, k});
      kernels::parallel::matmul(m, n, k, g.data(), bt.data(), da.data());
      accumulate(tp, a, da);
    }
    if (tp.requires_grad(b.id)) {
      auto at = transpose(tp.value(a.id).data(), m, k);
      Tensor<T> db({k, n});
      kernels::parallel::matmul(k, m, n, at.data(), g.data(), db.data());
      accumulate(tp, b, db);
    }
  });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias) {
  Tape<T>& t = *x.tape;
  require_rank(t, "linear", x, 2);
  require_rank(t, "linear", weight, 2);
  const std::size_t batch = x.shape()[0], in = x.shape()[1], out_dim = weight.shape()[0];
  if (weight.shape()[1] != in || bias.value().numel() != out_dim) {
    throw StructuralError(t.next_label("linear") + ": input " + shape_string(x.shape()) +
                          " incompatible with weight " + shape_string(weight.shape()) +
                          " / bias " + shape_string(bias.shape()));
  }
  auto wt = transpose(weight.value().data(), out_dim, in);
  Tensor<T> out({batch, out_dim});
  kernels::parallel::matmul(batch, in, out_dim, x.value().data(), wt.data(), out.data());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < out_dim; ++o) out[b * out_dim + o] += bias.value()[o];
  return t.record("linear", std::move(out), {x, weight, bias},
                  [x, weight, bias, batch, in, out_dim](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    if (tp.requires_grad(x.id)) {
      Tensor<T> dx({batch, in});
      kernels::parallel::matmul(batch, out_dim, in, g.data(), tp.value(weight.id).data(), dx.data());
      accumulate(tp, x, dx);
    }
    if (tp.requires_grad(weight.id)) {
      auto gt = transpose(g.data(), batch, out_dim);
      Tensor<T> dw({out_dim, in});
      kernels::parallel::matmul(out_dim, batch, in, gt.data(), tp.value(x.id).data(), dw.data());
      accumulate(tp, weight, dw);
    }
    if (tp.requires_grad(bias.id)) {
      auto& buf = tp.grad_buffer(bias.id);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < out_dim; ++o) buf[o] += g[b * out_dim + o];
    }
  });
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, std::optional<Var<T>> bias, std::size_t pad,
              std::size_t dilation) {
  Tape<T>& t = *x.tape;
  require_rank(t, "conv2d", x, 4);
  require_rank(t, "conv2d", weight, 4);
  kernels::ConvGeometry g;
  g.batch = x.shape()[0];
  g.in_channels = x.shape()[1];
  g.in_h = x.shape()[2];
  g.in_w = x.shape()[3];
  g.out_channels = weight.shape()[0];
  g.kernel = weight.shape()[2];
  g.pad = pad;
  g.dilation = dilation;
  if (weight.shape()[1] != g.in_channels || weight.shape()[3] != g.kernel) {
    throw StructuralError(t.next_label("conv2d") + ": input channels " +
                          std::to_string(g.in_channels) + " do not match weight " +
                          shape_string(weight.shape()));
  }
  if (bias && bias->value().numel() != g.out_channels) {
    throw StructuralError(t.next_label("conv2d") + ": bias " + shape_string(bias->shape()) +
                          " for " + std::to_string(g.out_channels) + " output channels");
  }
  if (!g.valid()) {
    throw StructuralError(t.next_label("conv2d") + ": kernel larger than padded input " +
                          shape_string(x.shape()));
  }
  Tensor<T> out({g.batch, g.out_channels, g.out_h(), g.out_w()});
  kernels::parallel::conv2d_forward(g, x.value().data(), weight.value().data(),
                                    bias ? bias->value().data() : nullptr, out.data());
  std::vector<Var<T>> parents{x, weight};
  if (bias) parents.push_back(*bias);
  return t.record("conv2d", std::move(out), parents, [x, weight, bias, g](Tape<T>& tp, std::size_t self) {
    const auto& dy = tp.upstream(self);
    if (tp.requires_grad(x.id)) {
      Tensor<T> dx(tp.value(x.id).shape());
      kernels::parallel::conv2d_backward_input(g, dy.data(), tp.value(weight.id).data(), dx.data());
      accumulate(tp, x, dx);
    }
    const bool need_w = tp.requires_grad(weight.id);
    const bool need_b = bias && tp.requires_grad(bias->id);
    if (need_w || need_b) {
      Tensor<T> dw(tp.value(weight.id).shape());
      Tensor<T> db({g.out_channels});
      kernels::parallel::conv2d_backward_weight(g, tp.value(x.id).data(), dy.data(), dw.data(),
                                                need_b ? db.data() : nullptr);
      if (need_w) accumulate(tp, weight, dw);
      if (need_b) accumulate(tp, *bias, db);
    }
  });
}

template <typename T>
Var<T> max_pool2d(Var<T> x) {
  Tape<T>& t = *x.tape;
  require_rank(t, "max_pool2d", x, 4);
  const auto& s = x.shape();
  const std::size_t planes = s[0] * s[1], h = s[2], w = s[3];
  if (h % 2 || w % 2) {
    throw StructuralError(t.next_label("max_pool2d") + ": odd spatial extent " + shape_string(s));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor<T> out({s[0], s[1], oh, ow});
  std::vector<std::uint32_t> argmax(out.numel());
  const T* in = x.value().data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = p * h * w + (2 * i) * w + 2 * j;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = p * h * w + (2 * i + di) * w + 2 * j + dj;
            if (in[idx] > in[best]) best = idx;
          }
        const std::size_t o = (p * oh + i) * ow + j;
        out[o] = in[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return t.record("max_pool2d", std::move(out), {x},
                  [x, argmax = std::move(argmax)](Tape<T>& tp, std::size_t self) {
                    const auto& g = tp.upstream(self);
                    auto& buf = tp.grad_buffer(x.id);
                    for (std::size_t o = 0; o < g.numel(); ++o) buf[argmax[o]] += g[o];
                  });
}

template <typename T>
Var<T> global_avg_pool(Var<T> x) {
  Tape<T>& t = *x.tape;
  require_rank(t, "global_avg_pool", x, 4);
  const auto& s = x.shape();
  const std::size_t planes = s[0] * s[1], hw = s[2] * s[3];
  Tensor<T> out({s[0], s[1]});
  for (std::size_t p = 0; p < planes; ++p) {
    T acc{0};
    for (std::size_t q = 0; q < hw; ++q) acc += x.value()[p * hw + q];
    out[p] = acc / static_cast<T>(hw);
  }
  return t.record("global_avg_pool", std::move(out), {x}, [x, planes, hw](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    auto& buf = tp.grad_buffer(x.id);
    const T inv = T{1} / static_cast<T>(hw);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t q = 0; q < hw; ++q) buf[p * hw + q] += g[p] * inv;
  });
}

namespace {

struct Tap {
  std::size_t lo, hi;
  double w_hi;
};

// Half-pixel-centre sampling positions for an integer upscale.
std::vector<Tap> bilinear_taps(std::size_t in, std::size_t factor) {
  std::vector<Tap> taps(in * factor);
  for (std::size_t o = 0; o < taps.size(); ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[o] = Tap{lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

template <typename T>
Var<T> upsample_bilinear(Var<T> x, std::size_t factor) {
  Tape<T>& t = *x.tape;
  require_rank(t, "upsample_bilinear", x, 4);
  if (factor == 0) throw StructuralError(t.next_label("upsample_bilinear") + ": zero factor");
  const auto& s = x.shape();
  const std::size_t planes = s[0] * s[1], h = s[2], w = s[3], oh = h * factor, ow = w * factor;
  auto rows = bilinear_taps(h, factor), cols = bilinear_taps(w, factor);
  Tensor<T> out({s[0], s[1], oh, ow});
  for (std::size_t p = 0; p < planes; ++p) {
    const T* in = x.value().data() + p * h * w;
    T* dst = out.data() + p * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      const Tap& r = rows[i];
      const T wr = static_cast<T>(r.w_hi);
      for (std::size_t j = 0; j < ow; ++j) {
        const Tap& c = cols[j];
        const T wc = static_cast<T>(c.w_hi);
        const T top = in[r.lo * w + c.lo] * (T{1} - wc) + in[r.lo * w + c.hi] * wc;
        const T bot = in[r.hi * w + c.lo] * (T{1} - wc) + in[r.hi * w + c.hi] * wc;
        dst[i * ow + j] = top * (T{1} - wr) + bot * wr;
      }
    }
  }
  return t.record("upsample_bilinear", std::move(out), {x},
                  [x, rows, cols, planes, h, w, oh, ow](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    auto& buf = tp.grad_buffer(x.id);
    for (std::size_t p = 0; p < planes; ++p) {
      T* dst = buf.data() + p * h * w;
      const T* src = g.data() + p * oh * ow;
      for (std::size_t i = 0; i < oh; ++i) {
        const Tap& r = rows[i];
        const T wr = static_cast<T>(r.w_hi);
        for (std::size_t j = 0; j < ow; ++j) {
          const Tap& c = cols[j];
          const T wc = static_cast<T>(c.w_hi);
          const T v = src[i * ow + j];
          dst[r.lo * w + c.lo] += v * (T{1} - wr) * (T{1} - wc);
          dst[r.lo * w + c.hi] += v * (T{1} - wr) * wc;
          dst[r.hi * w + c.lo] += v * wr * (T{1} - wc);
          dst[r.hi * w + c.hi] += v * wr * wc;
        }
      }
    }
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw StructuralError("concat_channels: no operands");
  Tape<T>& t = *parts.front().tape;
  const Shape& first = parts.front().shape();
  std::size_t channels = 0;
  for (const auto& p : parts) {
    require_rank(t, "concat_channels", p, 4);
    const Shape& s = p.shape();
    if (s[0] != first[0] || s[2] != first[2] || s[3] != first[3]) {
      throw StructuralError(t.next_label("concat_channels") + ": operand " + shape_string(s) +
                            " does not match " + shape_string(first));
    }
    channels += s[1];
  }
  const std::size_t batch = first[0], hw = first[2] * first[3];
  Tensor<T> out({batch, channels, first[2], first[3]});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.shape()[1];
    for (std::size_t b = 0; b < batch; ++b)
      std::copy_n(p.value().data() + b * c * hw, c * hw, out.data() + (b * channels + offset) * hw);
    offset += c;
  }
  return t.record("concat_channels", std::move(out), parts,
                  [parts, batch, channels, hw](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t c = tp.value(p.id).shape()[1];
      if (tp.requires_grad(p.id)) {
        auto& buf = tp.grad_buffer(p.id);
        for (std::size_t b = 0; b < batch; ++b) {
          const T* src = g.data() + (b * channels + off) * hw;
          T* dst = buf.data() + b * c * hw;
          for (std::size_t q = 0; q < c * hw; ++q) dst[q] += src[q];
        }
      }
      off += c;
    }
  });
}

template <typename T>
Var<T> softmax_channels(Var<T> x) {
  Tape<T>& t = *x.tape;
  require_rank(t, "softmax_channels", x, 4);
  const auto& s = x.shape();
  const std::size_t batch = s[0], channels = s[1], hw = s[2] * s[3];
  Tensor<T> out(s);
  const T* in = x.value().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t q = 0; q < hw; ++q) {
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t c = 0; c < channels; ++c) mx = std::max(mx, in[(b * channels + c) * hw + q]);
      T total{0};
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t i = (b * channels + c) * hw + q;
        out[i] = std::exp(in[i] - mx);
        total += out[i];
      }
      for (std::size_t c = 0; c < channels; ++c) out[(b * channels + c) * hw + q] /= total;
    }
  }
  return t.record("softmax_channels", std::move(out), {x},
                  [x, batch, channels, hw](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    const auto& y = tp.value(self);
    auto& buf = tp.grad_buffer(x.id);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t q = 0; q < hw; ++q) {
        T dot{0};
        for (std::size_t c = 0; c < channels; ++c) {
          const std::size_t i = (b * channels + c) * hw + q;
          dot += g[i] * y[i];
        }
        for (std::size_t c = 0; c < channels; ++c) {
          const std::size_t i = (b * channels + c) * hw + q;
          buf[i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
}

template <typename T>
Var<T> l2_normalize_rows(Var<T> x, T radius) {
  Tape<T>& t = *x.tape;
  require_rank(t, "l2_normalize", x, 2);
  const std::size_t rows = x.shape()[0], dim = x.shape()[1];
  Tensor<T> out(x.shape());
  std::vector<T> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T sq{0};
    for (std::size_t d = 0; d < dim; ++d) sq += x.value()[r * dim + d] * x.value()[r * dim + d];
    norms[r] = std::sqrt(sq);
    if (!(norms[r] > T(1e-12))) {
      throw NumericError(t.next_label("l2_normalize") + ": row " + std::to_string(r) +
                         " has near-zero norm");
    }
    for (std::size_t d = 0; d < dim; ++d) out[r * dim + d] = radius * x.value()[r * dim + d] / norms[r];
  }
  return t.record("l2_normalize", std::move(out), {x},
                  [x, norms, rows, dim, radius](Tape<T>& tp, std::size_t self) {
    // d(r x/|x|) = (r/|x|) (g - u (u.g)),  u = x/|x|
    const auto& g = tp.upstream(self);
    const auto& xv = tp.value(x.id);
    auto& buf = tp.grad_buffer(x.id);
    for (std::size_t r = 0; r < rows; ++r) {
      T ug{0};
      for (std::size_t d = 0; d < dim; ++d) ug += xv[r * dim + d] / norms[r] * g[r * dim + d];
      for (std::size_t d = 0; d < dim; ++d) {
        const T u = xv[r * dim + d] / norms[r];
        buf[r * dim + d] += radius / norms[r] * (g[r * dim + d] - u * ug);
      }
    }
  });
}

#define AGCL_INSTANTIATE(T)                                                        \
  template class Tape<T>;                                                          \
  template Var<T> add(Var<T>, Var<T>);                                             \
  template Var<T> sub(Var<T>, Var<T>);                                             \
  template Var<T> mul(Var<T>, Var<T>);                                             \
  template Var<T> scale(Var<T>, T);                                                \
  template Var<T> relu(Var<T>);                                                    \
  template Var<T> exp(Var<T>);                                                     \
  template Var<T> log(Var<T>);                                                     \
  template Var<T> sum(Var<T>);                                                     \
  template Var<T> reshape(Var<T>, Shape);                                          \
  template Var<T> matmul(Var<T>, Var<T>);                                          \
  template Var<T> linear(Var<T>, Var<T>, Var<T>);                                  \
  template Var<T> conv2d(Var<T>, Var<T>, std::optional<Var<T>>, std::size_t,       \
                         std::size_t);                                             \
  template Var<T> max_pool2d(Var<T>);                                              \
  template Var<T> global_avg_pool(Var<T>);                                         \
  template Var<T> upsample_bilinear(Var<T>, std::size_t);                          \
  template Var<T> concat_channels(const std::vector<Var<T>>&);                     \
  template Var<T> softmax_channels(Var<T>);                                        \
  template Var<T> l2_normalize_rows(Var<T>, T);

AGCL_INSTANTIATE(float)
AGCL_INSTANTIATE(double)

#undef AGCL_INSTANTIATE

}  // namespace agcl
