#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "agcl/core/tensor.hpp"

namespace agcl {

template <typename T>
class Tape;

/// Handle to a node recorded on a Tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode differentiation graph, recorded eagerly as operations run.
///
/// Nodes are appended in evaluation order, which is a topological order, so
/// the backward pass simply walks the node list in reverse. Saved activations
/// are the node values themselves and are never mutated after recording.
/// backward() may run at most once per recorded forward pass.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Graph input. Trainable inputs receive gradients.
  Var<T> input(Tensor<T> value, std::string name, bool trainable = true);
  Var<T> constant(Tensor<T> value) {
    return input(std::move(value), "const", false);
  }

  /// Label the next recorded node would get, e.g. "conv2d#7".
  std::string next_label(std::string_view op) const;

  /// Appends an operation result. `backward` is dropped when no parent needs
  /// a gradient. Throws NumericError naming the node on non-finite output
  /// when finiteness checking is on.
  Var<T> record(std::string_view op, Tensor<T> value,
                std::initializer_list<Var<T>> parents, BackwardFn backward);
  Var<T> record(std::string_view op, Tensor<T> value,
                const std::vector<Var<T>>& parents, BackwardFn backward);

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  const std::string& label(std::size_t id) const { return nodes_.at(id).label; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Upstream gradient of a node during the backward pass.
  const Tensor<T>& upstream(std::size_t id) const { return nodes_.at(id).grad; }
  /// Zero-initialised gradient accumulator of a node.
  Tensor<T>& grad_buffer(std::size_t id);
  /// Gradient of a node after backward(); zeros when it was not reached.
  const Tensor<T>& grad(Var<T> v) { return grad_buffer(v.id); }

  void backward(Var<T> output, const Tensor<T>& output_grad);
  /// Scalar outputs only: seeds with 1.
  void backward(Var<T> output);
  bool backward_done() const { return backward_done_; }

  void set_check_finite(bool on) { check_finite_ = on; }

 private:
  struct Node {
    std::string label;
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;  // deque: references stay valid on append
  bool backward_done_ = false;
  bool check_finite_ = true;
};

// Primitive operations. Shape violations raise StructuralError naming the
// node; numeric precondition violations raise NumericError.

template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, T factor);
template <typename T> Var<T> relu(Var<T> x);
template <typename T> Var<T> exp(Var<T> x);
template <typename T> Var<T> log(Var<T> x);
/// Sum of all elements, shape [1].
template <typename T> Var<T> sum(Var<T> x);
template <typename T> Var<T> reshape(Var<T> x, Shape shape);

/// [m,k] x [k,n] -> [m,n]
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
/// x [B,in], weight [out,in], bias [out] -> x * weight^T + bias
template <typename T> Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias);

/// x [B,C,H,W], weight [O,C,K,K], bias [O]; stride 1.
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, std::optional<Var<T>> bias,
              std::size_t pad, std::size_t dilation = 1);
/// 2x2 window, stride 2; H and W must be even.
template <typename T> Var<T> max_pool2d(Var<T> x);
/// [B,C,H,W] -> [B,C]
template <typename T> Var<T> global_avg_pool(Var<T> x);
/// Bilinear resize by an integer factor (half-pixel centres, edge clamp).
template <typename T> Var<T> upsample_bilinear(Var<T> x, std::size_t factor);
template <typename T> Var<T> concat_channels(const std::vector<Var<T>>& parts);
/// Softmax across the channel axis of [B,C,H,W].
template <typename T> Var<T> softmax_channels(Var<T> x);
/// Each row of [B,D] rescaled to the given norm. Rows with norm <= 1e-12
/// raise NumericError.
template <typename T> Var<T> l2_normalize_rows(Var<T> x, T radius);

}  // namespace agcl
