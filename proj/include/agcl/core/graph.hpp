#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>

#include "agcl/core/tape.hpp"

namespace agcl {

template <typename T>
using Inputs = std::map<std::string, Tensor<T>>;
template <typename T>
using VarMap = std::map<std::string, Var<T>>;

/// A differentiable computation: records its operations on the tape it is
/// given, reading named inputs from the map, and returns its output node.
template <typename T>
using GraphFn = std::function<Var<T>(Tape<T>&, const VarMap<T>&)>;

/// Looks up a named input; StructuralError when the graph needs an unbound one.
template <typename T>
Var<T> bound(const VarMap<T>& vars, const std::string& name) {
  auto it = vars.find(name);
  if (it == vars.end()) throw StructuralError("graph input '" + name + "' is not bound");
  return it->second;
}

template <typename T>
struct Evaluation {
  std::unique_ptr<Tape<T>> tape;
  VarMap<T> inputs;
  Var<T> output;

  const Tensor<T>& value() const { return output.value(); }
};

/// Runs the graph on a fresh tape. Inputs named in `constants` receive no
/// gradient; every other input is trainable.
template <typename T>
Evaluation<T> eval_forward(const GraphFn<T>& graph, const Inputs<T>& inputs,
                           const std::set<std::string>& constants = {});

/// Gradients of every trainable input. StateError when `eval` holds no
/// forward pass or has already been differentiated.
template <typename T>
Inputs<T> eval_backward(Evaluation<T>& eval, const Tensor<T>& output_grad);

struct GradReport {
  /// max over elements of (|a - n| - r) / max(|a|, |n|, 1e-12), per trainable
  /// input; r is the round-off of the difference quotient (16 ulps of the
  /// perturbed outputs over 2 epsilon), floored at 0
  std::map<std::string, double> max_rel_error;
  double raw_worst = 0;  // same without the round-off allowance
  double epsilon = 0;
  double tolerance = 0;
  bool passed = false;

  double worst() const;
};

/// Central finite differences against the analytic gradient, element by
/// element, in 64-bit. Non-scalar outputs are contracted with fixed
/// pseudo-random weights first.
GradReport grad_check(const GraphFn<double>& graph, const Inputs<double>& inputs,
                      double epsilon, double tolerance,
                      const std::set<std::string>& constants = {});

/// Directional form: compares <grad f, v> with (f(x+eps v) - f(x-eps v))/2eps
/// for a random direction v over all trainable inputs. Returns the relative
/// error in the same |a-n|/max(|a|,|n|,1e-12) form.
double jvp_check(const GraphFn<double>& graph, const Inputs<double>& inputs,
                 double epsilon, std::uint64_t seed,
                 const std::set<std::string>& constants = {});

}  // namespace agcl
