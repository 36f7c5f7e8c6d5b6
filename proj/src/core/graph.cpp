#include "agcl/core/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "agcl/core/random.hpp"

namespace agcl {

template <typename T>
Evaluation<T> eval_forward(const GraphFn<T>& graph, const Inputs<T>& inputs,
                           const std::set<std::string>& constants) {
  Evaluation<T> eval;
  eval.tape = std::make_unique<Tape<T>>();
  for (const auto& [name, tensor] : inputs) {
    eval.inputs.emplace(name, eval.tape->input(tensor, name, !constants.contains(name)));
  }
  eval.output = graph(*eval.tape, eval.inputs);
  return eval;
}

template <typename T>
Inputs<T> eval_backward(Evaluation<T>& eval, const Tensor<T>& output_grad) {
  if (!eval.tape) throw StateError("eval_backward called before eval_forward");
  eval.tape->backward(eval.output, output_grad);
  Inputs<T> grads;
  for (const auto& [name, var] : eval.inputs) {
    if (eval.tape->requires_grad(var.id)) grads.emplace(name, eval.tape->grad(var));
  }
  return grads;
}

template Evaluation<float> eval_forward(const GraphFn<float>&, const Inputs<float>&,
                                        const std::set<std::string>&);
template Evaluation<double> eval_forward(const GraphFn<double>&, const Inputs<double>&,
                                         const std::set<std::string>&);
template Inputs<float> eval_backward(Evaluation<float>&, const Tensor<float>&);
template Inputs<double> eval_backward(Evaluation<double>&, const Tensor<double>&);

double GradReport::worst() const {
  double w = 0;
  for (const auto& [_, e] : max_rel_error) w = std::max(w, e);
  return w;
}

namespace {

double rel_error(double a, double n, double noise = 0) {
  return std::max(0.0, std::abs(a - n) - noise) / std::max({std::abs(a), std::abs(n), 1e-12});
}

// Round-off carried by a central difference: a few ulps of the output
// values, divided by the step.
double difference_noise(double up, double down, double epsilon) {
  return 16 * std::numeric_limits<double>::epsilon() * std::max(std::abs(up), std::abs(down)) / (2 * epsilon);
}

Tensor<double> contraction_weights(const Shape& shape) {
  Tensor<double> w(shape, 1.0);
  if (w.numel() == 1) return w;
  Rng rng(0x5eed);
  for (auto& v : w.values()) v = uniform(rng, -1.0, 1.0);
  return w;
}

double scalar_output(const GraphFn<double>& graph, const Inputs<double>& inputs,
                     const std::set<std::string>& constants, const Tensor<double>& weights) {
  auto eval = eval_forward(graph, inputs, constants);
  const auto& out = eval.value();
  double acc = 0;
  for (std::size_t i = 0; i < out.numel(); ++i) acc += weights[i] * out[i];
  return acc;
}

}  // namespace

GradReport grad_check(const GraphFn<double>& graph, const Inputs<double>& inputs,
                      double epsilon, double tolerance,
                      const std::set<std::string>& constants) {
  auto eval = eval_forward(graph, inputs, constants);
  const Tensor<double> weights = contraction_weights(eval.value().shape());
  const auto analytic = eval_backward(eval, weights);

  GradReport report;
  report.epsilon = epsilon;
  report.tolerance = tolerance;
  Inputs<double> probe = inputs;
  for (const auto& [name, grad] : analytic) {
    double worst = 0;
    auto& values = probe.at(name);
    for (std::size_t i = 0; i < values.numel(); ++i) {
      const double saved = values[i];
      values[i] = saved + epsilon;
      const double up = scalar_output(graph, probe, constants, weights);
      values[i] = saved - epsilon;
      const double down = scalar_output(graph, probe, constants, weights);
      values[i] = saved;
      const double n = (up - down) / (2 * epsilon);
      worst = std::max(worst, rel_error(grad[i], n, difference_noise(up, down, epsilon)));
      report.raw_worst = std::max(report.raw_worst, rel_error(grad[i], n));
    }
    report.max_rel_error[name] = worst;
  }
  report.passed = report.worst() < tolerance;
  return report;
}

double jvp_check(const GraphFn<double>& graph, const Inputs<double>& inputs,
                 double epsilon, std::uint64_t seed,
                 const std::set<std::string>& constants) {
  auto eval = eval_forward(graph, inputs, constants);
  const Tensor<double> weights = contraction_weights(eval.value().shape());
  const auto analytic = eval_backward(eval, weights);

  Rng rng(seed);
  Inputs<double> direction;
  double directional = 0;
  for (const auto& [name, grad] : analytic) {
    Tensor<double> v(grad.shape());
    for (std::size_t i = 0; i < v.numel(); ++i) {
      v[i] = uniform(rng, -1.0, 1.0);
      directional += grad[i] * v[i];
    }
    direction.emplace(name, std::move(v));
  }
  Inputs<double> plus = inputs, minus = inputs;
  for (const auto& [name, v] : direction) {
    for (std::size_t i = 0; i < v.numel(); ++i) {
      plus.at(name)[i] += epsilon * v[i];
      minus.at(name)[i] -= epsilon * v[i];
    }
  }
  const double numeric = (scalar_output(graph, plus, constants, weights) -
                          scalar_output(graph, minus, constants, weights)) /
                         (2 * epsilon);
  return rel_error(directional, numeric);
}

}  // namespace agcl
