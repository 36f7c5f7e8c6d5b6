#include <cmath>

#include "agcl/core/numerics.hpp"
#include "agcl/losses/losses.hpp"

namespace agcl::losses {

namespace {

struct DiceGeometry {
  std::size_t batch = 0;
  std::size_t pixels = 0;
};

template <typename T>
DiceGeometry check_dice_operands(const Shape& s_shape, const Tensor<T>& y, const std::string& where) {
  if (s_shape.size() != 4 || s_shape[1] != 2) {
    throw StructuralError(where + ": predictions must be [B,2,H,W], got " + shape_string(s_shape));
  }
  if (y.shape() != s_shape) {
    throw StructuralError(where + ": labels " + shape_string(y.shape()) + " vs predictions " +
                          shape_string(s_shape));
  }
  DiceGeometry g{s_shape[0], s_shape[2] * s_shape[3]};
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t q = 0; q < g.pixels; ++q) {
      const T bg = y[(b * 2) * g.pixels + q], fg = y[(b * 2 + 1) * g.pixels + q];
      if (!((bg == T{0} || bg == T{1}) && (fg == T{0} || fg == T{1}) && bg + fg == T{1})) {
        throw ValidationError(where + ": labels are not one-hot at sample " + std::to_string(b) +
                              ", pixel " + std::to_string(q));
      }
    }
  }
  return g;
}

struct DiceSums {
  double intersection = 0, predicted = 0, target = 0;
};

template <typename T>
std::vector<DiceSums> dice_sums(const T* s, const Tensor<T>& y, const DiceGeometry& g) {
  std::vector<DiceSums> sums(g.batch);
  for (std::size_t b = 0; b < g.batch; ++b) {
    const std::size_t fg = (b * 2 + 1) * g.pixels;
    for (std::size_t q = 0; q < g.pixels; ++q) {
      sums[b].intersection += static_cast<double>(s[fg + q]) * static_cast<double>(y[fg + q]);
      sums[b].predicted += static_cast<double>(s[fg + q]);
      sums[b].target += static_cast<double>(y[fg + q]);
    }
  }
  return sums;
}

double dice_term(const DiceSums& d) {
  return 1.0 - 2.0 * (d.intersection + kDiceSmoothing) / (d.predicted + d.target + kDiceSmoothing);
}

}  // namespace

LossValue dice_seg_loss(const Tensor<double>& s, const Tensor<double>& y) {
  const auto g = check_dice_operands(s.shape(), y, "dice_seg_loss");
  LossValue out;
  for (const auto& d : dice_sums(s.data(), y, g)) {
    out.terms.push_back(dice_term(d));
    out.value += out.terms.back();
  }
  return out;
}

template <typename T>
Var<T> dice_loss(Var<T> probabilities, const Tensor<T>& onehot) {
  Tape<T>& tape = *probabilities.tape;
  const auto g = check_dice_operands(probabilities.shape(), onehot, tape.next_label("dice_loss"));
  auto sums = dice_sums(probabilities.value().data(), onehot, g);
  double total = 0;
  for (const auto& d : sums) total += dice_term(d);
  return tape.record("dice_loss", Tensor<T>::scalar(static_cast<T>(total)), {probabilities},
                     [probabilities, onehot, g, sums = std::move(sums)](Tape<T>& tp, std::size_t self) {
    // d/ds [-2(I+e)/D] = -2 (y D - (I+e)) / D^2,  D = S + Y + e
    const double up = static_cast<double>(tp.upstream(self)[0]);
    auto& buf = tp.grad_buffer(probabilities.id);
    for (std::size_t b = 0; b < g.batch; ++b) {
      const double num = sums[b].intersection + kDiceSmoothing;
      const double den = sums[b].predicted + sums[b].target + kDiceSmoothing;
      const std::size_t fg = (b * 2 + 1) * g.pixels;
      for (std::size_t q = 0; q < g.pixels; ++q) {
        const double y = static_cast<double>(onehot[fg + q]);
        buf[fg + q] += static_cast<T>(up * -2.0 * (y * den - num) / (den * den));
      }
    }
  });
}

template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, const std::vector<std::size_t>& targets,
                             const std::vector<bool>& mask) {
  Tape<T>& tape = *logits.tape;
  if (logits.value().rank() != 2 || targets.size() != logits.shape()[0] || mask.size() != targets.size()) {
    throw StructuralError(tape.next_label("cross_entropy") + ": logits " + shape_string(logits.shape()) +
                          " for " + std::to_string(targets.size()) + " targets");
  }
  const std::size_t rows = logits.shape()[0], classes = logits.shape()[1];
  Tensor<T> probs(logits.shape());
  double total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= classes) {
      throw StructuralError(tape.next_label("cross_entropy") + ": target class out of range");
    }
    std::span<const T> row(logits.value().data() + r * classes, classes);
    const double lse = static_cast<double>(logsumexp<T>(row));
    for (std::size_t c = 0; c < classes; ++c)
      probs[r * classes + c] = static_cast<T>(std::exp(static_cast<double>(row[c]) - lse));
    if (mask[r]) total += lse - static_cast<double>(row[targets[r]]);
  }
  return tape.record("cross_entropy", Tensor<T>::scalar(static_cast<T>(total)), {logits},
                     [logits, targets, mask, rows, classes, probs = std::move(probs)](Tape<T>& tp, std::size_t self) {
    const T up = tp.upstream(self)[0];
    auto& buf = tp.grad_buffer(logits.id);
    for (std::size_t r = 0; r < rows; ++r) {
      if (!mask[r]) continue;
      for (std::size_t c = 0; c < classes; ++c)
        buf[r * classes + c] += up * (probs[r * classes + c] - (c == targets[r] ? T{1} : T{0}));
    }
  });
}

template Var<float> dice_loss(Var<float>, const Tensor<float>&);
template Var<double> dice_loss(Var<double>, const Tensor<double>&);
template Var<float> softmax_cross_entropy(Var<float>, const std::vector<std::size_t>&, const std::vector<bool>&);
template Var<double> softmax_cross_entropy(Var<double>, const std::vector<std::size_t>&, const std::vector<bool>&);

}  // namespace agcl::losses
