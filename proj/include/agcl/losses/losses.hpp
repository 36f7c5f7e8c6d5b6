#pragma once

#include <cstddef>
#include <vector>

#include "agcl/core/tape.hpp"

namespace agcl::losses {

/// 1-based modality and object ids.
struct ClassLabel {
  int modality = 1;
  int object = 1;
  friend bool operator==(const ClassLabel&, const ClassLabel&) = default;
};

/// Pairing and label records for 2N views; view k's twin is pairing[k].
struct ContrastiveLabels {
  std::vector<std::size_t> pairing;
  std::vector<ClassLabel> labels;
  std::vector<bool> visible;

  std::size_t size() const { return pairing.size(); }
  /// StructuralError unless sizes agree, 2N >= 2 and pairing is a
  /// fixed-point-free involution.
  void validate() const;
};

/// Rows of `embeddings` ([2N, O_E]) lie on the sphere of radius 1/T.
struct ContrastiveBatchView {
  Tensor<double> embeddings;
  ContrastiveLabels meta;
  double temperature = 0.1;
};

enum class ContrastiveMode { sscl, agcl };

struct LossValue {
  double value = 0;
  std::vector<double> terms;  // per anchor (contrastive) or per sample (Dice)
  std::size_t skipped = 0;
};

inline constexpr double kDiceSmoothing = 1e-5;

/// Positive set of anchor k. SSCL: {p(k)}. AGCL: visible views sharing the
/// anchor's (m, o), falling back to {p(k)} for hidden anchors or empty sets.
std::vector<std::size_t> positive_set(const ContrastiveLabels& meta, std::size_t anchor,
                                      ContrastiveMode mode);

/// Stable (log-sum-exp) evaluation. Rows are renormalised and logits are
/// cos(theta)/T, so the 1/T radius is applied exactly once.
LossValue sscl_loss(const ContrastiveBatchView& batch);
LossValue agcl_loss(const ContrastiveBatchView& batch);
LossValue contrastive_loss(const ContrastiveBatchView& batch, ContrastiveMode mode);

/// Double-loop enumeration with naive exp; 2N <= 64. Throws RangeError when a
/// logit leaves [-30, 30] instead of risking overflow.
LossValue oracle_contrastive(const ContrastiveBatchView& batch, ContrastiveMode mode);

/// Sum over samples of 1 - 2(sum s1*y1 + eps) / (sum s1 + sum y1 + eps) on the
/// foreground channel of [B,2,H,W] probabilities `s` and one-hot `y`.
LossValue dice_seg_loss(const Tensor<double>& s, const Tensor<double>& y);

// Differentiable forms recorded on a tape.

template <typename T>
Var<T> contrastive_loss(Var<T> embeddings, const ContrastiveLabels& meta,
                        ContrastiveMode mode, double temperature);
template <typename T>
Var<T> dice_loss(Var<T> probabilities, const Tensor<T>& onehot);
/// Sum over rows with mask[i] of -log softmax(logits[i])[targets[i]].
template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, const std::vector<std::size_t>& targets,
                             const std::vector<bool>& mask);

}  // namespace agcl::losses
