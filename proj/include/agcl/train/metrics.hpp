#pragma once

#include <cstdint>
#include <vector>

#include "agcl/core/tensor.hpp"

namespace agcl::train {

using LabelMap = Tensor<std::uint8_t>;  // [H, W], 0 = background, o = object o

/// Per object o = 1..O: 2|P n G| / (|P| + |G|) with P = {pred == o} and G the
/// o-th plane of `gt_masks` ([O, H, W]); 1 when both are empty.
std::vector<double> dice_score(const LabelMap& pred, const Tensor<std::uint8_t>& gt_masks);

/// Label map of disjoint [O, H, W] masks.
LabelMap labels_from_masks(const Tensor<std::uint8_t>& masks);

/// Mean over classes 1..n_classes of |P n G| / |P u G|, empty-empty = 1.
double miou(const LabelMap& pred, const LabelMap& gt, std::size_t n_classes);

/// Mean silhouette with Euclidean distance between unit-normalised rows of
/// `embeddings` ([n, d]). Points whose a and b are both zero score 0.
/// ValidationError for fewer than two clusters or a cluster with one member.
double cluster_separation(const Tensor<double>& embeddings, const std::vector<int>& labels);

struct PcaResult {
  Tensor<double> coords;      // [n, k_found], centred projections
  Tensor<double> components;  // [k_found, d], orthonormal rows
  std::vector<double> explained_ratio;  // non-increasing
  std::vector<double> mean;
  bool rank_deficient = false;  // fewer than the requested k components
};

/// Principal axes of the centred rows; components beyond the numerical rank
/// are dropped and flagged.
PcaResult pca_project(const Tensor<double>& embeddings, std::size_t k = 2);

}  // namespace agcl::train
