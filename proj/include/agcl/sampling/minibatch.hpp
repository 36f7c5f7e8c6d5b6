#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "agcl/losses/losses.hpp"
#include "agcl/sampling/patches.hpp"

namespace agcl::sampling {

/// 2N augmented views; views 2k and 2k+1 (0-based) are twins.
struct Minibatch {
  Tensor<float> views;              // [2N, 2, p, p]
  losses::ContrastiveLabels meta;   // pairing, (m, o) labels, visibility
  std::vector<std::size_t> sources; // index into the patch list, per view
  std::size_t n = 0;
};

/// Draws N patches without replacement among those whose modality is in
/// `modalities` (empty = all), augments each into a twin pair and marks
/// ceil(label_fraction * N) pairs as labelled. CapacityError if fewer than N
/// patches survive the filter.
Minibatch build_minibatch(const std::vector<QueryPatch>& patches, std::size_t n,
                          const std::set<int>& modalities, double label_fraction,
                          std::uint64_t seed);

}  // namespace agcl::sampling
