#pragma once

#include <cstdint>

#include "agcl/losses/losses.hpp"

namespace agcl::losses {

/// Random contrastive batch: 2N views whose rows lie on the 1/T sphere, with
/// twins sharing a label drawn from `n_classes` (modality, object) classes.
ContrastiveBatchView random_batch(std::size_t n_pairs, std::size_t dim, double temperature,
                                  std::size_t n_classes, std::uint64_t seed);

/// The orthogonal pair fixture: views e1, e1, e2, e2 at T = 1, one class.
ContrastiveBatchView orthogonal_pair_fixture();

}  // namespace agcl::losses
