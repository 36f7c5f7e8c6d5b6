#include "agcl/losses/fixtures.hpp"

#include <cmath>

#include "agcl/core/random.hpp"

namespace agcl::losses {

ContrastiveBatchView random_batch(std::size_t n_pairs, std::size_t dim, double temperature,
                                  std::size_t n_classes, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  const std::size_t n = 2 * n_pairs;
  ContrastiveBatchView batch;
  batch.temperature = temperature;
  batch.embeddings = Tensor<double>({n, dim});
  for (std::size_t r = 0; r < n; ++r) {
    double sq = 0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double v = normal(rng);
      batch.embeddings[r * dim + d] = v;
      sq += v * v;
    }
    const double norm = std::sqrt(sq);
    for (std::size_t d = 0; d < dim; ++d) batch.embeddings[r * dim + d] /= norm * temperature;
  }
  for (std::size_t k = 0; k < n_pairs; ++k) {
    const auto cls = static_cast<int>(uniform_index(rng, n_classes));
    const ClassLabel label{1 + cls % 2, 1 + cls / 2};
    for (std::size_t v = 0; v < 2; ++v) {
      batch.meta.pairing.push_back(2 * k + (1 - v));
      batch.meta.labels.push_back(label);
      batch.meta.visible.push_back(true);
    }
  }
  return batch;
}

ContrastiveBatchView orthogonal_pair_fixture() {
  ContrastiveBatchView batch;
  batch.temperature = 1.0;
  batch.embeddings = Tensor<double>({4, 2}, {1, 0, 1, 0, 0, 1, 0, 1});
  batch.meta.pairing = {1, 0, 3, 2};
  batch.meta.labels = std::vector<ClassLabel>(4, ClassLabel{1, 1});
  batch.meta.visible = std::vector<bool>(4, true);
  return batch;
}

}  // namespace agcl::losses
