#include "agcl/sampling/minibatch.hpp"

#include <cmath>
#include <numeric>

#include "agcl/core/random.hpp"
#include "agcl/sampling/augment.hpp"

namespace agcl::sampling {

Minibatch build_minibatch(const std::vector<QueryPatch>& patches, std::size_t n,
                          const std::set<int>& modalities, double label_fraction,
                          std::uint64_t seed) {
  if (n == 0) throw ConfigError("minibatch size must be >= 1");
  if (!(label_fraction >= 0.0 && label_fraction <= 1.0)) {
    throw RangeError("label fraction must lie in [0, 1], got " + std::to_string(label_fraction));
  }
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    if (modalities.empty() || modalities.count(patches[i].modality)) pool.push_back(i);
  }
  if (pool.size() < n) {
    throw CapacityError("minibatch needs " + std::to_string(n) + " patches, " +
                        std::to_string(pool.size()) + " available after filtering");
  }
  Rng rng(derive_seed(seed, {0}));
  // partial Fisher-Yates: first n entries become the draw
  for (std::size_t i = 0; i < n; ++i) std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);

  const std::size_t p = patches[pool[0]].size(), view = 2 * p * p;
  const auto n_visible = static_cast<std::size_t>(std::ceil(label_fraction * double(n) - 1e-9));
  Minibatch mb;
  mb.n = n;
  mb.views = Tensor<float>({2 * n, 2, p, p});
  for (std::size_t k = 0; k < n; ++k) {
    const QueryPatch& src = patches[pool[k]];
    if (src.size() != p) throw StructuralError("minibatch mixes patch sizes");
    auto [v1, v2] = augment_pair(src, derive_seed(seed, {1, k}));
    std::copy_n(v1.data(), view, mb.views.data() + (2 * k) * view);
    std::copy_n(v2.data(), view, mb.views.data() + (2 * k + 1) * view);
    for (std::size_t t = 0; t < 2; ++t) {
      mb.meta.pairing.push_back(2 * k + (1 - t));
      mb.meta.labels.push_back({src.modality, src.object});
      mb.meta.visible.push_back(k < n_visible);
      mb.sources.push_back(pool[k]);
    }
  }
  return mb;
}

}  // namespace agcl::sampling
