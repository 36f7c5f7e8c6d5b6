#pragma once

#include <cstdint>
#include <vector>

#include "agcl/core/tensor.hpp"

namespace agcl::data {

using Mask = Tensor<std::uint8_t>;

/// Synthetic multi-object image generator settings. Per-(modality, object)
/// tables are row-major [n_modalities][n_objects].
struct PhantomConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t n_objects = 4;
  std::size_t n_modalities = 2;
  std::vector<double> intensity_mean{0.90, 0.75, 0.60, 0.45,   // contrast-enhanced analog
                                     0.62, 0.52, 0.42, 0.32};  // non-contrast analog
  std::vector<double> intensity_sigma = std::vector<double>(8, 0.04);
  std::vector<double> background_mean{0.20, 0.22};
  double noise_sigma = 0.05;
  double axis_min = 5.0;
  double axis_max = 10.0;
  std::size_t min_gap = 2;
  std::size_t max_attempts = 200;

  double mean(int modality, int object) const {
    return intensity_mean[(modality - 1) * n_objects + (object - 1)];
  }
  double sigma(int modality, int object) const {
    return intensity_sigma[(modality - 1) * n_objects + (object - 1)];
  }
  /// ConfigError on any violated invariant (counts, table sizes, object
  /// means within a modality closer than 2 sigma, degenerate axes).
  void validate() const;
};

struct PhantomSample {
  std::size_t id = 0;
  int modality = 1;             // 1..M
  Tensor<float> image;          // [H, W]
  Mask gt_masks;                // [O, H, W], pairwise disjoint, none empty

  std::size_t n_objects() const { return gt_masks.dim(0); }
  std::size_t height() const { return image.dim(0); }
  std::size_t width() const { return image.dim(1); }
  /// Plane o (0-based) of an [O, H, W] mask stack.
  static Mask plane(const Mask& stack, std::size_t o);
};

/// Coarse per-object attention of one sample and the quality it was
/// simulated at.
struct AttentionMaps {
  Mask maps;  // [O, H, W], values in {0, 1}
  double quality = 1.0;

  std::size_t n_objects() const { return maps.dim(0); }
  bool empty(std::size_t o) const;
};

/// Deterministic in (cfg, seed).
PhantomSample generate_phantom(const PhantomConfig& cfg, std::uint64_t seed);

/// Binary coarse mask of controllable quality q in [0, 1]; q = 1 is the
/// identity. Lower q applies a random shift of up to floor((1-q)*8) px, a
/// dilation or erosion of radius up to floor((1-q)*3), and flips each
/// boundary pixel with probability 1-q.
Mask simulate_coarse_mask(const Mask& gt, double quality, std::uint64_t seed);

/// 2|A n B| / (|A| + |B|), 1 when both are empty.
double mask_dice(const Mask& a, const Mask& b);

/// One coarse mask per object of `sample`, object o seeded by (seed, o).
AttentionMaps simulate_attention(const PhantomSample& sample, double quality, std::uint64_t seed);

}  // namespace agcl::data
