#pragma once

#include <functional>
#include <string>
#include <vector>

#include "agcl/data/dataset.hpp"
#include "agcl/model/model.hpp"
#include "agcl/sampling/patches.hpp"
#include "agcl/train/config.hpp"
#include "agcl/train/metrics.hpp"

namespace agcl::train {

/// Foreground probability plane ([p, p]) for each patch.
using PatchPredictor =
    std::function<std::vector<Tensor<float>>(const std::vector<sampling::QueryPatch>&)>;

/// Encoder + decoder, evaluated in chunks.
PatchPredictor model_predictor(const model::ModelParams<float>& params);

struct Segmentation {
  LabelMap labels;                 // [H, W]
  Tensor<float> probabilities;     // [O, H, W], overlap-averaged foreground
  std::vector<std::string> warnings;
};

/// For each object, windows on a stride p/2 lattice whose central p/2 x p/2
/// block touches the object's attention foreground are predicted and their
/// foreground probabilities averaged where they overlap (uncovered pixels
/// stay 0). Pixels take the object of highest probability, lowest id on
/// ties, or background when that probability is below `threshold`.
Segmentation infer_segmentation(const data::PhantomSample& sample,
                                const data::AttentionMaps& attention,
                                const PatchPredictor& predictor, std::size_t patch,
                                double threshold = 0.5);

/// Label fusion alone: [O, H, W] probabilities to a label map.
LabelMap fuse_labels(const Tensor<float>& probabilities, double threshold = 0.5);

struct EvalReport {
  std::vector<std::vector<double>> dice;  // per test sample, per object
  std::vector<double> dice_per_object;    // mean over samples
  double dice_mean = 0;
  double miou = 0;
  std::vector<std::string> warnings;
};

EvalReport evaluate(const data::Dataset& ds, const model::ModelParams<float>& params,
                    const RunConfig& cfg);

struct EmbeddingReport {
  std::vector<sampling::QueryPatch> patches;  // held-out patches
  Tensor<double> z;                           // [n, D_E] encoder features
  PcaResult pca;
  double silhouette = 0;                      // over (m, o) clusters
};

/// Encoder features of test-split patches, seeded from cfg.seed.
EmbeddingReport embed(const data::Dataset& ds, const model::ModelParams<float>& params,
                      const RunConfig& cfg);

}  // namespace agcl::train
