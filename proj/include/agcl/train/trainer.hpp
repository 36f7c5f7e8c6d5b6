#pragma once

#include <string>
#include <vector>

#include "agcl/data/dataset.hpp"
#include "agcl/model/model.hpp"
#include "agcl/sampling/patches.hpp"
#include "agcl/train/config.hpp"

namespace agcl::train {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0;        // mean over the epoch's steps
  std::vector<double> step_losses;
};

struct TrainHistory {
  std::string stage;
  std::vector<EpochRecord> epochs;
  double wall_clock_s = 0;
};

struct TrainResult {
  model::ModelParams<float> params;
  TrainHistory history;
};

/// Query patches of the given split, per sample seeded by (seed, sample id).
std::vector<sampling::QueryPatch> collect_patches(const data::Dataset& ds, data::Split split,
                                                  std::size_t per_object, std::size_t patch,
                                                  std::uint64_t seed,
                                                  std::vector<std::string>* warnings = nullptr);

/// Stage 1. Trains E and P with the configured loss ("ce" uses a temporary
/// linear (m, o) head on z; "none" leaves the initialisation untouched) and
/// returns parameters with the encoder frozen. Every step is a fresh
/// minibatch of N patches, pool/N steps per epoch, plain SGD.
TrainResult pretrain_stage1(const data::Dataset& ds, const RunConfig& cfg);

/// Stage 2. Trains D with the Dice loss on (a, y) training patches; E is
/// left bit-unchanged when freeze_encoder is set.
TrainResult finetune_stage2(const data::Dataset& ds, const model::ModelParams<float>& pretrained,
                            const RunConfig& cfg);

/// Initial parameters a run with this config and seed starts from.
model::ModelParams<float> initial_params(const RunConfig& cfg);

}  // namespace agcl::train
