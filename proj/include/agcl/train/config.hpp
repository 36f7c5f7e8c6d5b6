#pragma once

#include <cstdint>
#include <set>
#include <string>

#include "agcl/data/phantom.hpp"
#include "agcl/model/model.hpp"

namespace agcl::train {

enum class LossKind { sscl, agcl, ce, none };
std::string loss_name(LossKind k);
/// ConfigError for anything but sscl, agcl, ce, none.
LossKind parse_loss(const std::string& s);

struct SamplingConfig {
  std::size_t pretrain_patches_per_object = 4;
  std::size_t finetune_patches_per_object = 2;
  std::size_t embed_patches_per_object = 2;
};

struct Stage1Config {
  LossKind loss = LossKind::agcl;
  double temp = 0.1;
  std::size_t epochs = 4;
  std::size_t batch = 32;  // N source patches, 2N views
  double lr = 0.05;
  std::set<int> modalities;  // empty = all
  double label_fraction = 1.0;
};

struct Stage2Config {
  std::size_t epochs = 8;
  std::size_t batch = 16;
  double lr = 0.1;
  bool freeze_encoder = true;
};

struct EvalConfig {
  double threshold = 0.5;
};

struct RunConfig {
  std::uint64_t seed = 1;
  data::PhantomConfig phantom;
  std::size_t n_train = 200;
  std::size_t n_test = 50;
  double quality = 0.9;
  SamplingConfig sampling;
  model::ModelConfig model;
  Stage1Config stage1;
  Stage2Config stage2;
  EvalConfig eval;

  /// ConfigError naming the offending field.
  void validate() const;
};

}  // namespace agcl::train
