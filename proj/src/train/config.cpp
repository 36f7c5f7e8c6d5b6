#include "agcl/train/config.hpp"

#include <cmath>

namespace agcl::train {

std::string loss_name(LossKind k) {
  switch (k) {
    case LossKind::sscl: return "sscl";
    case LossKind::agcl: return "agcl";
    case LossKind::ce: return "ce";
    case LossKind::none: return "none";
  }
  return "?";
}

LossKind parse_loss(const std::string& s) {
  if (s == "sscl") return LossKind::sscl;
  if (s == "agcl") return LossKind::agcl;
  if (s == "ce") return LossKind::ce;
  if (s == "none") return LossKind::none;
  throw ConfigError("unknown loss '" + s + "' (expected sscl, agcl, ce or none)");
}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  phantom.validate();
  model.validate();
  if (n_train < 1) fail("[phantom].n_train must be >= 1");
  if (!(quality >= 0 && quality <= 1)) fail("[phantom].quality must lie in [0, 1]");
  if (model.in_channels != 2) fail("[model].in_channels must be 2 (image + attention)");
  if (model.patch > phantom.height || model.patch > phantom.width) {
    fail("[model].patch exceeds the phantom image size");
  }
  if (sampling.pretrain_patches_per_object < 1) fail("[sampling].pretrain_patches_per_object must be >= 1");
  if (sampling.finetune_patches_per_object < 1) fail("[sampling].finetune_patches_per_object must be >= 1");
  if (sampling.embed_patches_per_object < 1) fail("[sampling].embed_patches_per_object must be >= 1");
  if (!(stage1.temp > 0) || !std::isfinite(stage1.temp)) fail("[stage1].temp must be > 0");
  if (!(stage1.lr > 0)) fail("[stage1].lr must be > 0");
  if (stage1.batch < 1) fail("[stage1].batch must be >= 1");
  if (!(stage1.label_fraction >= 0 && stage1.label_fraction <= 1)) {
    fail("[stage1].label_fraction must lie in [0, 1]");
  }
  for (int m : stage1.modalities) {
    if (m < 1 || std::size_t(m) > phantom.n_modalities) {
      fail("[stage1].modalities lists unknown modality " + std::to_string(m));
    }
  }
  if (!(stage2.lr > 0)) fail("[stage2].lr must be > 0");
  if (stage2.batch < 1) fail("[stage2].batch must be >= 1");
  if (!(eval.threshold > 0 && eval.threshold < 1)) fail("[eval].threshold must lie in (0, 1)");
}

}  // namespace agcl::train
