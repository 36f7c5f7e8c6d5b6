#include "agcl/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "agcl/core/random.hpp"
#include "agcl/losses/losses.hpp"
#include "agcl/sampling/minibatch.hpp"

namespace agcl::train {

namespace {

using Clock = std::chrono::steady_clock;
using model::Component;
using model::ModelParams;

enum StreamKey : std::uint64_t {
  kInit = 1,
  kPretrainPatches = 2,
  kMinibatch = 3,
  kHeadInit = 4,
  kFinetunePatches = 5,
  kFinetuneOrder = 6,
};

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

void sgd_step(Tape<float>& tape, const model::Bound<float>& vars, ModelParams<float>& params,
              double lr, const std::vector<std::string>& prefixes) {
  const auto step = static_cast<float>(lr);
  for (auto& [name, t] : params.tensors) {
    bool selected = false;
    for (const auto& p : prefixes) selected = selected || starts_with(name, p);
    const auto id = vars[name].id;
    if (!selected || !tape.requires_grad(id)) continue;
    const auto& g = tape.grad(vars[name]);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] -= step * g[i];
  }
}

}  // namespace

std::vector<sampling::QueryPatch> collect_patches(const data::Dataset& ds, data::Split split,
                                                  std::size_t per_object, std::size_t patch,
                                                  std::uint64_t seed,
                                                  std::vector<std::string>* warnings) {
  std::vector<sampling::QueryPatch> out;
  for (std::size_t i : ds.indices(split)) {
    auto set = sampling::extract_query_patches(ds.samples[i], ds.attention[i], per_object, patch,
                                               derive_seed(seed, {i}));
    for (auto& p : set.patches) out.push_back(std::move(p));
    if (warnings) warnings->insert(warnings->end(), set.warnings.begin(), set.warnings.end());
  }
  return out;
}

ModelParams<float> initial_params(const RunConfig& cfg) {
  model::ModelConfig mc = cfg.model;
  mc.temperature = cfg.stage1.temp;
  return model::init_params<float>(mc, derive_seed(cfg.seed, {kInit}));
}

TrainResult pretrain_stage1(const data::Dataset& ds, const RunConfig& cfg) {
  cfg.validate();
  const auto start = Clock::now();
  TrainResult r{initial_params(cfg), TrainHistory{"pretrain", {}, 0}};
  const auto& mc = r.params.config;
  const auto& s1 = cfg.stage1;

  const auto patches = collect_patches(ds, data::Split::train,
                                       cfg.sampling.pretrain_patches_per_object, mc.patch,
                                       derive_seed(cfg.seed, {kPretrainPatches}));
  std::size_t pool = 0;
  for (const auto& p : patches) pool += s1.modalities.empty() || s1.modalities.count(p.modality);
  if (pool < s1.batch) {
    throw CapacityError("stage 1 needs " + std::to_string(s1.batch) + " patches per minibatch, " +
                        std::to_string(pool) + " available after the modality filter");
  }
  if (s1.loss == LossKind::none) {
    r.params.frozen[Component::encoder] = true;
    return r;
  }

  const std::size_t n_classes = cfg.phantom.n_modalities * cfg.phantom.n_objects;
  Tensor<float> head_w({n_classes, mc.feature_dim}), head_b({n_classes});
  {
    Rng rng(derive_seed(cfg.seed, {kHeadInit}));
    const double bound = std::sqrt(6.0 / double(mc.feature_dim));
    for (auto& v : head_w.values()) v = static_cast<float>(uniform(rng, -bound, bound));
  }

  const std::size_t steps = std::max<std::size_t>(1, pool / s1.batch);
  const float inv_views = 1.0f / static_cast<float>(2 * s1.batch);
  for (std::size_t epoch = 1; epoch <= s1.epochs; ++epoch) {
    EpochRecord rec{epoch, 0, {}};
    for (std::size_t step = 0; step < steps; ++step) {
      const auto mb = sampling::build_minibatch(patches, s1.batch, s1.modalities, s1.label_fraction,
                                                derive_seed(cfg.seed, {kMinibatch, epoch, step}));
      Tape<float> tape;
      const auto vars = model::bind(tape, r.params);
      const auto enc = model::encoder_forward(mc, vars, tape.constant(mb.views));
      Var<float> loss;
      Var<float> hw{}, hb{};
      if (s1.loss == LossKind::ce) {
        hw = tape.input(head_w, "head.weight");
        hb = tape.input(head_b, "head.bias");
        std::vector<std::size_t> targets;
        for (const auto& l : mb.meta.labels) {
          targets.push_back(std::size_t(l.modality - 1) * cfg.phantom.n_objects + std::size_t(l.object - 1));
        }
        loss = losses::softmax_cross_entropy(linear(enc.z, hw, hb), targets, mb.meta.visible);
      } else {
        const auto mode = s1.loss == LossKind::agcl ? losses::ContrastiveMode::agcl
                                                    : losses::ContrastiveMode::sscl;
        const auto emb = model::projection_forward(mc, vars, enc.z);
        loss = losses::contrastive_loss(emb, mb.meta, mode, s1.temp);
      }
      loss = scale(loss, inv_views);
      tape.backward(loss);
      sgd_step(tape, vars, r.params, s1.lr, {"encoder.", "projection."});
      if (s1.loss == LossKind::ce && tape.requires_grad(hw.id)) {
        const auto step_size = static_cast<float>(s1.lr);
        const auto& gw = tape.grad(hw);
        const auto& gb = tape.grad(hb);
        for (std::size_t i = 0; i < head_w.numel(); ++i) head_w[i] -= step_size * gw[i];
        for (std::size_t i = 0; i < head_b.numel(); ++i) head_b[i] -= step_size * gb[i];
      }
      rec.step_losses.push_back(loss.value().item());
    }
    rec.loss = std::accumulate(rec.step_losses.begin(), rec.step_losses.end(), 0.0) /
               double(rec.step_losses.size());
    r.history.epochs.push_back(std::move(rec));
  }
  r.params.frozen[Component::encoder] = true;
  r.history.wall_clock_s = std::chrono::duration<double>(Clock::now() - start).count();
  return r;
}

TrainResult finetune_stage2(const data::Dataset& ds, const ModelParams<float>& pretrained,
                            const RunConfig& cfg) {
  cfg.validate();
  const auto start = Clock::now();
  TrainResult r{pretrained, TrainHistory{"finetune", {}, 0}};
  const auto& mc = r.params.config;
  for (const char* name : {"decoder.out.weight", "decoder.aspp1.weight", "decoder.refine.weight"}) {
    if (!r.params.tensors.count(name)) {
      throw StructuralError(std::string("pretrained parameters lack decoder tensor ") + name);
    }
  }
  const bool frozen = cfg.stage2.freeze_encoder;
  r.params.frozen[Component::encoder] = frozen;
  r.params.frozen[Component::projection] = true;
  r.params.frozen[Component::decoder] = false;

  const auto patches = collect_patches(ds, data::Split::train,
                                       cfg.sampling.finetune_patches_per_object, mc.patch,
                                       derive_seed(cfg.seed, {kFinetunePatches}));
  if (patches.empty()) throw CapacityError("stage 2 found no training patches");
  const std::size_t n = patches.size(), p = mc.patch, plane = p * p;

  // Frozen encoder: its outputs never change, so compute them once.
  const std::size_t deep_side = mc.deep_size(), half = p / 2;
  const std::size_t deep_elems = mc.feature_dim * deep_side * deep_side;
  const std::size_t skip_elems = mc.encoder_widths[1] * half * half;
  Tensor<float> deep_cache, skip_cache;
  auto gather_views = [&](const std::size_t* idx, std::size_t b) {
    Tensor<float> views({b, 2, p, p});
    for (std::size_t i = 0; i < b; ++i) std::copy_n(patches[idx[i]].a.data(), 2 * plane, views.data() + i * 2 * plane);
    return views;
  };
  if (frozen) {
    deep_cache = Tensor<float>({n, mc.feature_dim, deep_side, deep_side});
    skip_cache = Tensor<float>({n, mc.encoder_widths[1], half, half});
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t lo = 0; lo < n; lo += 64) {
      const std::size_t b = std::min<std::size_t>(64, n - lo);
      Tape<float> tape;
      const auto vars = model::bind(tape, r.params);
      const auto enc = model::encoder_forward(mc, vars, tape.constant(gather_views(all.data() + lo, b)));
      std::copy_n(enc.deep.value().data(), b * deep_elems, deep_cache.data() + lo * deep_elems);
      std::copy_n(enc.skip.value().data(), b * skip_elems, skip_cache.data() + lo * skip_elems);
    }
  }

  std::vector<std::string> update{"decoder."};
  if (!frozen) update.push_back("encoder.");
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 1; epoch <= cfg.stage2.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.seed, {kFinetuneOrder, epoch}));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

    EpochRecord rec{epoch, 0, {}};
    for (std::size_t lo = 0; lo < n; lo += cfg.stage2.batch) {
      const std::size_t b = std::min(cfg.stage2.batch, n - lo);
      const std::size_t* idx = order.data() + lo;
      Tensor<float> onehot({b, 2, p, p});
      for (std::size_t i = 0; i < b; ++i) {
        const auto& y = patches[idx[i]].y;
        for (std::size_t q = 0; q < plane; ++q) {
          onehot[(2 * i) * plane + q] = y[q] ? 0.0f : 1.0f;
          onehot[(2 * i + 1) * plane + q] = y[q] ? 1.0f : 0.0f;
        }
      }
      Tape<float> tape;
      const auto vars = model::bind(tape, r.params);
      model::EncoderOutput<float> enc;
      if (frozen) {
        Tensor<float> deep({b, mc.feature_dim, deep_side, deep_side});
        Tensor<float> skip({b, mc.encoder_widths[1], half, half});
        for (std::size_t i = 0; i < b; ++i) {
          std::copy_n(deep_cache.data() + idx[i] * deep_elems, deep_elems, deep.data() + i * deep_elems);
          std::copy_n(skip_cache.data() + idx[i] * skip_elems, skip_elems, skip.data() + i * skip_elems);
        }
        enc.deep = tape.constant(std::move(deep));
        enc.skip = tape.constant(std::move(skip));
        enc.z = enc.deep;
      } else {
        enc = model::encoder_forward(mc, vars, tape.constant(gather_views(idx, b)));
      }
      auto loss = scale(losses::dice_loss(model::decoder_forward(mc, vars, enc), onehot),
                        1.0f / static_cast<float>(b));
      tape.backward(loss);
      sgd_step(tape, vars, r.params, cfg.stage2.lr, update);
      rec.step_losses.push_back(loss.value().item());
    }
    rec.loss = std::accumulate(rec.step_losses.begin(), rec.step_losses.end(), 0.0) /
               double(rec.step_losses.size());
    r.history.epochs.push_back(std::move(rec));
  }
  r.history.wall_clock_s = std::chrono::duration<double>(Clock::now() - start).count();
  return r;
}

}  // namespace agcl::train
