#include "agcl/train/inference.hpp"

#include "agcl/core/random.hpp"
#include "agcl/train/trainer.hpp"

namespace agcl::train {

namespace {
constexpr std::size_t kChunk = 64;
constexpr std::uint64_t kEmbedPatches = 7;
}  // namespace

PatchPredictor model_predictor(const model::ModelParams<float>& params) {
  return [params](const std::vector<sampling::QueryPatch>& patches) {
    const auto& mc = params.config;
    const std::size_t p = mc.patch, plane = p * p;
    std::vector<Tensor<float>> out;
    out.reserve(patches.size());
    for (std::size_t lo = 0; lo < patches.size(); lo += kChunk) {
      const std::size_t b = std::min(kChunk, patches.size() - lo);
      Tensor<float> views({b, 2, p, p});
      for (std::size_t i = 0; i < b; ++i) {
        if (patches[lo + i].size() != p) throw StructuralError("predictor given a patch of the wrong size");
        std::copy_n(patches[lo + i].a.data(), 2 * plane, views.data() + i * 2 * plane);
      }
      Tape<float> tape;
      auto frozen = params;
      for (auto& [c, f] : frozen.frozen) f = true;
      const auto vars = model::bind(tape, frozen);
      const auto s = model::decoder_forward(mc, vars, model::encoder_forward(mc, vars, tape.constant(views)));
      for (std::size_t i = 0; i < b; ++i) {
        Tensor<float> fg({p, p});
        std::copy_n(s.value().data() + (2 * i + 1) * plane, plane, fg.data());
        out.push_back(std::move(fg));
      }
    }
    return out;
  };
}

LabelMap fuse_labels(const Tensor<float>& prob, double threshold) {
  const std::size_t n_obj = prob.dim(0), h = prob.dim(1), w = prob.dim(2), plane = h * w;
  LabelMap labels({h, w});
  for (std::size_t q = 0; q < plane; ++q) {
    float best = -1;
    std::size_t arg = 0;
    for (std::size_t o = 0; o < n_obj; ++o) {
      if (prob[o * plane + q] > best) {  // strict: ties keep the lower id
        best = prob[o * plane + q];
        arg = o;
      }
    }
    if (n_obj > 0 && best >= threshold) labels[q] = static_cast<std::uint8_t>(arg + 1);
  }
  return labels;
}

Segmentation infer_segmentation(const data::PhantomSample& sample,
                                const data::AttentionMaps& attention,
                                const PatchPredictor& predictor, std::size_t patch,
                                double threshold) {
  const std::size_t h = sample.height(), w = sample.width(), plane = h * w;
  const std::size_t n_obj = sample.n_objects();
  if (attention.maps.shape() != sample.gt_masks.shape()) {
    throw StructuralError("inference needs one attention map per object, got " +
                          shape_string(attention.maps.shape()));
  }
  if (patch < 2 || patch > h || patch > w) throw StructuralError("patch size does not fit the image");
  const std::size_t stride = patch / 2;
  Segmentation seg;
  seg.probabilities = Tensor<float>({n_obj, h, w});

  std::vector<sampling::QueryPatch> windows;
  for (std::size_t o = 0; o < n_obj; ++o) {
    if (attention.empty(o)) {
      seg.warnings.push_back("sample " + std::to_string(sample.id) + " object " +
                             std::to_string(o + 1) + ": empty attention map");
      continue;
    }
    // lattice centres c = k*stride; the central block of window c is
    // [c - stride/2, c + stride/2)
    for (std::size_t cy = 0; cy <= h; cy += stride) {
      for (std::size_t cx = 0; cx <= w; cx += stride) {
        bool touches = false;
        const long y0 = long(cy) - long(stride / 2), x0 = long(cx) - long(stride / 2);
        for (long y = std::max(0L, y0); y < std::min(long(h), y0 + long(stride)) && !touches; ++y)
          for (long x = std::max(0L, x0); x < std::min(long(w), x0 + long(stride)) && !touches; ++x)
            touches = attention.maps[o * plane + std::size_t(y) * w + std::size_t(x)] != 0;
        if (touches) windows.push_back(sampling::make_patch(sample, attention, o, long(cy), long(cx), patch));
      }
    }
  }
  if (windows.empty()) {
    seg.warnings.push_back("sample " + std::to_string(sample.id) + ": no attention foreground");
    seg.labels = LabelMap({h, w});
    return seg;
  }

  const auto probs = predictor(windows);
  if (probs.size() != windows.size()) throw StructuralError("predictor returned the wrong number of planes");
  std::vector<float> count(n_obj * plane, 0.0f);
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const auto& win = windows[k];
    const std::size_t o = std::size_t(win.object - 1);
    const long top = long(win.center_y) - long(patch / 2), left = long(win.center_x) - long(patch / 2);
    for (long i = 0; i < long(patch); ++i) {
      const long y = top + i;
      if (y < 0 || y >= long(h)) continue;
      for (long j = 0; j < long(patch); ++j) {
        const long x = left + j;
        if (x < 0 || x >= long(w)) continue;
        const std::size_t q = o * plane + std::size_t(y) * w + std::size_t(x);
        seg.probabilities[q] += probs[k][std::size_t(i) * patch + std::size_t(j)];
        count[q] += 1.0f;
      }
    }
  }
  for (std::size_t q = 0; q < count.size(); ++q)
    if (count[q] > 0) seg.probabilities[q] /= count[q];
  seg.labels = fuse_labels(seg.probabilities, threshold);
  return seg;
}

EvalReport evaluate(const data::Dataset& ds, const model::ModelParams<float>& params,
                    const RunConfig& cfg) {
  EvalReport rep;
  const auto predictor = model_predictor(params);
  const std::size_t n_obj = ds.manifest.n_objects;
  rep.dice_per_object.assign(n_obj, 0.0);
  const auto test = ds.indices(data::Split::test);
  if (test.empty()) throw CapacityError("dataset has no test samples to evaluate");
  for (std::size_t i : test) {
    const auto& s = ds.samples[i];
    auto seg = infer_segmentation(s, ds.attention[i], predictor, params.config.patch, cfg.eval.threshold);
    rep.warnings.insert(rep.warnings.end(), seg.warnings.begin(), seg.warnings.end());
    auto d = dice_score(seg.labels, s.gt_masks);
    for (std::size_t o = 0; o < n_obj; ++o) rep.dice_per_object[o] += d[o] / double(test.size());
    rep.miou += miou(seg.labels, labels_from_masks(s.gt_masks), n_obj) / double(test.size());
    rep.dice.push_back(std::move(d));
  }
  for (double v : rep.dice_per_object) rep.dice_mean += v / double(n_obj);
  return rep;
}

EmbeddingReport embed(const data::Dataset& ds, const model::ModelParams<float>& params,
                      const RunConfig& cfg) {
  EmbeddingReport rep;
  const auto& mc = params.config;
  rep.patches = collect_patches(ds, data::Split::test, cfg.sampling.embed_patches_per_object,
                                mc.patch, derive_seed(cfg.seed, {kEmbedPatches}));
  const std::size_t n = rep.patches.size(), plane = mc.patch * mc.patch;
  if (n < 3) throw CapacityError("embedding needs at least 3 held-out patches, found " + std::to_string(n));
  rep.z = Tensor<double>({n, mc.feature_dim});
  auto frozen = params;
  for (auto& [c, f] : frozen.frozen) f = true;
  for (std::size_t lo = 0; lo < n; lo += kChunk) {
    const std::size_t b = std::min(kChunk, n - lo);
    Tensor<float> views({b, 2, mc.patch, mc.patch});
    for (std::size_t i = 0; i < b; ++i)
      std::copy_n(rep.patches[lo + i].a.data(), 2 * plane, views.data() + i * 2 * plane);
    Tape<float> tape;
    const auto vars = model::bind(tape, frozen);
    const auto enc = model::encoder_forward(mc, vars, tape.constant(views));
    for (std::size_t k = 0; k < b * mc.feature_dim; ++k) rep.z[lo * mc.feature_dim + k] = enc.z.value()[k];
  }
  std::vector<int> labels;
  for (const auto& p : rep.patches) labels.push_back(p.modality * 1000 + p.object);
  rep.silhouette = cluster_separation(rep.z, labels);
  rep.pca = pca_project(rep.z, 2);
  return rep;
}

}  // namespace agcl::train
