#include "agcl/sampling/patches.hpp"

#include "agcl/core/random.hpp"

namespace agcl::sampling {

template <typename T>
Tensor<T> crop_window(const Tensor<T>& plane, long cy, long cx, std::size_t p) {
  const long h = static_cast<long>(plane.dim(0)), w = static_cast<long>(plane.dim(1));
  const long top = cy - long(p / 2), left = cx - long(p / 2);
  Tensor<T> out({p, p});
  for (long i = 0; i < long(p); ++i) {
    const long y = top + i;
    if (y < 0 || y >= h) continue;
    for (long j = 0; j < long(p); ++j) {
      const long x = left + j;
      if (x >= 0 && x < w) out[i * long(p) + j] = plane[y * w + x];
    }
  }
  return out;
}

template Tensor<float> crop_window(const Tensor<float>&, long, long, std::size_t);
template Tensor<std::uint8_t> crop_window(const Tensor<std::uint8_t>&, long, long, std::size_t);

QueryPatch make_patch(const data::PhantomSample& sample, const data::AttentionMaps& attention,
                      std::size_t object_index, long cy, long cx, std::size_t p) {
  QueryPatch q;
  q.x = crop_window(sample.image, cy, cx, p);
  q.c = crop_window(data::PhantomSample::plane(attention.maps, object_index), cy, cx, p);
  q.y = crop_window(data::PhantomSample::plane(sample.gt_masks, object_index), cy, cx, p);
  q.a = Tensor<float>({2, p, p});
  for (std::size_t i = 0; i < p * p; ++i) {
    q.a[i] = q.x[i];
    q.a[p * p + i] = static_cast<float>(q.c[i]);
  }
  q.modality = sample.modality;
  q.object = static_cast<int>(object_index + 1);
  q.source = sample.id;
  q.center_y = static_cast<std::size_t>(cy);
  q.center_x = static_cast<std::size_t>(cx);
  return q;
}

PatchSet extract_query_patches(const data::PhantomSample& sample,
                               const data::AttentionMaps& attention, std::size_t n_per_object,
                               std::size_t patch_size, std::uint64_t seed) {
  const std::size_t h = sample.height(), w = sample.width();
  if (patch_size == 0 || patch_size > h || patch_size > w) {
    throw StructuralError("patch size " + std::to_string(patch_size) + " does not fit a " +
                          std::to_string(h) + "x" + std::to_string(w) + " image");
  }
  if (attention.maps.shape() != sample.gt_masks.shape()) {
    throw StructuralError("attention maps " + shape_string(attention.maps.shape()) +
                          " vs ground truth " + shape_string(sample.gt_masks.shape()));
  }
  for (auto v : attention.maps.values())
    if (v > 1) throw ValidationError("attention map of sample " + std::to_string(sample.id) + " is not binary");

  PatchSet out;
  const std::size_t plane = h * w;
  for (std::size_t o = 0; o < sample.n_objects(); ++o) {
    std::vector<std::size_t> fg;
    for (std::size_t q = 0; q < plane; ++q)
      if (attention.maps[o * plane + q]) fg.push_back(q);
    if (fg.empty()) {
      out.warnings.push_back("sample " + std::to_string(sample.id) + " object " +
                             std::to_string(o + 1) + ": empty attention map, no patches");
      continue;
    }
    Rng rng(derive_seed(seed, {sample.id, o}));
    for (std::size_t k = 0; k < n_per_object; ++k) {
      const std::size_t q = fg[uniform_index(rng, fg.size())];
      out.patches.push_back(make_patch(sample, attention, o, long(q / w), long(q % w), patch_size));
    }
  }
  return out;
}

}  // namespace agcl::sampling
