#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "agcl/core/tensor.hpp"
#include "agcl/data/phantom.hpp"
#include "agcl/losses/losses.hpp"

namespace agcl::sampling {

using data::Mask;

struct QueryPatch {
  Tensor<float> x;  // [p, p] image crop
  Mask c;           // [p, p] attention crop
  Mask y;           // [p, p] ground truth of object o
  Tensor<float> a;  // [2, p, p]: channel 0 = x, channel 1 = c
  int modality = 1;
  int object = 1;
  std::size_t source = 0;
  std::size_t center_y = 0, center_x = 0;

  std::size_t size() const { return x.dim(0); }
};

struct PatchSet {
  std::vector<QueryPatch> patches;
  std::vector<std::string> warnings;
};

/// p x p window whose top-left corner is (cy - p/2, cx - p/2); pixels outside
/// the image are zero.
template <typename T>
Tensor<T> crop_window(const Tensor<T>& plane, long cy, long cx, std::size_t p);

/// n_per_object patches per object, centres drawn uniformly (with
/// replacement) from that object's attention foreground. An object with an
/// empty attention map contributes nothing and a warning.
PatchSet extract_query_patches(const data::PhantomSample& sample,
                               const data::AttentionMaps& attention, std::size_t n_per_object,
                               std::size_t patch_size, std::uint64_t seed);

/// Patch window at an explicit centre (used for inference tiles and tests).
QueryPatch make_patch(const data::PhantomSample& sample, const data::AttentionMaps& attention,
                      std::size_t object_index, long cy, long cx, std::size_t p);

}  // namespace agcl::sampling
