#pragma once

#include <cstdint>
#include <utility>

#include "agcl/core/random.hpp"
#include "agcl/sampling/patches.hpp"

namespace agcl::sampling {

enum class Interp { nearest, bilinear };

/// Resample an [H, W] plane: output pixel (i, j) reads the source at
/// map(i + 0.5, j + 0.5) in pixel-centre coordinates, zero outside.
/// Nearest-neighbour output is re-binarised at 0.5.
template <typename Map>
Tensor<float> resample(const Tensor<float>& src, std::size_t out_h, std::size_t out_w,
                       Interp interp, Map map);

/// Rotation about the plane centre, counter-clockwise in degrees.
Tensor<float> rotate(const Tensor<float>& plane, double degrees, Interp interp);
/// Stretch by (sy, sx) about the centre, keeping the extent.
Tensor<float> scale_axes(const Tensor<float>& plane, double sy, double sx, Interp interp);
/// Crop [y0, y0+h) x [x0, x0+w) (real-valued box) resized to out x out.
Tensor<float> crop_resize(const Tensor<float>& plane, double y0, double x0, double h, double w,
                          std::size_t out, Interp interp);

struct AugmentParams {
  double crop_y = 0, crop_x = 0, crop_side = 0;  // in pixels
  double angle_deg = 0;
  double scale_width = 1, scale_length = 1;
};

inline constexpr double kCropArea = 0.8;
inline constexpr double kMaxAngleDeg = 30.0;
inline constexpr double kWidthJitter = 0.3;
inline constexpr double kLengthJitter = 0.7;

AugmentParams draw_augment(Rng& rng, std::size_t p);

/// Crop, rotate, per-axis scale applied to a [2, p, p] view (channel 1 is
/// treated as a binary mask).
Tensor<float> apply_augment(const Tensor<float>& a, const AugmentParams& params);

/// Two independent views of patch.a; view v uses the stream (seed, v).
std::pair<Tensor<float>, Tensor<float>> augment_pair(const QueryPatch& patch, std::uint64_t seed);

}  // namespace agcl::sampling

#include "agcl/sampling/augment_impl.hpp"
