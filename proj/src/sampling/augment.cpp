#include "agcl/sampling/augment.hpp"

#include <cmath>
#include <numbers>

namespace agcl::sampling {

Tensor<float> rotate(const Tensor<float>& plane, double degrees, Interp interp) {
  const double cy = plane.dim(0) / 2.0, cx = plane.dim(1) / 2.0;
  const double t = degrees * std::numbers::pi / 180.0, c = std::cos(t), s = std::sin(t);
  // inverse map: rotate output coordinates by -t
  return resample(plane, plane.dim(0), plane.dim(1), interp, [&](double y, double x) {
    const double dy = y - cy, dx = x - cx;
    return std::pair{cy + c * dy - s * dx, cx + s * dy + c * dx};
  });
}

Tensor<float> scale_axes(const Tensor<float>& plane, double sy, double sx, Interp interp) {
  const double cy = plane.dim(0) / 2.0, cx = plane.dim(1) / 2.0;
  return resample(plane, plane.dim(0), plane.dim(1), interp, [&](double y, double x) {
    return std::pair{cy + (y - cy) / sy, cx + (x - cx) / sx};
  });
}

Tensor<float> crop_resize(const Tensor<float>& plane, double y0, double x0, double h, double w,
                          std::size_t out, Interp interp) {
  const double fy = h / double(out), fx = w / double(out);
  return resample(plane, out, out, interp,
                  [&](double y, double x) { return std::pair{y0 + y * fy, x0 + x * fx}; });
}

AugmentParams draw_augment(Rng& rng, std::size_t p) {
  AugmentParams a;
  a.crop_side = double(p) * std::sqrt(kCropArea);
  a.crop_y = uniform(rng, 0.0, double(p) - a.crop_side);
  a.crop_x = uniform(rng, 0.0, double(p) - a.crop_side);
  a.angle_deg = uniform(rng, -kMaxAngleDeg, kMaxAngleDeg);
  a.scale_width = uniform(rng, 1.0 - kWidthJitter, 1.0 + kWidthJitter);
  a.scale_length = uniform(rng, 1.0 - kLengthJitter, 1.0 + kLengthJitter);
  return a;
}

Tensor<float> apply_augment(const Tensor<float>& a, const AugmentParams& prm) {
  if (a.rank() != 3 || a.dim(0) != 2 || a.dim(1) != a.dim(2)) {
    throw StructuralError("augment expects a [2, p, p] patch, got " + shape_string(a.shape()));
  }
  const std::size_t p = a.dim(1), plane = p * p;
  Tensor<float> out({2, p, p});
  for (std::size_t ch = 0; ch < 2; ++ch) {
    const Interp interp = ch == 0 ? Interp::bilinear : Interp::nearest;
    Tensor<float> img({p, p}, std::vector<float>(a.data() + ch * plane, a.data() + (ch + 1) * plane));
    img = crop_resize(img, prm.crop_y, prm.crop_x, prm.crop_side, prm.crop_side, p, interp);
    img = rotate(img, prm.angle_deg, interp);
    // length runs along rows, width along columns
    img = scale_axes(img, prm.scale_length, prm.scale_width, interp);
    std::copy_n(img.data(), plane, out.data() + ch * plane);
  }
  return out;
}

std::pair<Tensor<float>, Tensor<float>> augment_pair(const QueryPatch& patch, std::uint64_t seed) {
  const std::size_t p = patch.size();
  Rng r1(derive_seed(seed, {0})), r2(derive_seed(seed, {1}));
  const auto p1 = draw_augment(r1, p);
  const auto p2 = draw_augment(r2, p);
  return {apply_augment(patch.a, p1), apply_augment(patch.a, p2)};
}

}  // namespace agcl::sampling
