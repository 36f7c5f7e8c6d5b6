#pragma once

#include <cmath>

namespace agcl::sampling {

template <typename Map>
Tensor<float> resample(const Tensor<float>& src, std::size_t out_h, std::size_t out_w,
                       Interp interp, Map map) {
  const long h = static_cast<long>(src.dim(0)), w = static_cast<long>(src.dim(1));
  auto at = [&](long y, long x) -> float {
    return (y < 0 || y >= h || x < 0 || x >= w) ? 0.0f : src[y * w + x];
  };
  Tensor<float> out({out_h, out_w});
  for (std::size_t i = 0; i < out_h; ++i) {
    for (std::size_t j = 0; j < out_w; ++j) {
      const auto [sy, sx] = map(double(i) + 0.5, double(j) + 0.5);
      float v;
      if (interp == Interp::nearest) {
        v = at(static_cast<long>(std::floor(sy)), static_cast<long>(std::floor(sx)));
        v = v >= 0.5f ? 1.0f : 0.0f;
      } else {
        const double fy = sy - 0.5, fx = sx - 0.5;
        const long y0 = static_cast<long>(std::floor(fy)), x0 = static_cast<long>(std::floor(fx));
        const double ty = fy - double(y0), tx = fx - double(x0);
        v = static_cast<float>((1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
                               ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1)));
      }
      out[i * out_w + j] = v;
    }
  }
  return out;
}

}  // namespace agcl::sampling
