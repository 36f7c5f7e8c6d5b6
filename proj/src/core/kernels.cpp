#include "agcl/core/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

#include <omp.h>

namespace agcl::kernels {

namespace serial {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w,
                    const T* bias, T* y) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const long pad = static_cast<long>(g.pad);
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          T acc = bias ? bias[o] : T{0};
          for (std::size_t c = 0; c < g.in_channels; ++c) {
            for (std::size_t ki = 0; ki < g.kernel; ++ki) {
              const long r = static_cast<long>(i + ki * g.dilation) - pad;
              if (r < 0 || r >= static_cast<long>(g.in_h)) continue;
              for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                const long s = static_cast<long>(j + kj * g.dilation) - pad;
                if (s < 0 || s >= static_cast<long>(g.in_w)) continue;
                acc += w[((o * g.in_channels + c) * g.kernel + ki) * g.kernel + kj] *
                       x[((b * g.in_channels + c) * g.in_h + r) * g.in_w + s];
              }
            }
          }
          y[((b * g.out_channels + o) * oh + i) * ow + j] = acc;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* dy, const T* w,
                           T* dx) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const long pad = static_cast<long>(g.pad);
  std::fill(dx, dx + g.batch * g.in_channels * g.in_h * g.in_w, T{0});
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          const T grad = dy[((b * g.out_channels + o) * oh + i) * ow + j];
          for (std::size_t c = 0; c < g.in_channels; ++c) {
            for (std::size_t ki = 0; ki < g.kernel; ++ki) {
              const long r = static_cast<long>(i + ki * g.dilation) - pad;
              if (r < 0 || r >= static_cast<long>(g.in_h)) continue;
              for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                const long s = static_cast<long>(j + kj * g.dilation) - pad;
                if (s < 0 || s >= static_cast<long>(g.in_w)) continue;
                dx[((b * g.in_channels + c) * g.in_h + r) * g.in_w + s] +=
                    grad * w[((o * g.in_channels + c) * g.kernel + ki) * g.kernel + kj];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* x, const T* dy,
                            T* dw, T* dbias) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const long pad = static_cast<long>(g.pad);
  std::fill(dw, dw + g.out_channels * g.patch_size(), T{0});
  if (dbias) std::fill(dbias, dbias + g.out_channels, T{0});
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          const T grad = dy[((b * g.out_channels + o) * oh + i) * ow + j];
          if (dbias) dbias[o] += grad;
          for (std::size_t c = 0; c < g.in_channels; ++c) {
            for (std::size_t ki = 0; ki < g.kernel; ++ki) {
              const long r = static_cast<long>(i + ki * g.dilation) - pad;
              if (r < 0 || r >= static_cast<long>(g.in_h)) continue;
              for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                const long s = static_cast<long>(j + kj * g.dilation) - pad;
                if (s < 0 || s >= static_cast<long>(g.in_w)) continue;
                dw[((o * g.in_channels + c) * g.kernel + ki) * g.kernel + kj] +=
                    grad * x[((b * g.in_channels + c) * g.in_h + r) * g.in_w + s];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void matmul(std::size_t m, std::size_t k, std::size_t n, const T* a,
            const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc{0};
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

}  // namespace serial

namespace parallel {
namespace {

// cols[(c*K + ki)*K + kj][i*ow + j] for one batch item.
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const long pad = static_cast<long>(g.pad);
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const T* plane = x + c * g.in_h * g.in_w;
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        T* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * oh * ow;
        const long dr = static_cast<long>(ki * g.dilation) - pad;
        const long dc = static_cast<long>(kj * g.dilation) - pad;
        for (std::size_t i = 0; i < oh; ++i) {
          const long r = static_cast<long>(i) + dr;
          T* out = row + i * ow;
          if (r < 0 || r >= static_cast<long>(g.in_h)) {
            std::fill(out, out + ow, T{0});
            continue;
          }
          const T* src = plane + r * g.in_w;
          for (std::size_t j = 0; j < ow; ++j) {
            const long s = static_cast<long>(j) + dc;
            out[j] = (s < 0 || s >= static_cast<long>(g.in_w)) ? T{0} : src[s];
          }
        }
      }
    }
  }
}

// Transposed layout: colsT[i*ow + j][(c*K + ki)*K + kj].
template <typename T>
void im2col_transposed(const ConvGeometry& g, const T* x, T* cols) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), kk = g.patch_size();
  const long pad = static_cast<long>(g.pad);
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      T* out = cols + (i * ow + j) * kk;
      for (std::size_t c = 0; c < g.in_channels; ++c) {
        const T* plane = x + c * g.in_h * g.in_w;
        for (std::size_t ki = 0; ki < g.kernel; ++ki) {
          const long r = static_cast<long>(i + ki * g.dilation) - pad;
          for (std::size_t kj = 0; kj < g.kernel; ++kj) {
            const long s = static_cast<long>(j + kj * g.dilation) - pad;
            *out++ = (r < 0 || r >= static_cast<long>(g.in_h) || s < 0 ||
                      s >= static_cast<long>(g.in_w))
                         ? T{0}
                         : plane[r * g.in_w + s];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* cols, T* x) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const long pad = static_cast<long>(g.pad);
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    T* plane = x + c * g.in_h * g.in_w;
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const T* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * oh * ow;
        const long dr = static_cast<long>(ki * g.dilation) - pad;
        const long dc = static_cast<long>(kj * g.dilation) - pad;
        for (std::size_t i = 0; i < oh; ++i) {
          const long r = static_cast<long>(i) + dr;
          if (r < 0 || r >= static_cast<long>(g.in_h)) continue;
          T* dst = plane + r * g.in_w;
          const T* src = row + i * ow;
          for (std::size_t j = 0; j < ow; ++j) {
            const long s = static_cast<long>(j) + dc;
            if (s >= 0 && s < static_cast<long>(g.in_w)) dst[s] += src[j];
          }
        }
      }
    }
  }
}

template <typename T>
inline void axpy(std::size_t n, T alpha, const T* __restrict x,
                 T* __restrict y) {
  for (std::size_t j = 0; j < n; ++j) y[j] += alpha * x[j];
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w,
                    const T* bias, T* y) {
  const std::size_t hw = g.out_h() * g.out_w(), kk = g.patch_size();
  const std::size_t in_stride = g.in_channels * g.in_h * g.in_w;
  const long batch = static_cast<long>(g.batch);
#pragma omp parallel
  {
    std::vector<T> cols(kk * hw);
#pragma omp for schedule(static)
    for (long b = 0; b < batch; ++b) {
      im2col(g, x + b * in_stride, cols.data());
      T* out = y + b * g.out_channels * hw;
      for (std::size_t o = 0; o < g.out_channels; ++o) {
        T* row = out + o * hw;
        std::fill(row, row + hw, bias ? bias[o] : T{0});
        const T* wrow = w + o * kk;
        for (std::size_t p = 0; p < kk; ++p) axpy(hw, wrow[p], cols.data() + p * hw, row);
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* dy, const T* w,
                           T* dx) {
  const std::size_t hw = g.out_h() * g.out_w(), kk = g.patch_size();
  const std::size_t in_stride = g.in_channels * g.in_h * g.in_w;
  const long batch = static_cast<long>(g.batch);
#pragma omp parallel
  {
    std::vector<T> dcols(kk * hw);
#pragma omp for schedule(static)
    for (long b = 0; b < batch; ++b) {
      std::fill(dcols.begin(), dcols.end(), T{0});
      const T* grad = dy + b * g.out_channels * hw;
      for (std::size_t p = 0; p < kk; ++p) {
        T* row = dcols.data() + p * hw;
        for (std::size_t o = 0; o < g.out_channels; ++o) axpy(hw, w[o * kk + p], grad + o * hw, row);
      }
      T* out = dx + b * in_stride;
      std::fill(out, out + in_stride, T{0});
      col2im_add(g, dcols.data(), out);
    }
  }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* x, const T* dy,
                            T* dw, T* dbias) {
  const std::size_t hw = g.out_h() * g.out_w(), kk = g.patch_size();
  const std::size_t in_stride = g.in_channels * g.in_h * g.in_w;
  const long out_c = static_cast<long>(g.out_channels);
  std::fill(dw, dw + g.out_channels * kk, T{0});
  if (dbias) std::fill(dbias, dbias + g.out_channels, T{0});
  std::vector<T> cols(hw * kk);
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col_transposed(g, x + b * in_stride, cols.data());
    const T* grad = dy + b * g.out_channels * hw;
#pragma omp parallel for schedule(static)
    for (long o = 0; o < out_c; ++o) {
      T* wrow = dw + o * kk;
      const T* grow = grad + o * hw;
      T bias_acc{0};
      for (std::size_t q = 0; q < hw; ++q) {
        axpy(kk, grow[q], cols.data() + q * kk, wrow);
        bias_acc += grow[q];
      }
      if (dbias) dbias[o] += bias_acc;
    }
  }
}

template <typename T>
void matmul(std::size_t m, std::size_t k, std::size_t n, const T* a,
            const T* b, T* c) {
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < rows; ++i) {
    T* out = c + i * n;
    std::fill(out, out + n, T{0});
    for (std::size_t p = 0; p < k; ++p) axpy(n, a[i * k + p], b + p * n, out);
  }
}

}  // namespace parallel

int max_threads() { return omp_get_max_threads(); }
void set_threads(int n) { omp_set_num_threads(std::max(1, n)); }

#define AGCL_INSTANTIATE(NS, T)                                                  \
  template void NS::conv2d_forward<T>(const ConvGeometry&, const T*, const T*, \
                                      const T*, T*);                           \
  template void NS::conv2d_backward_input<T>(const ConvGeometry&, const T*,    \
                                             const T*, T*);                    \
  template void NS::conv2d_backward_weight<T>(const ConvGeometry&, const T*,   \
                                              const T*, T*, T*);               \
  template void NS::matmul<T>(std::size_t, std::size_t, std::size_t, const T*, \
                              const T*, T*);

AGCL_INSTANTIATE(serial, float)
AGCL_INSTANTIATE(serial, double)
AGCL_INSTANTIATE(parallel, float)
AGCL_INSTANTIATE(parallel, double)

#undef AGCL_INSTANTIATE

}  // namespace agcl::kernels
