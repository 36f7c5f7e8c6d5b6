#pragma once

#include <cstddef>

namespace agcl::kernels {

/// Stride-1 2D convolution over an NCHW batch with explicit zero padding and
/// dilation. Weights are laid out [out_channels, in_channels, kernel, kernel].
struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t pad = 0;
  std::size_t dilation = 1;

  std::size_t span() const { return dilation * (kernel - 1); }
  std::size_t out_h() const { return in_h + 2 * pad - span(); }
  std::size_t out_w() const { return in_w + 2 * pad - span(); }
  std::size_t patch_size() const { return in_channels * kernel * kernel; }
  bool valid() const {
    return kernel >= 1 && dilation >= 1 && in_h + 2 * pad > span() &&
           in_w + 2 * pad > span();
  }
};

// Every kernel overwrites its outputs. `bias` / `dbias` may be null.

/// Direct loop nests. Slow; used as the reference in tests and benchmarks.
namespace serial {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w,
                    const T* bias, T* y);
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* dy, const T* w,
                           T* dx);
template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* x, const T* dy,
                            T* dw, T* dbias);
/// c[m,n] = a[m,k] * b[k,n]
template <typename T>
void matmul(std::size_t m, std::size_t k, std::size_t n, const T* a,
            const T* b, T* c);

}  // namespace serial

/// im2col + row-streaming GEMM, parallelised with OpenMP over independent
/// output rows or batch items. Every output element is reduced in a fixed
/// order, so results do not depend on the thread count.
namespace parallel {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w,
                    const T* bias, T* y);
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* dy, const T* w,
                           T* dx);
template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* x, const T* dy,
                            T* dw, T* dbias);
template <typename T>
void matmul(std::size_t m, std::size_t k, std::size_t n, const T* a,
            const T* b, T* c);

}  // namespace parallel

/// Threads used by the parallel kernels (OpenMP runtime setting).
int max_threads();
void set_threads(int n);

}  // namespace agcl::kernels
