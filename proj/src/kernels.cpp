// SPDX-License-Identifier: Apache-2.0
#include "voxadapt/kernels.hpp"

namespace voxadapt::kernels {

template <typename T>
void gemm_nn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n) {
  const T* __restrict pa = a.data();
  const T* __restrict pb = b.data();
  T* __restrict pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = pa[i * k + p];
      if (av == T(0)) continue;
      const T* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n) {
  const T* __restrict pa = a.data();
  const T* __restrict pb = b.data();
  T* __restrict pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = pb + j * k;
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      pc[i * n + j] += acc;
    }
  }
}

template <typename T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n) {
  const T* __restrict pa = a.data();
  const T* __restrict pb = b.data();
  T* __restrict pc = c.data();
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = pa + p * m;
    const T* brow = pb + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      if (av == T(0)) continue;
      T* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void im2col(std::span<const T> x, std::span<T> cols, std::size_t len, std::size_t d_in,
            std::size_t k, std::size_t stride, std::size_t out_len) {
  const auto pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
  const std::size_t width = d_in * k;
  for (std::size_t t = 0; t < out_len; ++t) {
    T* row = cols.data() + t * width;
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + j) - pad;
      const bool inside = src >= 0 && src < static_cast<std::ptrdiff_t>(len);
      for (std::size_t i = 0; i < d_in; ++i)
        row[i * k + j] = inside ? x[static_cast<std::size_t>(src) * d_in + i] : T(0);
    }
  }
}

template <typename T>
void col2im(std::span<const T> dcols, std::span<T> dx, std::size_t len, std::size_t d_in,
            std::size_t k, std::size_t stride, std::size_t out_len) {
  const auto pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
  const std::size_t width = d_in * k;
  for (std::size_t t = 0; t < out_len; ++t) {
    const T* row = dcols.data() + t * width;
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + j) - pad;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
      T* dst = dx.data() + static_cast<std::size_t>(src) * d_in;
      for (std::size_t i = 0; i < d_in; ++i) dst[i] += row[i * k + j];
    }
  }
}

#define VOXADAPT_INSTANTIATE(T)                                                                  \
  template void gemm_nn<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t,   \
                           std::size_t, std::size_t);                                            \
  template void gemm_nt<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t,   \
                           std::size_t, std::size_t);                                            \
  template void gemm_tn<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t,   \
                           std::size_t, std::size_t);                                            \
  template void im2col<T>(std::span<const T>, std::span<T>, std::size_t, std::size_t,           \
                          std::size_t, std::size_t, std::size_t);                               \
  template void col2im<T>(std::span<const T>, std::span<T>, std::size_t, std::size_t,           \
                          std::size_t, std::size_t, std::size_t);

VOXADAPT_INSTANTIATE(float)
VOXADAPT_INSTANTIATE(double)
#undef VOXADAPT_INSTANTIATE

}  // namespace voxadapt::kernels
