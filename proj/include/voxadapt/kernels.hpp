// SPDX-License-Identifier: Apache-2.0
//
// Raw dense kernels over row-major buffers. These carry no graph state; the
// differentiable ops in ops.hpp are thin wrappers recording their backward.
#pragma once

#include <cstddef>
#include <span>

namespace voxadapt::kernels {

// c[m x n] += a[m x k] * b[k x n]
template <typename T>
void gemm_nn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n);

// c[m x n] += a[m x k] * b[n x k]^T
template <typename T>
void gemm_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n);

// c[m x n] += a[k x m]^T * b[k x n]
template <typename T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n);

/// Lays out zero-padded receptive fields of x[len x d_in] as rows of
/// cols[out_len x (d_in * k)], column index i * k + j for input channel i and
/// tap j. Padding is (k - 1) / 2 on the left.
template <typename T>
void im2col(std::span<const T> x, std::span<T> cols, std::size_t len, std::size_t d_in,
            std::size_t k, std::size_t stride, std::size_t out_len);

/// Adjoint of im2col: accumulates dcols back onto dx.
template <typename T>
void col2im(std::span<const T> dcols, std::span<T> dx, std::size_t len, std::size_t d_in,
            std::size_t k, std::size_t stride, std::size_t out_len);

inline std::size_t conv_out_len(std::size_t len, std::size_t stride) {
  return (len + stride - 1) / stride;
}

}  // namespace voxadapt::kernels
