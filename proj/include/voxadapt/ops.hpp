// SPDX-License-Identifier: Apache-2.0
//
// Differentiable ops over rank-2 tape values. Row vectors are 1 x n.
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "voxadapt/autodiff.hpp"
#include "voxadapt/random.hpp"

namespace voxadapt::ops {

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

/// x[n x d] + r[1 x d] broadcast over rows.
template <typename T>
Var<T> add_row(Var<T> x, Var<T> r);

template <typename T>
Var<T> scale(Var<T> x, T factor);

template <typename T>
Var<T> relu(Var<T> x);

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);

/// a[m x k] * b[n x k]^T
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b);

/// x * w + b (bias optional, 1 x d_out).
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, std::optional<Var<T>> b = std::nullopt);

/// Row-wise layer norm: gamma * (x - mean) / sqrt(var + eps) + beta with the
/// population variance; gamma and beta are 1 x h and shared by every row.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps);

/// Scale and bias produced from a condition vector: e * w_gamma, e * w_beta.
template <typename T>
struct ConditionalScaleBias {
  Var<T> gamma;
  Var<T> beta;
};

template <typename T>
ConditionalScaleBias<T> conditional_scale_bias(Var<T> e, Var<T> w_gamma, Var<T> w_beta);

/// layer_norm(x, e * w_gamma, e * w_beta, eps).
template <typename T>
Var<T> conditional_layer_norm(Var<T> x, Var<T> e, Var<T> w_gamma, Var<T> w_beta, T eps);

/// Same-padded 1D convolution over time. x is [len x d_in], kernel is
/// [d_out x d_in x k] with k odd; output has ceil(len / stride) frames.
template <typename T>
Var<T> conv1d(Var<T> x, Var<T> kernel, std::optional<Var<T>> bias, std::size_t stride);

template <typename T>
Var<T> softmax_rows(Var<T> x);

template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t count);

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts);

/// softmax(q k^T / sqrt(d)) for one head.
template <typename T>
Var<T> attention_weights(Var<T> q, Var<T> k);

template <typename T>
struct AttentionWeights {
  Var<T> w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
};

/// Unmasked multi-head self-attention over the rows of x.
template <typename T>
Var<T> multi_head_attention(Var<T> x, const AttentionWeights<T>& w, std::size_t n_heads);

/// Rows of table selected by ids (embedding lookup).
template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const int> ids);

/// Row i repeated counts[i] times (length regulation).
template <typename T>
Var<T> repeat_rows(Var<T> x, std::span<const int> counts);

/// Mean of consecutive row spans of the given lengths; an empty span yields a
/// zero row. counts must sum to the number of rows.
template <typename T>
Var<T> segment_mean(Var<T> x, std::span<const int> counts);

/// Column means, 1 x d.
template <typename T>
Var<T> mean_rows(Var<T> x);

/// Mean squared difference as a 1 x 1 value.
template <typename T>
Var<T> mse(Var<T> a, Var<T> b);

/// sum(x * weights) as a 1 x 1 value.
template <typename T>
Var<T> weighted_sum(Var<T> x, const Tensor<T>& weights);

/// Inverted dropout; identity when rate is 0 or rng is null.
template <typename T>
Var<T> dropout(Var<T> x, T rate, Rng* rng);

}  // namespace voxadapt::ops
