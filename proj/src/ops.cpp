// SPDX-License-Identifier: Apache-2.0
#include "voxadapt/ops.hpp"

#include <cmath>
#include <numeric>

#include "voxadapt/kernels.hpp"

namespace voxadapt::ops {
namespace {

template <typename T>
Tape<T>& tape_of(Var<T> a) {
  require(a.tape != nullptr, ErrorCode::kState, "variable is not attached to a tape");
  return *a.tape;
}

template <typename T>
void same_tape(Var<T> a, Var<T> b) {
  require(a.tape == b.tape, ErrorCode::kState, "variables live on different tapes");
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.data().data();
  const T* s = src.data().data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

template <typename T>
void check_row_vector(const Tensor<T>& v, std::size_t width, const char* what) {
  require(v.rank() == 2 && v.rows() == 1 && v.cols() == width, ErrorCode::kShapeMismatch,
          std::string(what) + ": expected [1x" + std::to_string(width) + "], got " +
              shape_string(v.shape()));
}

std::size_t count_total(std::span<const int> counts) {
  std::size_t total = 0;
  for (const int c : counts) {
    require(c >= 0, ErrorCode::kInvalidArgument, "negative duration");
    total += static_cast<std::size_t>(c);
  }
  return total;
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor<T> out = a.value();
  accumulate(out, b.value());
  return tape_of(a).record("add", std::move(out), {a, b}, [a, b, id = tape_of(a).size()](Tape<T>& t) {
    const Tensor<T>& g = t.grad(Var<T>{&t, id});
    if (t.requires_grad(a)) accumulate(t.grad(a), g);
    if (t.requires_grad(b)) accumulate(t.grad(b), g);
  });
}

template <typename T>
Var<T> add_row(Var<T> x, Var<T> r) {
  same_tape(x, r);
  const Tensor<T>& xv = x.value();
  require_rank2(xv, "add_row");
  check_row_vector(r.value(), xv.cols(), "add_row");
  Tensor<T> out = xv;
  const std::size_t n = xv.rows(), d = xv.cols();
  const T* rv = r.value().data().data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out(i, j) += rv[j];
  Tape<T>& t0 = tape_of(x);
  return t0.record("add_row", std::move(out), {x, r}, [x, r, n, d, id = t0.size()](Tape<T>& t) {
    const Tensor<T>& g = t.grad(Var<T>{&t, id});
    if (t.requires_grad(x)) accumulate(t.grad(x), g);
    if (t.requires_grad(r)) {
      Tensor<T>& gr = t.grad(r);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gr[j] += g(i, j);
    }
  });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  Tensor<T> out = x.value();
  for (T& v : out.storage()) v *= factor;
  Tape<T>& t0 = tape_of(x);
  return t0.record("scale", std::move(out), {x}, [x, factor, id = t0.size()](Tape<T>& t) {
    const Tensor<T>& g = t.grad(Var<T>{&t, id});
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tensor<T> out = x.value();
  for (T& v : out.storage()) v = v > T(0) ? v : T(0);
  Tape<T>& t0 = tape_of(x);
  return t0.record("relu", std::move(out), {x}, [x, id = t0.size()](Tape<T>& t) {
    const Var<T> self{&t, id};
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& y = t.value(self);
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (y[i] > T(0)) gx[i] += g[i];
  });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  same_tape(a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  require(av.cols() == bv.rows(), ErrorCode::kShapeMismatch,
          "matmul: " + shape_string(av.shape()) + " * " + shape_string(bv.shape()));
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor<T> out = Tensor<T>::matrix(m, n);
  kernels::gemm_nn<T>(av.data(), bv.data(), out.data(), m, k, n);
  Tape<T>& t0 = tape_of(a);
  return t0.record("matmul", std::move(out), {a, b}, [a, b, m, k, n, id = t0.size()](Tape<T>& t) {
    const Tensor<T>& g = t.grad(Var<T>{&t, id});
    if (t.requires_grad(a)) kernels::gemm_nt<T>(g.data(), t.value(b).data(), t.grad(a).data(), m, n, k);
    if (t.requires_grad(b)) kernels::gemm_tn<T>(t.value(a).data(), g.data(), t.grad(b).data(), k, m, n);
  });
}

template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  same_tape(a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  require_rank2(av, "matmul_nt");
  require_rank2(bv, "matmul_nt");
  require(av.cols() == bv.cols(), ErrorCode::kShapeMismatch,
          "matmul_nt: " + shape_string(av.shape()) + " * " + shape_string(bv.shape()) + "^T");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  Tensor<T> out = Tensor<T>::matrix(m, n);
  kernels::gemm_nt<T>(av.data(), bv.data(), out.data(), m, k, n);
  Tape<T>& t0 = tape_of(a);
  return t0.record("matmul_nt", std::move(out), {a, b}, [a, b, m, k, n, id = t0.size()](Tape<T>& t) {
    const Tensor<T>& g = t.grad(Var<T>{&t, id});
    // out = a b^T: da = g b, db = g^T a
    if (t.requires_grad(a)) kernels::gemm_nn<T>(g.data(), t.value(b).data(), t.grad(a).data(), m, n, k);
    if (t.requires_grad(b)) kernels::gemm_tn<T>(g.data(), t.value(a).data(), t.grad(b).data(), n, m, k);
  });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, std::optional<Var<T>> b) {
  Var<T> y = matmul(x, w);
  return b ? add_row(y, *b) : y;
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
  same_tape(x, gamma);
  same_tape(x, beta);
  const Tensor<T>& xv = x.value();
  require_rank2(xv, "layer_norm");
  const std::size_t n = xv.rows(), h = xv.cols();
  require(h >= 1, ErrorCode::kShapeMismatch, "layer_norm: empty feature dimension");
  require(eps >= T(0), ErrorCode::kInvalidArgument, "layer_norm: eps must be non-negative");
  check_row_vector(gamma.value(), h, "layer_norm gamma");
  check_row_vector(beta.value(), h, "layer_norm beta");
  require_finite(xv, "layer_norm input");

  Tensor<T> xhat = Tensor<T>::matrix(n, h);
  Tensor<T> inv_sigma = Tensor<T>::matrix(n, 1);
  Tensor<T> out = Tensor<T>::matrix(n, h);
  const T* gv = gamma.value().data().data();
  const T* bv = beta.value().data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = xv.row_span(i);
    T mean = T(0);
    for (const T v : row) mean += v;
    mean /= static_cast<T>(h);
    T var = T(0);
    for (const T v : row) var += (v - mean) * (v - mean);
    var /= static_cast<T>(h);
    const T inv = T(1) / std::sqrt(var + eps);
    inv_sigma[i] = inv;
    for (std::size_t j = 0; j < h; ++j) {
      const T xh = (row[j] - mean) * inv;
      xhat(i, j) = xh;
      out(i, j) = gv[j] * xh + bv[j];
    }
  }
  Tape<T>& t0 = tape_of(x);
  return t0.record(
      "layer_norm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, n, h, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma),
       id = t0.size()](Tape<T>& t) {
        const Tensor<T>& g = t.grad(Var<T>{&t, id});
        if (t.requires_grad(gamma)) {
          Tensor<T>& gg = t.grad(gamma);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < h; ++j) gg[j] += g(i, j) * xhat(i, j);
        }
        if (t.requires_grad(beta)) {
          Tensor<T>& gb = t.grad(beta);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < h; ++j) gb[j] += g(i, j);
        }
        if (t.requires_grad(x)) {
          Tensor<T>& gx = t.grad(x);
          const Tensor<T>& gv = t.value(gamma);
          for (std::size_t i = 0; i < n; ++i) {
            T mean_d = T(0), mean_dx = T(0);
            for (std::size_t j = 0; j < h; ++j) {
              const T d = g(i, j) * gv[j];
              mean_d += d;
              mean_dx += d * xhat(i, j);
            }
            mean_d /= static_cast<T>(h);
            mean_dx /= static_cast<T>(h);
            for (std::size_t j = 0; j < h; ++j) {
              const T d = g(i, j) * gv[j];
              gx(i, j) += inv_sigma[i] * (d - mean_d - xhat(i, j) * mean_dx);
            }
          }
        }
      });
}

template <typename T>
ConditionalScaleBias<T> conditional_scale_bias(Var<T> e, Var<T> w_gamma, Var<T> w_beta) {
  const Tensor<T>& ev = e.value();
  require(ev.rank() == 2 && ev.rows() == 1, ErrorCode::kShapeMismatch,
          "conditional layer norm: condition must be a row vector, got " + shape_string(ev.shape()));
  return {matmul(e, w_gamma), matmul(e, w_beta)};
}

template <typename T>
Var<T> conditional_layer_norm(Var<T> x, Var<T> e, Var<T> w_gamma, Var<T> w_beta, T eps) {
  const auto [gamma, beta] = conditional_scale_bias(e, w_gamma, w_beta);
  return layer_norm(x, gamma, beta, eps);
}

template <typename T>
Var<T> conv1d(Var<T> x, Var<T> kernel, std::optional<Var<T>> bias, std::size_t stride) {
  same_tape(x, kernel);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& kv = kernel.value();
  require_rank2(xv, "conv1d");
  require(kv.rank() == 3, ErrorCode::kShapeMismatch,
          "conv1d: kernel must be [d_out x d_in x k], got " + shape_string(kv.shape()));
  const std::size_t len = xv.rows(), d_in = xv.cols();
  const std::size_t d_out = kv.dim(0), k = kv.dim(2);
  require(len > 0, ErrorCode::kInvalidArgument, "conv1d: empty input sequence");
  require(stride >= 1, ErrorCode::kInvalidArgument, "conv1d: stride must be >= 1");
  require(k % 2 == 1, ErrorCode::kInvalidArgument, "conv1d: kernel width must be odd");
  require(kv.dim(1) == d_in, ErrorCode::kShapeMismatch,
          "conv1d: kernel " + shape_string(kv.shape()) + " vs input " + shape_string(xv.shape()));
  const std::size_t out_len = kernels::conv_out_len(len, stride);
  const std::size_t width = d_in * k;

  Tensor<T> cols = Tensor<T>::matrix(out_len, width);
  kernels::im2col<T>(xv.data(), cols.data(), len, d_in, k, stride, out_len);
  Tensor<T> out = Tensor<T>::matrix(out_len, d_out);
  kernels::gemm_nt<T>(cols.data(), kv.data(), out.data(), out_len, width, d_out);
  std::vector<Var<T>> inputs{x, kernel};
  if (bias) {
    same_tape(x, *bias);
    check_row_vector(bias->value(), d_out, "conv1d bias");
    const T* bv = bias->value().data().data();
    for (std::size_t t = 0; t < out_len; ++t)
      for (std::size_t o = 0; o < d_out; ++o) out(t, o) += bv[o];
    inputs.push_back(*bias);
  }
  Tape<T>& t0 = tape_of(x);
  return t0.record(
      "conv1d", std::move(out), inputs,
      [x, kernel, bias, len, d_in, d_out, k, stride, out_len, width, cols = std::move(cols),
       id = t0.size()](Tape<T>& t) {
        const Tensor<T>& g = t.grad(Var<T>{&t, id});
        if (t.requires_grad(kernel))
          kernels::gemm_tn<T>(g.data(), cols.data(), t.grad(kernel).data(), d_out, out_len, width);
        if (bias && t.requires_grad(*bias)) {
          Tensor<T>& gb = t.grad(*bias);
          for (std::size_t r = 0; r < out_len; ++r)
            for (std::size_t o = 0; o < d_out; ++o) gb[o] += g(r, o);
        }
        if (t.requires_grad(x)) {
          Tensor<T> dcols = Tensor<T>::matrix(out_len, width);
          kernels::gemm_nn<T>(g.data(), t.value(kernel).data(), dcols.data(), out_len, d_out, width);
          kernels::col2im<T>(dcols.data(), t.grad(x).data(), len, d_in, k, stride, out_len);
        }
      });
}

template <typename T>
Var<T> softmax_rows(Var<T> x) {
  const Tensor<T>& xv = x.value();
  require_rank2(xv, "softmax_rows");
  const std::size_t n = xv.rows(), d = xv.cols();
  Tensor<T> out = Tensor<T>::matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = xv.row_span(i);
    T mx = row[0];
    for (const T v : row) mx = std::max(mx, v);
    T sum = T(0);
    for (std::size_t j = 0; j < d; ++j) sum += (out(i, j) = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < d; ++j) out(i, j) /= sum;
  }
  Tape<T>& t0 = tape_of(x);
  return t0.record("softmax", std::move(out), {x}, [x, n, d, id = t0.size()](Tape<T>& t) {
    const Var<T> self{&t, id};
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& y = t.value(self);
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < n; ++i) {
      T dot = T(0);
      for (std::size_t j = 0; j < d; ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < d; ++j) gx(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t count) {
  const Tensor<T>& xv = x.value();
  require_rank2(xv, "slice_cols");
  require(begin + count <= xv.cols(), ErrorCode::kOutOfRange, "slice_cols out of range");
  const std::size_t n = xv.rows();
  Tensor<T> out = Tensor<T>::matrix(n, count);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = xv(i, begin + j);
  Tape<T>& t0 = tape_of(x);
  return t0.record("slice_cols", std::move(out), {x}, [x, begin, count, n, id = t0.size()](Tape<T>& t) {
    const Tensor<T>& g = t.grad(Var<T>{&t, id});
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < count; ++j) gx(i, begin + j) += g(i, j);
  });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), ErrorCode::kInvalidArgument, "concat_cols of nothing");
  const std::size_t n = parts.front().rows();
  std::size_t width = 0;
  for (const Var<T>& p : parts) {
    same_tape(parts.front(), p);
    require(p.value().rank() == 2 && p.rows() == n, ErrorCode::kShapeMismatch,
            "concat_cols: row count mismatch");
    width += p.cols();
  }
  Tensor<T> out = Tensor<T>::matrix(n, width);
  std::size_t off = 0;
  for (const Var<T>& p : parts) {
    const Tensor<T>& pv = p.value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < pv.cols(); ++j) out(i, off + j) = pv(i, j);
    off += pv.cols();
  }
  Tape<T>& t0 = tape_of(parts.front());
  return t0.record("concat_cols", std::move(out), parts, [parts, n, id = t0.size()](Tape<T>& t) {
    const Tensor<T>& g = t.grad(Var<T>{&t, id});
    std::size_t off = 0;
    for (const Var<T>& p : parts) {
      const std::size_t c = t.value(p).cols();
      if (t.requires_grad(p)) {
        Tensor<T>& gp = t.grad(p);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j) gp(i, j) += g(i, off + j);
      }
      off += c;
    }
  });
}

template <typename T>
Var<T> attention_weights(Var<T> q, Var<T> k) {
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(q.cols()));
  return softmax_rows(scale(matmul_nt(q, k), inv_sqrt_d));
}

template <typename T>
Var<T> multi_head_attention(Var<T> x, const AttentionWeights<T>& w, std::size_t n_heads) {
  const std::size_t h = x.cols();
  require(n_heads >= 1 && h % n_heads == 0, ErrorCode::kInvalidArgument,
          "attention: hidden size " + std::to_string(h) + " not divisible by " +
              std::to_string(n_heads) + " heads");
  const Var<T> q = linear(x, w.w_q, std::optional<Var<T>>(w.b_q));
  const Var<T> k = linear(x, w.w_k, std::optional<Var<T>>(w.b_k));
  const Var<T> v = linear(x, w.w_v, std::optional<Var<T>>(w.b_v));
  const std::size_t dh = h / n_heads;
  std::vector<Var<T>> heads;
  heads.reserve(n_heads);
  for (std::size_t i = 0; i < n_heads; ++i) {
    const Var<T> a = attention_weights(slice_cols(q, i * dh, dh), slice_cols(k, i * dh, dh));
    heads.push_back(matmul(a, slice_cols(v, i * dh, dh)));
  }
  const Var<T> merged = n_heads == 1 ? heads.front() : concat_cols(heads);
  return linear(merged, w.w_o, std::optional<Var<T>>(w.b_o));
}

template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const int> ids) {
  const Tensor<T>& tv = table.value();
  require_rank2(tv, "gather_rows");
  require(!ids.empty(), ErrorCode::kInvalidArgument, "gather_rows: empty id sequence");
  const std::size_t d = tv.cols();
  std::vector<int> idv(ids.begin(), ids.end());
  Tensor<T> out = Tensor<T>::matrix(idv.size(), d);
  for (std::size_t i = 0; i < idv.size(); ++i) {
    require(idv[i] >= 0 && static_cast<std::size_t>(idv[i]) < tv.rows(), ErrorCode::kOutOfRange,
            "id " + std::to_string(idv[i]) + " outside table of " + std::to_string(tv.rows()) + " rows");
    const auto src = tv.row_span(static_cast<std::size_t>(idv[i]));
    std::copy(src.begin(), src.end(), out.row_span(i).begin());
  }
  Tape<T>& t0 = tape_of(table);
  return t0.record("gather_rows", std::move(out), {table}, [table, idv, d, id = t0.size()](Tape<T>& t) {
    const Tensor<T>& g = t.grad(Var<T>{&t, id});
    Tensor<T>& gt = t.grad(table);
    for (std::size_t i = 0; i < idv.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gt(static_cast<std::size_t>(idv[i]), j) += g(i, j);
  });
}

template <typename T>
Var<T> repeat_rows(Var<T> x, std::span<const int> counts) {
  const Tensor<T>& xv = x.value();
  require_rank2(xv, "repeat_rows");
  require(counts.size() == xv.rows(), ErrorCode::kShapeMismatch,
          "length regulation: " + std::to_string(counts.size()) + " durations for " +
              std::to_string(xv.rows()) + " rows");
  const std::size_t total = count_total(counts);
  require(total >= 1, ErrorCode::kInvalidArgument, "length regulation: durations sum to zero");
  const std::size_t d = xv.cols();
  std::vector<int> cv(counts.begin(), counts.end());
  Tensor<T> out = Tensor<T>::matrix(total, d);
  std::size_t r = 0;
  for (std::size_t i = 0; i < cv.size(); ++i)
    for (int c = 0; c < cv[i]; ++c, ++r) {
      const auto src = xv.row_span(i);
      std::copy(src.begin(), src.end(), out.row_span(r).begin());
    }
  Tape<T>& t0 = tape_of(x);
  return t0.record("repeat_rows", std::move(out), {x}, [x, cv, d, id = t0.size()](Tape<T>& t) {
    const Tensor<T>& g = t.grad(Var<T>{&t, id});
    Tensor<T>& gx = t.grad(x);
    std::size_t r = 0;
    for (std::size_t i = 0; i < cv.size(); ++i)
      for (int c = 0; c < cv[i]; ++c, ++r)
        for (std::size_t j = 0; j < d; ++j) gx(i, j) += g(r, j);
  });
}

template <typename T>
Var<T> segment_mean(Var<T> x, std::span<const int> counts) {
  const Tensor<T>& xv = x.value();
  require_rank2(xv, "segment_mean");
  const std::size_t total = count_total(counts);
  require(total == xv.rows(), ErrorCode::kShapeMismatch,
          "phoneme averaging: durations sum to " + std::to_string(total) + " but there are " +
              std::to_string(xv.rows()) + " frames");
  const std::size_t d = xv.cols();
  std::vector<int> cv(counts.begin(), counts.end());
  Tensor<T> out = Tensor<T>::matrix(cv.size(), d);
  std::size_t r = 0;
  // Mean taken relative to the span's first row, so a constant span
  // averages to exactly that row.
  for (std::size_t i = 0; i < cv.size(); ++i) {
    if (cv[i] == 0) continue;
    const std::size_t first = r;
    for (int c = 0; c < cv[i]; ++c, ++r)
      for (std::size_t j = 0; j < d; ++j) out(i, j) += xv(r, j) - xv(first, j);
    for (std::size_t j = 0; j < d; ++j) out(i, j) = xv(first, j) + out(i, j) / static_cast<T>(cv[i]);
  }
  Tape<T>& t0 = tape_of(x);
  return t0.record("segment_mean", std::move(out), {x}, [x, cv, d, id = t0.size()](Tape<T>& t) {
    const Tensor<T>& g = t.grad(Var<T>{&t, id});
    Tensor<T>& gx = t.grad(x);
    std::size_t r = 0;
    for (std::size_t i = 0; i < cv.size(); ++i) {
      const T w = cv[i] > 0 ? T(1) / static_cast<T>(cv[i]) : T(0);
      for (int c = 0; c < cv[i]; ++c, ++r)
        for (std::size_t j = 0; j < d; ++j) gx(r, j) += w * g(i, j);
    }
  });
}

template <typename T>
Var<T> mean_rows(Var<T> x) {
  const Tensor<T>& xv = x.value();
  require_rank2(xv, "mean_rows");
  const std::size_t n = xv.rows(), d = xv.cols();
  require(n >= 1, ErrorCode::kInvalidArgument, "mean pooling over zero frames");
  Tensor<T> out = Tensor<T>::matrix(1, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += xv(i, j);
  for (std::size_t j = 0; j < d; ++j) out[j] /= static_cast<T>(n);
  Tape<T>& t0 = tape_of(x);
  return t0.record("mean_rows", std::move(out), {x}, [x, n, d, id = t0.size()](Tape<T>& t) {
    const Tensor<T>& g = t.grad(Var<T>{&t, id});
    Tensor<T>& gx = t.grad(x);
    const T w = T(1) / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) gx(i, j) += w * g[j];
  });
}

template <typename T>
Var<T> mse(Var<T> a, Var<T> b) {
  same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mse");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  require(av.size() > 0, ErrorCode::kInvalidArgument, "mse of empty tensors");
  T acc = T(0);
  for (std::size_t i = 0; i < av.size(); ++i) acc += (av[i] - bv[i]) * (av[i] - bv[i]);
  const T inv_n = T(1) / static_cast<T>(av.size());
  Tensor<T> out = Tensor<T>::matrix(1, 1, acc * inv_n);
  Tape<T>& t0 = tape_of(a);
  return t0.record("mse", std::move(out), {a, b}, [a, b, inv_n, id = t0.size()](Tape<T>& t) {
    const T g = t.grad(Var<T>{&t, id})[0];
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    const T c = T(2) * inv_n * g;
    if (t.requires_grad(a)) {
      Tensor<T>& ga = t.grad(a);
      for (std::size_t i = 0; i < av.size(); ++i) ga[i] += c * (av[i] - bv[i]);
    }
    if (t.requires_grad(b)) {
      Tensor<T>& gb = t.grad(b);
      for (std::size_t i = 0; i < av.size(); ++i) gb[i] -= c * (av[i] - bv[i]);
    }
  });
}

template <typename T>
Var<T> weighted_sum(Var<T> x, const Tensor<T>& weights) {
  require(weights.size() == x.value().size(), ErrorCode::kShapeMismatch, "weighted_sum: size mismatch");
  const Tensor<T>& xv = x.value();
  T acc = T(0);
  for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i] * weights[i];
  Tape<T>& t0 = tape_of(x);
  return t0.record("weighted_sum", Tensor<T>::matrix(1, 1, acc), {x},
                   [x, weights, id = t0.size()](Tape<T>& t) {
                     const T g = t.grad(Var<T>{&t, id})[0];
                     Tensor<T>& gx = t.grad(x);
                     for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * weights[i];
                   });
}

template <typename T>
Var<T> dropout(Var<T> x, T rate, Rng* rng) {
  if (rng == nullptr || rate <= T(0)) return x;
  require(rate < T(1), ErrorCode::kInvalidArgument, "dropout rate must be below 1");
  const Tensor<T>& xv = x.value();
  Tensor<T> mask(xv.shape());
  const T keep_scale = T(1) / (T(1) - rate);
  for (T& m : mask.storage()) m = rng->uniform() >= static_cast<double>(rate) ? keep_scale : T(0);
  Tensor<T> out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  Tape<T>& t0 = tape_of(x);
  return t0.record("dropout", std::move(out), {x}, [x, mask = std::move(mask), id = t0.size()](Tape<T>& t) {
    const Tensor<T>& g = t.grad(Var<T>{&t, id});
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

#define VOXADAPT_INSTANTIATE(T)                                                                  \
  template Var<T> add<T>(Var<T>, Var<T>);                                                        \
  template Var<T> add_row<T>(Var<T>, Var<T>);                                                    \
  template Var<T> scale<T>(Var<T>, T);                                                           \
  template Var<T> relu<T>(Var<T>);                                                               \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                                     \
  template Var<T> matmul_nt<T>(Var<T>, Var<T>);                                                  \
  template Var<T> linear<T>(Var<T>, Var<T>, std::optional<Var<T>>);                              \
  template Var<T> layer_norm<T>(Var<T>, Var<T>, Var<T>, T);                                      \
  template ConditionalScaleBias<T> conditional_scale_bias<T>(Var<T>, Var<T>, Var<T>);            \
  template Var<T> conditional_layer_norm<T>(Var<T>, Var<T>, Var<T>, Var<T>, T);                  \
  template Var<T> conv1d<T>(Var<T>, Var<T>, std::optional<Var<T>>, std::size_t);                 \
  template Var<T> softmax_rows<T>(Var<T>);                                                       \
  template Var<T> slice_cols<T>(Var<T>, std::size_t, std::size_t);                               \
  template Var<T> concat_cols<T>(const std::vector<Var<T>>&);                                    \
  template Var<T> attention_weights<T>(Var<T>, Var<T>);                                          \
  template Var<T> multi_head_attention<T>(Var<T>, const AttentionWeights<T>&, std::size_t);      \
  template Var<T> gather_rows<T>(Var<T>, std::span<const int>);                                  \
  template Var<T> repeat_rows<T>(Var<T>, std::span<const int>);                                  \
  template Var<T> segment_mean<T>(Var<T>, std::span<const int>);                                 \
  template Var<T> mean_rows<T>(Var<T>);                                                          \
  template Var<T> mse<T>(Var<T>, Var<T>);                                                        \
  template Var<T> weighted_sum<T>(Var<T>, const Tensor<T>&);                                     \
  template Var<T> dropout<T>(Var<T>, T, Rng*);

VOXADAPT_INSTANTIATE(float)
VOXADAPT_INSTANTIATE(double)
#undef VOXADAPT_INSTANTIATE

}  // namespace voxadapt::ops
