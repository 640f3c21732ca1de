#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "rsnmt/detail/gemm.hpp"
#include "rsnmt/tensor.hpp"

// Autodiff ops. Every op is a free function taking the tape as first
// argument; a null tape runs forward-only (inference). Backward closures
// accumulate additively into input grads and treat a missing output grad as
// zero.

namespace rsnmt::ops {

template <class T>
bool tracing(Tape<T>* tape, bool any_input_grad) {
  return tape != nullptr && any_input_grad;
}

// ---------------------------------------------------------------- elementwise

template <class T>
TensorPtr<T> add(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  if (a->shape != b->shape) {
    throw ShapeError("add: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  }
  auto out = zeros<T>(a->shape);
  for (size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] + b->data[i];
  if (tracing(tape, a->requires_grad || b->requires_grad)) {
    out->requires_grad = true;
    tape->record(
        [a, b, out] {
          if (out->grad.empty()) return;
          if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
          }
          if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < out->grad.size(); ++i) b->grad[i] += out->grad[i];
          }
        },
        out.get());
  }
  return out;
}

// x[..., d] + bias[d]
template <class T>
TensorPtr<T> add_bias(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& bias) {
  int64_t d = x->dim(-1);
  if (bias->rank() != 1 || bias->dim(0) != d) {
    throw ShapeError("add_bias: bias " + shape_str(bias->shape) + " does not match last dim of " +
                     shape_str(x->shape));
  }
  auto out = zeros<T>(x->shape);
  int64_t rows = x->numel() / d;
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t j = 0; j < d; ++j) {
      out->data[static_cast<size_t>(r * d + j)] =
          x->data[static_cast<size_t>(r * d + j)] + bias->data[static_cast<size_t>(j)];
    }
  }
  if (tracing(tape, x->requires_grad || bias->requires_grad)) {
    out->requires_grad = true;
    tape->record(
        [x, bias, out, rows, d] {
          if (out->grad.empty()) return;
          if (x->requires_grad) {
            x->ensure_grad();
            for (size_t i = 0; i < out->grad.size(); ++i) x->grad[i] += out->grad[i];
          }
          if (bias->requires_grad) {
            bias->ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
              for (int64_t j = 0; j < d; ++j)
                bias->grad[static_cast<size_t>(j)] += out->grad[static_cast<size_t>(r * d + j)];
          }
        },
        out.get());
  }
  return out;
}

template <class T>
TensorPtr<T> mul(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  if (a->shape != b->shape) {
    throw ShapeError("mul: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  }
  auto out = zeros<T>(a->shape);
  for (size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] * b->data[i];
  if (tracing(tape, a->requires_grad || b->requires_grad)) {
    out->requires_grad = true;
    tape->record(
        [a, b, out] {
          if (out->grad.empty()) return;
          if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i] * b->data[i];
          }
          if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < out->grad.size(); ++i) b->grad[i] += out->grad[i] * a->data[i];
          }
        },
        out.get());
  }
  return out;
}

template <class T>
TensorPtr<T> scale(Tape<T>* tape, const TensorPtr<T>& x, T c) {
  auto out = zeros<T>(x->shape);
  for (size_t i = 0; i < out->data.size(); ++i) out->data[i] = x->data[i] * c;
  if (tracing(tape, x->requires_grad)) {
    out->requires_grad = true;
    tape->record(
        [x, out, c] {
          if (out->grad.empty()) return;
          x->ensure_grad();
          for (size_t i = 0; i < out->grad.size(); ++i) x->grad[i] += out->grad[i] * c;
        },
        out.get());
  }
  return out;
}

template <class T>
TensorPtr<T> relu(Tape<T>* tape, const TensorPtr<T>& x) {
  auto out = zeros<T>(x->shape);
  for (size_t i = 0; i < out->data.size(); ++i) out->data[i] = x->data[i] > T(0) ? x->data[i] : T(0);
  if (tracing(tape, x->requires_grad)) {
    out->requires_grad = true;
    tape->record(
        [x, out] {
          if (out->grad.empty()) return;
          x->ensure_grad();
          for (size_t i = 0; i < out->grad.size(); ++i)
            if (x->data[i] > T(0)) x->grad[i] += out->grad[i];
        },
        out.get());
  }
  return out;
}

template <class T>
TensorPtr<T> sum(Tape<T>* tape, const TensorPtr<T>& x) {
  T acc = 0;
  for (T v : x->data) acc += v;
  auto out = tensor<T>({1}, {acc});
  if (tracing(tape, x->requires_grad)) {
    out->requires_grad = true;
    tape->record(
        [x, out] {
          if (out->grad.empty()) return;
          x->ensure_grad();
          for (size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += out->grad[0];
        },
        out.get());
  }
  return out;
}

// Same data, new shape (row-major copy).
template <class T>
TensorPtr<T> reshape(Tape<T>* tape, const TensorPtr<T>& x, std::vector<int64_t> new_shape) {
  if (Tensor<T>::numel_of(new_shape) != x->numel()) {
    throw ShapeError("reshape: " + shape_str(x->shape) + " to " + shape_str(new_shape));
  }
  auto out = tensor<T>(std::move(new_shape), x->data);
  if (tracing(tape, x->requires_grad)) {
    out->requires_grad = true;
    tape->record(
        [x, out] {
          if (out->grad.empty()) return;
          x->ensure_grad();
          for (size_t i = 0; i < out->grad.size(); ++i) x->grad[i] += out->grad[i];
        },
        out.get());
  }
  return out;
}

// --------------------------------------------------------------- linear maps

// Strict 2D matrix product a[m x k] * b[k x n].
template <class T>
TensorPtr<T> matmul(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  if (a->rank() != 2 || b->rank() != 2) {
    throw ShapeError("matmul: expects rank-2 tensors, got " + shape_str(a->shape) + " x " +
                     shape_str(b->shape));
  }
  if (a->dim(1) != b->dim(0)) {
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a->shape) + " x " +
                     shape_str(b->shape));
  }
  int64_t m = a->dim(0), k = a->dim(1), n = b->dim(1);
  auto out = zeros<T>({m, n});
  detail::gemm<T>(false, false, m, n, k, a->data.data(), b->data.data(), out->data.data(), false);
  if (tracing(tape, a->requires_grad || b->requires_grad)) {
    out->requires_grad = true;
    tape->record(
        [a, b, out, m, k, n] {
          if (out->grad.empty()) return;
          if (a->requires_grad) {
            a->ensure_grad();  // dA += dC * B^T
            detail::gemm<T>(false, true, m, k, n, out->grad.data(), b->data.data(), a->grad.data(),
                            true);
          }
          if (b->requires_grad) {
            b->ensure_grad();  // dB += A^T * dC
            detail::gemm<T>(true, false, k, n, m, a->data.data(), out->grad.data(), b->grad.data(),
                            true);
          }
        },
        out.get());
  }
  return out;
}

// x[..., k] * w[k, n] -> [..., n]; leading dims flattened.
template <class T>
TensorPtr<T> linear(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& w) {
  if (w->rank() != 2 || x->dim(-1) != w->dim(0)) {
    throw ShapeError("linear: " + shape_str(x->shape) + " x " + shape_str(w->shape));
  }
  int64_t k = w->dim(0), n = w->dim(1);
  int64_t rows = x->numel() / k;
  auto out_shape = x->shape;
  out_shape.back() = n;
  auto out = zeros<T>(out_shape);
  detail::gemm<T>(false, false, rows, n, k, x->data.data(), w->data.data(), out->data.data(),
                  false);
  if (tracing(tape, x->requires_grad || w->requires_grad)) {
    out->requires_grad = true;
    tape->record(
        [x, w, out, rows, k, n] {
          if (out->grad.empty()) return;
          if (x->requires_grad) {
            x->ensure_grad();
            detail::gemm<T>(false, true, rows, k, n, out->grad.data(), w->data.data(),
                            x->grad.data(), true);
          }
          if (w->requires_grad) {
            w->ensure_grad();
            detail::gemm<T>(true, false, k, n, rows, x->data.data(), out->grad.data(),
                            w->grad.data(), true);
          }
        },
        out.get());
  }
  return out;
}

// x[..., k] * w[n, k]^T -> [..., n]. Used for output logits tied to the
// embedding table (stored [vocab, d]).
template <class T>
TensorPtr<T> linear_nt(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& w) {
  if (w->rank() != 2 || x->dim(-1) != w->dim(1)) {
    throw ShapeError("linear_nt: " + shape_str(x->shape) + " x " + shape_str(w->shape) + "^T");
  }
  int64_t n = w->dim(0), k = w->dim(1);
  int64_t rows = x->numel() / k;
  auto out_shape = x->shape;
  out_shape.back() = n;
  auto out = zeros<T>(out_shape);
  detail::gemm<T>(false, true, rows, n, k, x->data.data(), w->data.data(), out->data.data(), false);
  if (tracing(tape, x->requires_grad || w->requires_grad)) {
    out->requires_grad = true;
    tape->record(
        [x, w, out, rows, k, n] {
          if (out->grad.empty()) return;
          if (x->requires_grad) {
            x->ensure_grad();  // dX += dY * W
            detail::gemm<T>(false, false, rows, k, n, out->grad.data(), w->data.data(),
                            x->grad.data(), true);
          }
          if (w->requires_grad) {
            w->ensure_grad();  // dW += dY^T * X
            detail::gemm<T>(true, false, n, k, rows, out->grad.data(), x->data.data(),
                            w->grad.data(), true);
          }
        },
        out.get());
  }
  return out;
}

// Batched product: a[g, m, k] * b[g, k, n] (or b[g, n, k] with trans_b).
template <class T>
TensorPtr<T> bmm(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b,
                 bool trans_b = false) {
  if (a->rank() != 3 || b->rank() != 3 || a->dim(0) != b->dim(0)) {
    throw ShapeError("bmm: " + shape_str(a->shape) + " x " + shape_str(b->shape));
  }
  int64_t g = a->dim(0), m = a->dim(1), k = a->dim(2);
  int64_t n = trans_b ? b->dim(1) : b->dim(2);
  int64_t bk = trans_b ? b->dim(2) : b->dim(1);
  if (bk != k) {
    throw ShapeError("bmm: inner dimensions disagree: " + shape_str(a->shape) + " x " +
                     shape_str(b->shape) + (trans_b ? "^T" : ""));
  }
  auto out = zeros<T>({g, m, n});
  for (int64_t i = 0; i < g; ++i) {
    detail::gemm<T>(false, trans_b, m, n, k, a->data.data() + i * m * k,
                    b->data.data() + i * k * n, out->data.data() + i * m * n, false);
  }
  if (tracing(tape, a->requires_grad || b->requires_grad)) {
    out->requires_grad = true;
    tape->record(
        [a, b, out, g, m, k, n, trans_b] {
          if (out->grad.empty()) return;
          for (int64_t i = 0; i < g; ++i) {
            const T* dc = out->grad.data() + i * m * n;
            const T* ai = a->data.data() + i * m * k;
            const T* bi = b->data.data() + i * k * n;
            if (a->requires_grad) {
              a->ensure_grad();
              // trans_b: C = A*B^T -> dA += dC*B ; else dA += dC*B^T
              detail::gemm<T>(false, !trans_b, m, k, n, dc, bi, a->grad.data() + i * m * k, true);
            }
            if (b->requires_grad) {
              b->ensure_grad();
              if (trans_b) {
                // dB += dC^T * A  (B is [n, k])
                detail::gemm<T>(true, false, n, k, m, dc, ai, b->grad.data() + i * k * n, true);
              } else {
                // dB += A^T * dC
                detail::gemm<T>(true, false, k, n, m, ai, dc, b->grad.data() + i * k * n, true);
              }
            }
          }
        },
        out.get());
  }
  return out;
}

// ------------------------------------------------------------- head plumbing

// [b, s, h*dh] -> [b*h, s, dh]
template <class T>
TensorPtr<T> split_heads(Tape<T>* tape, const TensorPtr<T>& x, int64_t n_heads) {
  if (x->rank() != 3 || x->dim(2) % n_heads != 0) {
    throw ShapeError("split_heads: " + shape_str(x->shape) + " with " + std::to_string(n_heads) +
                     " heads");
  }
  int64_t b = x->dim(0), s = x->dim(1), d = x->dim(2), dh = d / n_heads;
  auto out = zeros<T>({b * n_heads, s, dh});
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t si = 0; si < s; ++si)
      for (int64_t h = 0; h < n_heads; ++h) {
        const T* src = x->data.data() + (bi * s + si) * d + h * dh;
        T* dst = out->data.data() + ((bi * n_heads + h) * s + si) * dh;
        std::copy(src, src + dh, dst);
      }
  if (tracing(tape, x->requires_grad)) {
    out->requires_grad = true;
    tape->record(
        [x, out, b, s, d, dh, n_heads] {
          if (out->grad.empty()) return;
          x->ensure_grad();
          for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t si = 0; si < s; ++si)
              for (int64_t h = 0; h < n_heads; ++h) {
                const T* src = out->grad.data() + ((bi * n_heads + h) * s + si) * dh;
                T* dst = x->grad.data() + (bi * s + si) * d + h * dh;
                for (int64_t j = 0; j < dh; ++j) dst[j] += src[j];
              }
        },
        out.get());
  }
  return out;
}

// [b*h, s, dh] -> [b, s, h*dh]
template <class T>
TensorPtr<T> merge_heads(Tape<T>* tape, const TensorPtr<T>& x, int64_t n_heads) {
  if (x->rank() != 3 || x->dim(0) % n_heads != 0) {
    throw ShapeError("merge_heads: " + shape_str(x->shape) + " with " + std::to_string(n_heads) +
                     " heads");
  }
  int64_t b = x->dim(0) / n_heads, s = x->dim(1), dh = x->dim(2), d = dh * n_heads;
  auto out = zeros<T>({b, s, d});
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t si = 0; si < s; ++si)
      for (int64_t h = 0; h < n_heads; ++h) {
        const T* src = x->data.data() + ((bi * n_heads + h) * s + si) * dh;
        T* dst = out->data.data() + (bi * s + si) * d + h * dh;
        std::copy(src, src + dh, dst);
      }
  if (tracing(tape, x->requires_grad)) {
    out->requires_grad = true;
    tape->record(
        [x, out, b, s, d, dh, n_heads] {
          if (out->grad.empty()) return;
          x->ensure_grad();
          for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t si = 0; si < s; ++si)
              for (int64_t h = 0; h < n_heads; ++h) {
                const T* src = out->grad.data() + (bi * s + si) * d + h * dh;
                T* dst = x->grad.data() + ((bi * n_heads + h) * s + si) * dh;
                for (int64_t j = 0; j < dh; ++j) dst[j] += src[j];
              }
        },
        out.get());
  }
  return out;
}

// ----------------------------------------------------- softmax / layer norm

// Stable softmax along `axis`. Rows (slices along the axis) sum to 1.
template <class T>
TensorPtr<T> softmax(Tape<T>* tape, const TensorPtr<T>& x, int64_t axis) {
  if (axis < 0 || axis >= x->rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(x->shape));
  }
  int64_t outer = 1, inner = 1, len = x->shape[static_cast<size_t>(axis)];
  for (int64_t i = 0; i < axis; ++i) outer *= x->shape[static_cast<size_t>(i)];
  for (int64_t i = axis + 1; i < x->rank(); ++i) inner *= x->shape[static_cast<size_t>(i)];
  auto out = zeros<T>(x->shape);
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      auto at = [&](int64_t i) { return static_cast<size_t>((o * len + i) * inner + in); };
      T mx = x->data[at(0)];
      for (int64_t i = 1; i < len; ++i) mx = std::max(mx, x->data[at(i)]);
      T z = 0;
      for (int64_t i = 0; i < len; ++i) {
        T e = std::exp(x->data[at(i)] - mx);
        out->data[at(i)] = e;
        z += e;
      }
      for (int64_t i = 0; i < len; ++i) out->data[at(i)] /= z;
    }
  }
  if (tracing(tape, x->requires_grad)) {
    out->requires_grad = true;
    tape->record(
        [x, out, outer, inner, len] {
          if (out->grad.empty()) return;
          x->ensure_grad();
          for (int64_t o = 0; o < outer; ++o) {
            for (int64_t in = 0; in < inner; ++in) {
              auto at = [&](int64_t i) { return static_cast<size_t>((o * len + i) * inner + in); };
              T dot = 0;
              for (int64_t i = 0; i < len; ++i) dot += out->data[at(i)] * out->grad[at(i)];
              for (int64_t i = 0; i < len; ++i)
                x->grad[at(i)] += out->data[at(i)] * (out->grad[at(i)] - dot);
            }
          }
        },
        out.get());
  }
  return out;
}

// Softmax over the key axis of attention scores [b*h, sq, sk] with key
// padding masked out, optionally causal. Masked positions get weight exactly
// 0; a row with no valid key comes out all-zero.
template <class T>
TensorPtr<T> attention_softmax(Tape<T>* tape, const TensorPtr<T>& scores,
                               const std::vector<uint8_t>& key_mask, int64_t batch, bool causal) {
  if (scores->rank() != 3 || scores->dim(0) % batch != 0) {
    throw ShapeError("attention_softmax: scores " + shape_str(scores->shape) + " with batch " +
                     std::to_string(batch));
  }
  int64_t g = scores->dim(0), sq = scores->dim(1), sk = scores->dim(2);
  int64_t heads = g / batch;
  if (static_cast<int64_t>(key_mask.size()) != batch * sk) {
    throw ShapeError("attention_softmax: key mask length " + std::to_string(key_mask.size()) +
                     " does not cover batch " + std::to_string(batch) + " x keys " +
                     std::to_string(sk));
  }
  auto out = zeros<T>(scores->shape);
  for (int64_t gi = 0; gi < g; ++gi) {
    int64_t b = gi / heads;
    for (int64_t qi = 0; qi < sq; ++qi) {
      const T* row = scores->data.data() + (gi * sq + qi) * sk;
      T* orow = out->data.data() + (gi * sq + qi) * sk;
      T mx = -std::numeric_limits<T>::infinity();
      for (int64_t kj = 0; kj < sk; ++kj) {
        if (!key_mask[static_cast<size_t>(b * sk + kj)] || (causal && kj > qi)) continue;
        mx = std::max(mx, row[kj]);
      }
      if (mx == -std::numeric_limits<T>::infinity()) continue;  // no valid key
      T z = 0;
      for (int64_t kj = 0; kj < sk; ++kj) {
        if (!key_mask[static_cast<size_t>(b * sk + kj)] || (causal && kj > qi)) continue;
        T e = std::exp(row[kj] - mx);
        orow[kj] = e;
        z += e;
      }
      for (int64_t kj = 0; kj < sk; ++kj) orow[kj] /= z;
    }
  }
  if (tracing(tape, scores->requires_grad)) {
    out->requires_grad = true;
    tape->record(
        [scores, out, g, sq, sk] {
          if (out->grad.empty()) return;
          scores->ensure_grad();
          for (int64_t gi = 0; gi < g; ++gi) {
            for (int64_t qi = 0; qi < sq; ++qi) {
              size_t base = static_cast<size_t>((gi * sq + qi) * sk);
              T dot = 0;
              for (int64_t kj = 0; kj < sk; ++kj)
                dot += out->data[base + kj] * out->grad[base + kj];
              for (int64_t kj = 0; kj < sk; ++kj)
                scores->grad[base + kj] += out->data[base + kj] * (out->grad[base + kj] - dot);
            }
          }
        },
        out.get());
  }
  return out;
}

// Per-row normalization over the last dimension, then affine gain/bias.
template <class T>
TensorPtr<T> layer_norm(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& gain,
                        const TensorPtr<T>& bias, T eps) {
  int64_t d = x->dim(-1);
  if (gain->numel() != d || bias->numel() != d) {
    throw ShapeError("layer_norm: gain " + shape_str(gain->shape) + " / bias " +
                     shape_str(bias->shape) + " do not match last dim of " + shape_str(x->shape));
  }
  int64_t rows = x->numel() / d;
  auto out = zeros<T>(x->shape);
  auto xhat = std::make_shared<std::vector<T>>(x->data.size());
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = x->data.data() + r * d;
    T mean = 0;
    for (int64_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<T>(d);
    T var = 0;
    for (int64_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<T>(d);
    T inv = T(1) / std::sqrt(var + eps);
    (*inv_std)[static_cast<size_t>(r)] = inv;
    for (int64_t j = 0; j < d; ++j) {
      T xh = (xr[j] - mean) * inv;
      (*xhat)[static_cast<size_t>(r * d + j)] = xh;
      out->data[static_cast<size_t>(r * d + j)] = gain->data[static_cast<size_t>(j)] * xh +
                                                  bias->data[static_cast<size_t>(j)];
    }
  }
  if (tracing(tape, x->requires_grad || gain->requires_grad || bias->requires_grad)) {
    out->requires_grad = true;
    tape->record(
        [x, gain, bias, out, xhat, inv_std, rows, d] {
          if (out->grad.empty()) return;
          for (int64_t r = 0; r < rows; ++r) {
            const T* dy = out->grad.data() + r * d;
            const T* xh = xhat->data() + r * d;
            if (gain->requires_grad) {
              gain->ensure_grad();
              for (int64_t j = 0; j < d; ++j)
                gain->grad[static_cast<size_t>(j)] += dy[j] * xh[j];
            }
            if (bias->requires_grad) {
              bias->ensure_grad();
              for (int64_t j = 0; j < d; ++j) bias->grad[static_cast<size_t>(j)] += dy[j];
            }
            if (x->requires_grad) {
              x->ensure_grad();
              T m1 = 0, m2 = 0;
              for (int64_t j = 0; j < d; ++j) {
                T dxh = dy[j] * gain->data[static_cast<size_t>(j)];
                m1 += dxh;
                m2 += dxh * xh[j];
              }
              m1 /= static_cast<T>(d);
              m2 /= static_cast<T>(d);
              T inv = (*inv_std)[static_cast<size_t>(r)];
              for (int64_t j = 0; j < d; ++j) {
                T dxh = dy[j] * gain->data[static_cast<size_t>(j)];
                x->grad[static_cast<size_t>(r * d + j)] += inv * (dxh - m1 - xh[j] * m2);
              }
            }
          }
        },
        out.get());
  }
  return out;
}

// ------------------------------------------------------- lookup / loss / etc

// Gather rows of table[v, d] by id; output shape = ids_shape + [d].
template <class T>
TensorPtr<T> embedding(Tape<T>* tape, const TensorPtr<T>& table, const std::vector<int32_t>& ids,
                       std::vector<int64_t> ids_shape) {
  if (table->rank() != 2) throw ShapeError("embedding: table must be rank 2");
  int64_t v = table->dim(0), d = table->dim(1);
  int64_t n = static_cast<int64_t>(ids.size());
  if (Tensor<T>::numel_of(ids_shape) != n) {
    throw ShapeError("embedding: ids shape " + shape_str(ids_shape) + " does not match " +
                     std::to_string(n) + " ids");
  }
  for (int32_t id : ids) {
    if (id < 0 || id >= v) {
      throw DataError("embedding: id " + std::to_string(id) + " outside vocabulary of size " +
                      std::to_string(v));
    }
  }
  ids_shape.push_back(d);
  auto out = zeros<T>(ids_shape);
  for (int64_t i = 0; i < n; ++i) {
    const T* src = table->data.data() + static_cast<int64_t>(ids[static_cast<size_t>(i)]) * d;
    std::copy(src, src + d, out->data.data() + i * d);
  }
  if (tracing(tape, table->requires_grad)) {
    out->requires_grad = true;
    auto ids_copy = std::make_shared<std::vector<int32_t>>(ids);
    tape->record(
        [table, out, ids_copy, d, n] {
          if (out->grad.empty()) return;
          table->ensure_grad();
          for (int64_t i = 0; i < n; ++i) {
            T* dst = table->grad.data() +
                     static_cast<int64_t>((*ids_copy)[static_cast<size_t>(i)]) * d;
            const T* src = out->grad.data() + i * d;
            for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
          }
        },
        out.get());
  }
  return out;
}

// Adds a fixed (non-learned) row table: x[b, s, d] + rows[s, d].
template <class T>
TensorPtr<T> add_rows_const(Tape<T>* tape, const TensorPtr<T>& x, const std::vector<T>& rows,
                            int64_t rows_available) {
  if (x->rank() != 3) throw ShapeError("add_rows_const: expects [b, s, d], got " + shape_str(x->shape));
  int64_t b = x->dim(0), s = x->dim(1), d = x->dim(2);
  if (s > rows_available) {
    throw DataError("sequence length " + std::to_string(s) + " exceeds max positions " +
                    std::to_string(rows_available));
  }
  auto out = zeros<T>(x->shape);
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t si = 0; si < s; ++si)
      for (int64_t j = 0; j < d; ++j)
        out->data[static_cast<size_t>((bi * s + si) * d + j)] =
            x->data[static_cast<size_t>((bi * s + si) * d + j)] + rows[static_cast<size_t>(si * d + j)];
  if (tracing(tape, x->requires_grad)) {
    out->requires_grad = true;
    tape->record(
        [x, out] {
          if (out->grad.empty()) return;
          x->ensure_grad();
          for (size_t i = 0; i < out->grad.size(); ++i) x->grad[i] += out->grad[i];
        },
        out.get());
  }
  return out;
}

// Mean label-smoothed negative log-likelihood over non-pad targets.
// Smoothed distribution: (1-ls) on the gold id, ls/(v-1) on every other id.
template <class T>
TensorPtr<T> cross_entropy(Tape<T>* tape, const TensorPtr<T>& logits,
                           const std::vector<int32_t>& targets, T label_smoothing,
                           int32_t pad_id) {
  if (logits->rank() != 2 ||
      logits->dim(0) != static_cast<int64_t>(targets.size())) {
    throw ShapeError("cross_entropy: logits " + shape_str(logits->shape) + " vs " +
                     std::to_string(targets.size()) + " targets");
  }
  if (label_smoothing < T(0) || label_smoothing >= T(1)) {
    throw ConfigError("cross_entropy: label smoothing must be in [0, 1)");
  }
  int64_t n = logits->dim(0), v = logits->dim(1);
  for (int32_t t : targets) {
    if (t < 0 || t >= v) {
      throw DataError("cross_entropy: target id " + std::to_string(t) +
                      " outside vocabulary of size " + std::to_string(v));
    }
  }
  int64_t active = 0;
  T total = 0;
  auto log_z = std::make_shared<std::vector<T>>(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    if (targets[static_cast<size_t>(i)] == pad_id) continue;
    const T* row = logits->data.data() + i * v;
    T mx = row[0];
    for (int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    T z = 0;
    for (int64_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    T lz = mx + std::log(z);
    (*log_z)[static_cast<size_t>(i)] = lz;
    T sum_others = 0;
    for (int64_t j = 0; j < v; ++j) sum_others += row[j];
    T gold = row[targets[static_cast<size_t>(i)]];
    sum_others -= gold;
    T off = v > 1 ? label_smoothing / static_cast<T>(v - 1) : T(0);
    total += lz - (T(1) - label_smoothing) * gold - off * sum_others;
    ++active;
  }
  T loss_val = active > 0 ? total / static_cast<T>(active) : T(0);
  auto out = tensor<T>({1}, {loss_val});
  if (tracing(tape, logits->requires_grad) && active > 0) {
    out->requires_grad = true;
    auto tgt = std::make_shared<std::vector<int32_t>>(targets);
    tape->record(
        [logits, out, tgt, log_z, n, v, label_smoothing, pad_id, active] {
          if (out->grad.empty()) return;
          logits->ensure_grad();
          T g = out->grad[0] / static_cast<T>(active);
          T off = v > 1 ? label_smoothing / static_cast<T>(v - 1) : T(0);
          for (int64_t i = 0; i < n; ++i) {
            int32_t t = (*tgt)[static_cast<size_t>(i)];
            if (t == pad_id) continue;
            const T* row = logits->data.data() + i * v;
            T lz = (*log_z)[static_cast<size_t>(i)];
            for (int64_t j = 0; j < v; ++j) {
              T p = std::exp(row[j] - lz);
              T q = (j == t) ? (T(1) - label_smoothing) : off;
              logits->grad[static_cast<size_t>(i * v + j)] += (p - q) * g;
            }
          }
        },
        out.get());
  }
  return out;
}

// Inverted dropout; p == 0 passes the tensor through untouched.
template <class T>
TensorPtr<T> dropout(Tape<T>* tape, const TensorPtr<T>& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw ConfigError("dropout: rate must be in [0, 1)");
  auto keep = std::make_shared<std::vector<T>>(x->data.size());
  T inv_keep = static_cast<T>(1.0 / (1.0 - p));
  for (auto& k : *keep) k = rng.uniform() < p ? T(0) : inv_keep;
  auto out = zeros<T>(x->shape);
  for (size_t i = 0; i < out->data.size(); ++i) out->data[i] = x->data[i] * (*keep)[i];
  if (tracing(tape, x->requires_grad)) {
    out->requires_grad = true;
    tape->record(
        [x, out, keep] {
          if (out->grad.empty()) return;
          x->ensure_grad();
          for (size_t i = 0; i < out->grad.size(); ++i) x->grad[i] += out->grad[i] * (*keep)[i];
        },
        out.get());
  }
  return out;
}

}  // namespace rsnmt::ops
