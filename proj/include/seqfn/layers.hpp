#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "seqfn/tensor.hpp"

namespace seqfn {

using TokenId = std::int32_t;

/// Row lookup into a [vocab x d] table. Rows for `padding_id` (when >= 0)
/// produce zeros and receive no gradient.
template <class T>
Tensor<T> embedding(std::span<const TokenId> ids, const Tensor<T>& table, TokenId padding_id = -1) {
  if (table.rank() != 2) throw DimensionError("embedding: table must be 2-D, got " + shape_str(table.shape()));
  if (ids.empty()) throw DimensionError("embedding: empty id sequence");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<TokenId> rows(ids.begin(), ids.end());
  std::vector<T> out(rows.size() * d, T(0));
  const auto& w = table.data();
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t] < 0 || static_cast<std::size_t>(rows[t]) >= vocab) {
      throw DimensionError("embedding: token id " + std::to_string(rows[t]) + " out of range for vocab " +
                           std::to_string(vocab));
    }
    if (rows[t] == padding_id) continue;
    std::copy_n(w.begin() + rows[t] * d, d, out.begin() + t * d);
  }
  const std::size_t steps = rows.size();
  return detail::make_op<T>("embedding", {steps, d}, std::move(out), {table},
                            [rows = std::move(rows), d, padding_id](detail::Node<T>& self) {
                              T* gw = detail::grad_of(self, 0);
                              if (!gw) return;
                              for (std::size_t t = 0; t < rows.size(); ++t) {
                                if (rows[t] == padding_id) continue;
                                T* dst = gw + rows[t] * d;
                                const T* src = self.grad.data() + t * d;
                                for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                              }
                            });
}

/// Per-channel causal convolution: out[t][c] = bias[c] + sum_j kernel[c][j] * x[t-k+1+j][c],
/// with zeros before t = 0. kernel[c][k-1] weighs the current step.
template <class T>
Tensor<T> causal_depthwise_conv1d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias) {
  if (x.rank() != 2 || kernel.rank() != 2 || bias.rank() != 1 || kernel.dim(0) != x.dim(1) ||
      bias.dim(0) != x.dim(1)) {
    throw DimensionError("causal_depthwise_conv1d: channel mismatch between x " + shape_str(x.shape()) +
                         ", kernel " + shape_str(kernel.shape()) + ", bias " + shape_str(bias.shape()));
  }
  const std::size_t steps = x.dim(0), channels = x.dim(1), k = kernel.dim(1);
  const auto& xv = x.data();
  const auto& kv = kernel.data();
  const auto& bv = bias.data();
  std::vector<T> out(steps * channels);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      T acc = bv[c];
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(k - 1);
        if (src >= 0) acc += kv[c * k + j] * xv[src * channels + c];
      }
      out[t * channels + c] = acc;
    }
  }
  return detail::make_op<T>(
      "causal_depthwise_conv1d", {steps, channels}, std::move(out), {x, kernel, bias},
      [steps, channels, k](detail::Node<T>& self) {
        T* gx = detail::grad_of(self, 0);
        T* gk = detail::grad_of(self, 1);
        T* gb = detail::grad_of(self, 2);
        const auto& xv = detail::data_of(self, 0);
        const auto& kv = detail::data_of(self, 1);
        for (std::size_t t = 0; t < steps; ++t) {
          for (std::size_t c = 0; c < channels; ++c) {
            const T g = self.grad[t * channels + c];
            if (gb) gb[c] += g;
            for (std::size_t j = 0; j < k; ++j) {
              const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(k - 1);
              if (src < 0) continue;
              if (gk) gk[c * k + j] += g * xv[src * channels + c];
              if (gx) gx[src * channels + c] += g * kv[c * k + j];
            }
          }
        }
      });
}

/// Full 1-D convolution over time. x: [T x Cin], kernel: [Cout x Cin x k],
/// bias: [Cout]. Zero padding of `pad_left`/`pad_right` steps; output length
/// is T + pad_left + pad_right - k + 1.
template <class T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, std::size_t pad_left,
                 std::size_t pad_right) {
  if (x.rank() != 2 || kernel.rank() != 3 || bias.rank() != 1 || kernel.dim(1) != x.dim(1) ||
      bias.dim(0) != kernel.dim(0)) {
    throw DimensionError("conv1d: channel mismatch between x " + shape_str(x.shape()) + ", kernel " +
                         shape_str(kernel.shape()) + ", bias " + shape_str(bias.shape()));
  }
  const std::size_t steps = x.dim(0), cin = x.dim(1), cout = kernel.dim(0), k = kernel.dim(2);
  if (steps + pad_left + pad_right < k) throw DimensionError("conv1d: input shorter than kernel after padding");
  const std::size_t out_steps = steps + pad_left + pad_right - k + 1;
  const auto& xv = x.data();
  const auto& kv = kernel.data();
  const auto& bv = bias.data();
  std::vector<T> out(out_steps * cout);
  for (std::size_t t = 0; t < out_steps; ++t) {
    for (std::size_t o = 0; o < cout; ++o) {
      T acc = bv[o];
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(pad_left);
        if (src < 0 || static_cast<std::size_t>(src) >= steps) continue;
        const T* xrow = xv.data() + src * cin;
        const T* krow = kv.data() + o * cin * k + j;
        for (std::size_t i = 0; i < cin; ++i) acc += krow[i * k] * xrow[i];
      }
      out[t * cout + o] = acc;
    }
  }
  return detail::make_op<T>(
      "conv1d", {out_steps, cout}, std::move(out), {x, kernel, bias},
      [steps, cin, cout, k, out_steps, pad_left](detail::Node<T>& self) {
        T* gx = detail::grad_of(self, 0);
        T* gk = detail::grad_of(self, 1);
        T* gb = detail::grad_of(self, 2);
        const auto& xv = detail::data_of(self, 0);
        const auto& kv = detail::data_of(self, 1);
        for (std::size_t t = 0; t < out_steps; ++t) {
          for (std::size_t o = 0; o < cout; ++o) {
            const T g = self.grad[t * cout + o];
            if (g == T(0)) continue;
            if (gb) gb[o] += g;
            for (std::size_t j = 0; j < k; ++j) {
              const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(pad_left);
              if (src < 0 || static_cast<std::size_t>(src) >= steps) continue;
              const std::size_t kbase = o * cin * k + j;
              const std::size_t xbase = src * cin;
              for (std::size_t i = 0; i < cin; ++i) {
                if (gk) gk[kbase + i * k] += g * xv[xbase + i];
                if (gx) gx[xbase + i] += g * kv[kbase + i * k];
              }
            }
          }
        }
      });
}

/// Row-wise RMS normalization: x / sqrt(mean(x^2) + eps) * weight.
template <class T>
Tensor<T> rmsnorm(const Tensor<T>& x, const Tensor<T>& weight, T eps) {
  if (!(eps > T(0))) throw DimensionError("rmsnorm: eps must be positive");
  if (x.rank() != 2 || weight.rank() != 1 || weight.dim(0) != x.dim(1)) {
    throw DimensionError("rmsnorm: weight " + shape_str(weight.shape()) + " does not match rows of " +
                         shape_str(x.shape()));
  }
  const std::size_t rows = x.dim(0), d = x.dim(1);
  const auto& xv = x.data();
  const auto& wv = weight.data();
  std::vector<T> out(rows * d);
  std::vector<T> inv_rms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T ms = 0;
    for (std::size_t j = 0; j < d; ++j) ms += xv[r * d + j] * xv[r * d + j];
    inv_rms[r] = T(1) / std::sqrt(ms / static_cast<T>(d) + eps);
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xv[r * d + j] * inv_rms[r] * wv[j];
  }
  return detail::make_op<T>(
      "rmsnorm", {rows, d}, std::move(out), {x, weight},
      [rows, d, inv_rms = std::move(inv_rms)](detail::Node<T>& self) {
        T* gx = detail::grad_of(self, 0);
        T* gw = detail::grad_of(self, 1);
        const auto& xv = detail::data_of(self, 0);
        const auto& wv = detail::data_of(self, 1);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* g = self.grad.data() + r * d;
          const T* xr = xv.data() + r * d;
          const T s = inv_rms[r];
          T dot = 0;
          for (std::size_t j = 0; j < d; ++j) {
            const T xhat = xr[j] * s;
            if (gw) gw[j] += g[j] * xhat;
            dot += g[j] * wv[j] * xhat;
          }
          if (!gx) continue;
          dot /= static_cast<T>(d);
          for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += s * (g[j] * wv[j] - xr[j] * s * dot);
        }
      });
}

/// Mean of the rows of x[T x d] whose mask entry is nonzero, as a [1 x d] tensor.
template <class T>
Tensor<T> masked_mean_rows(const Tensor<T>& x, std::span<const std::uint8_t> keep) {
  if (x.rank() != 2 || keep.size() != x.dim(0)) {
    throw DimensionError("masked_mean_rows: mask length does not match rows of " + shape_str(x.shape()));
  }
  const auto count = static_cast<std::size_t>(std::count_if(keep.begin(), keep.end(), [](std::uint8_t v) { return v != 0; }));
  if (count == 0) throw DimensionError("masked_mean_rows: every row is masked");
  std::vector<T> w(keep.size());
  for (std::size_t t = 0; t < keep.size(); ++t) w[t] = keep[t] != 0 ? T(1) / static_cast<T>(count) : T(0);
  return matmul(Tensor<T>::from({1, keep.size()}, std::move(w)), x);
}

}  // namespace seqfn
