#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "seqfn/mamba.hpp"
#include "seqfn/tensor.hpp"
#include "seqfn/vocab.hpp"

namespace seqfn {

/// Summed cross-entropy (nats) of rows of logits[T x V] against `targets`;
/// rows whose target is negative are skipped. Uses a max-shifted log-sum-exp.
template <class T>
Tensor<T> cross_entropy_sum(const Tensor<T>& logits, std::span<const TokenId> targets) {
  if (logits.rank() != 2 || targets.size() != logits.dim(0)) {
    throw DimensionError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(targets.size()) + " targets");
  }
  const std::size_t rows = logits.dim(0), classes = logits.dim(1);
  const auto& z = logits.data();
  std::vector<T> probs(rows * classes, T(0));
  T total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] < 0) continue;
    if (static_cast<std::size_t>(targets[r]) >= classes) {
      throw DimensionError("cross_entropy: target " + std::to_string(targets[r]) + " out of range");
    }
    const T* row = z.data() + r * classes;
    T m = row[0];
    for (std::size_t c = 1; c < classes; ++c) m = std::max(m, row[c]);
    T s = 0;
    for (std::size_t c = 0; c < classes; ++c) s += std::exp(row[c] - m);
    const T lse = m + std::log(s);
    total += lse - row[targets[r]];
    for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] = std::exp(row[c] - lse);
  }
  std::vector<TokenId> tgt(targets.begin(), targets.end());
  return detail::make_op<T>("cross_entropy", {1}, {total}, {logits},
                            [rows, classes, probs = std::move(probs), tgt = std::move(tgt)](detail::Node<T>& self) {
                              T* gz = detail::grad_of(self, 0);
                              if (!gz) return;
                              const T g = self.grad[0];
                              for (std::size_t r = 0; r < rows; ++r) {
                                if (tgt[r] < 0) continue;
                                for (std::size_t c = 0; c < classes; ++c) gz[r * classes + c] += g * probs[r * classes + c];
                                gz[r * classes + tgt[r]] -= g;
                              }
                            });
}

/// Next-token targets for an input sequence: row t targets ids[t + 1]; the
/// last row and rows whose target is PAD are masked (-1).
inline std::vector<TokenId> next_token_targets(std::span<const TokenId> ids) {
  std::vector<TokenId> t(ids.size(), -1);
  for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
    if (ids[i + 1] != vocab::kPad) t[i] = ids[i + 1];
  }
  return t;
}

inline std::size_t count_targets(std::span<const TokenId> targets) {
  std::size_t n = 0;
  for (auto t : targets) n += t >= 0;
  return n;
}

/// Mean next-token cross-entropy in nats over unmasked positions.
template <class T>
Tensor<T> lm_loss(const Tensor<T>& logits, std::span<const TokenId> ids) {
  auto targets = next_token_targets(ids);
  const auto n = count_targets(targets);
  if (n == 0) throw DimensionError("lm_loss: every position is masked");
  return scale(cross_entropy_sum(logits, targets), T(1) / static_cast<T>(n));
}

template <class T>
Tensor<T> mse_loss(const Tensor<T>& pred, T label) {
  auto diff = sub(pred, Tensor<T>::scalar(label));
  return sum(mul(diff, diff));
}

/// max(x, 0) - x*y + log(1 + e^{-|x|}); gradient sigmoid(x) - y.
template <class T>
Tensor<T> bce_with_logits(const Tensor<T>& logit, T label) {
  if (logit.numel() != 1) throw DimensionError("bce_with_logits expects a single logit");
  const T x = logit.item();
  const T loss = std::max(x, T(0)) - x * label + std::log1p(std::exp(-std::abs(x)));
  return detail::make_op<T>("bce_with_logits", {1}, {loss}, {logit}, [label](detail::Node<T>& self) {
    T* g = detail::grad_of(self, 0);
    if (!g) return;
    g[0] += self.grad[0] * (detail::stable_sigmoid(self.parents[0]->data[0]) - label);
  });
}

inline void check_binary_label(double label) {
  if (label != 0.0 && label != 1.0) {
    throw FormatError("classification label must be 0 or 1, got " + std::to_string(label));
  }
}

/// Batch-mean task loss: MSE for regression, BCE-on-logit for classification.
template <class T>
Tensor<T> task_loss(std::span<const Tensor<T>> preds, std::span<const double> labels, Head head) {
  if (preds.empty() || preds.size() != labels.size()) {
    throw DimensionError("task_loss: need equal, nonzero numbers of predictions and labels");
  }
  if (head == Head::lm) throw ConfigError("task_loss: head must be regression or binary_classification");
  Tensor<T> total;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    Tensor<T> li;
    if (head == Head::regression) {
      li = mse_loss(preds[i], static_cast<T>(labels[i]));
    } else {
      check_binary_label(labels[i]);
      li = bce_with_logits(preds[i], static_cast<T>(labels[i]));
    }
    total = i == 0 ? li : add(total, li);
  }
  return scale(total, T(1) / static_cast<T>(preds.size()));
}

}  // namespace seqfn
