#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "seqfn/layers.hpp"
#include "seqfn/mamba.hpp"
#include "seqfn/params.hpp"
#include "seqfn/vocab.hpp"

namespace seqfn {

/// 1D-CNN baseline: embedding, four same-padded conv + ReLU layers, global
/// max pool over time, one linear layer to a scalar.
struct CnnSpec {
  std::size_t vocab_size = vocab::kSize;
  std::size_t embed_dim = 32;
  std::vector<std::size_t> filters{32, 64, 96, 128};
  std::vector<std::size_t> kernels{6, 8, 10, 12};
  Head head = Head::regression;

  bool operator==(const CnnSpec&) const = default;
};

inline void validate(const CnnSpec& spec) {
  if (spec.filters.empty() || spec.filters.size() != spec.kernels.size()) {
    throw ConfigError("cnn spec: filters and kernels must be nonempty lists of equal length");
  }
  for (auto v : spec.filters) {
    if (v == 0) throw ConfigError("cnn spec: filter counts must be positive");
  }
  for (auto v : spec.kernels) {
    if (v == 0) throw ConfigError("cnn spec: kernel sizes must be positive");
  }
  if (spec.vocab_size == 0 || spec.embed_dim == 0) throw ConfigError("cnn spec: vocab_size and embed_dim must be positive");
  if (spec.head == Head::lm) throw ConfigError("cnn spec: the baseline only supports task heads");
}

// The PAD row of the embedding is zero and frozen, so padding behaves like the
// convolutions' own zero padding.
template <class T>
ParamSet<T> init_cnn_params(const CnnSpec& spec, std::uint64_t seed) {
  validate(spec);
  detail::Initializer init(seed);
  ParamSet<T> p;
  auto emb = init.normal<T>({spec.vocab_size, spec.embed_dim}, 1.0);
  for (std::size_t j = 0; j < spec.embed_dim; ++j) emb.update_data()[vocab::kPad * spec.embed_dim + j] = T(0);
  p.add("embedding", std::move(emb));
  std::size_t cin = spec.embed_dim;
  for (std::size_t i = 0; i < spec.filters.size(); ++i) {
    const std::size_t cout = spec.filters[i], k = spec.kernels[i];
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k));
    p.add("conv." + std::to_string(i) + ".weight", init.uniform<T>({cout, cin, k}, bound));
    p.add("conv." + std::to_string(i) + ".bias", init.uniform<T>({cout}, bound));
    cin = cout;
  }
  init_task_head(p, cin, seed);
  return p;
}

/// Activations after each conv + ReLU layer, [T x filters[i]] each.
template <class T>
std::vector<Tensor<T>> cnn_feature_maps(std::span<const TokenId> ids, const CnnSpec& spec, const ParamSet<T>& params) {
  if (ids.empty()) throw DimensionError("forward_cnn: empty token sequence");
  auto h = embedding(ids, params.get("embedding"), vocab::kPad);
  std::vector<Tensor<T>> maps;
  for (std::size_t i = 0; i < spec.filters.size(); ++i) {
    const std::size_t k = spec.kernels[i];
    const std::size_t left = (k - 1) / 2;
    h = relu(conv1d(h, params.get("conv." + std::to_string(i) + ".weight"),
                    params.get("conv." + std::to_string(i) + ".bias"), left, k - 1 - left));
    maps.push_back(h);
  }
  return maps;
}

/// Scalar prediction, shape [1] (logit for classification).
template <class T>
Tensor<T> forward_cnn(std::span<const TokenId> ids, const CnnSpec& spec, const ParamSet<T>& params) {
  auto maps = cnn_feature_maps(ids, spec, params);
  auto pooled = reshape(max(maps.back(), 0), {1, spec.filters.back()});
  return reshape(add(matmul(pooled, params.get("head.weight")), params.get("head.bias")), {1});
}

}  // namespace seqfn
