#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "seqfn/layers.hpp"
#include "seqfn/params.hpp"
#include "seqfn/scan.hpp"
#include "seqfn/tensor.hpp"
#include "seqfn/vocab.hpp"

namespace seqfn {

enum class Head { lm, regression, binary_classification };

inline std::string to_string(Head h) {
  switch (h) {
    case Head::lm: return "lm";
    case Head::regression: return "regression";
    case Head::binary_classification: return "binary_classification";
  }
  return "?";
}

inline Head head_from_string(const std::string& s) {
  if (s == "lm") return Head::lm;
  if (s == "regression") return Head::regression;
  if (s == "binary_classification" || s == "classification") return Head::binary_classification;
  throw ConfigError("unknown head kind '" + s + "'");
}

/// Architecture hyperparameters of the selective state-space network.
/// Defaults: 8 layers, width 300; state size, expansion and conv width
/// follow the usual Mamba settings.
struct ModelSpec {
  std::size_t vocab_size = vocab::kSize;
  std::size_t d_model = 300;
  std::size_t n_layers = 8;
  std::size_t d_state = 16;
  std::size_t expand = 2;
  std::size_t conv_kernel = 4;
  Head head = Head::lm;

  std::size_t d_inner() const { return expand * d_model; }
  bool operator==(const ModelSpec&) const = default;
};

inline void validate(const ModelSpec& spec) {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("model spec field '") + name + "' must be positive");
  };
  positive(spec.vocab_size, "vocab_size");
  positive(spec.d_model, "d_model");
  positive(spec.n_layers, "n_layers");
  positive(spec.d_state, "d_state");
  positive(spec.expand, "expand");
  positive(spec.conv_kernel, "conv_kernel");
}

inline constexpr double kNormEps = 1e-5;

namespace detail {

// Deterministic initializer: all draws come from one engine in a fixed order.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  template <class T>
  Tensor<T> uniform(Shape shape, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(dist(rng_));
    return Tensor<T>::from(std::move(shape), std::move(v));
  }

  template <class T>
  Tensor<T> normal(Shape shape, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(dist(rng_));
    return Tensor<T>::from(std::move(shape), std::move(v));
  }

  // softplus^{-1} of dt, with dt log-uniform in [lo, hi].
  template <class T>
  Tensor<T> delta_bias(std::size_t n, double lo, double hi) {
    std::uniform_real_distribution<double> dist(std::log(lo), std::log(hi));
    std::vector<T> v(n);
    for (auto& x : v) {
      const double dt = std::exp(dist(rng_));
      x = static_cast<T>(dt + std::log(-std::expm1(-dt)));
    }
    return Tensor<T>::from({n}, std::move(v));
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline std::string layer_name(std::size_t layer, const char* field) {
  return "layers." + std::to_string(layer) + "." + field;
}

}  // namespace detail

/// Adds a fresh task head (weight [d x 1], bias [1]) to `params`.
template <class T>
void init_task_head(ParamSet<T>& params, std::size_t width, std::uint64_t seed) {
  detail::Initializer init(seed ^ 0x9e3779b97f4a7c15ULL);
  params.add("head.weight", init.uniform<T>({width, 1}, 1.0 / std::sqrt(static_cast<double>(width))));
  params.add("head.bias", Tensor<T>::zeros({1}));
}

/// Fresh parameters for `spec`. Linear weights are uniform in
/// +-1/sqrt(fan_in); A_log[c][n] = log(n + 1) so A = -(1..N) per channel;
/// D = 1; the delta bias puts softplus(b) log-uniformly in [1e-3, 1e-1].
template <class T>
ParamSet<T> init_params(const ModelSpec& spec, std::uint64_t seed) {
  validate(spec);
  detail::Initializer init(seed);
  const std::size_t d = spec.d_model, e = spec.d_inner(), n = spec.d_state, k = spec.conv_kernel;
  const double bound_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double bound_e = 1.0 / std::sqrt(static_cast<double>(e));
  const double bound_k = 1.0 / std::sqrt(static_cast<double>(k));

  ParamSet<T> p;
  p.add("embedding", init.normal<T>({spec.vocab_size, d}, 1.0));
  for (std::size_t l = 0; l < spec.n_layers; ++l) {
    using detail::layer_name;
    p.add(layer_name(l, "norm"), Tensor<T>::full({d}, T(1)));
    p.add(layer_name(l, "w_x"), init.uniform<T>({d, e}, bound_d));
    p.add(layer_name(l, "w_z"), init.uniform<T>({d, e}, bound_d));
    p.add(layer_name(l, "conv_kernel"), init.uniform<T>({e, k}, bound_k));
    p.add(layer_name(l, "conv_bias"), init.uniform<T>({e}, bound_k));
    p.add(layer_name(l, "w_delta"), init.uniform<T>({e, e}, bound_e));
    p.add(layer_name(l, "b_delta"), init.delta_bias<T>(e, 1e-3, 1e-1));
    p.add(layer_name(l, "w_b"), init.uniform<T>({e, n}, bound_e));
    p.add(layer_name(l, "w_c"), init.uniform<T>({e, n}, bound_e));
    std::vector<T> a_log(e * n);
    for (std::size_t c = 0; c < e; ++c) {
      for (std::size_t s = 0; s < n; ++s) a_log[c * n + s] = static_cast<T>(std::log(static_cast<double>(s + 1)));
    }
    p.add(layer_name(l, "a_log"), Tensor<T>::from({e, n}, std::move(a_log)));
    p.add(layer_name(l, "d"), Tensor<T>::full({e}, T(1)));
    p.add(layer_name(l, "w_out"), init.uniform<T>({e, d}, bound_e));
  }
  p.add("final_norm", Tensor<T>::full({d}, T(1)));
  if (spec.head == Head::lm) {
    p.add("lm_head", init.uniform<T>({d, spec.vocab_size}, bound_d));
  } else {
    init_task_head(p, d, seed);
  }
  return p;
}

/// Borrowed view of one block's parameters.
template <class T>
struct LayerParams {
  const Tensor<T>& norm;
  const Tensor<T>& w_x;
  const Tensor<T>& w_z;
  const Tensor<T>& conv_kernel;
  const Tensor<T>& conv_bias;
  const Tensor<T>& w_delta;
  const Tensor<T>& b_delta;
  const Tensor<T>& w_b;
  const Tensor<T>& w_c;
  const Tensor<T>& a_log;
  const Tensor<T>& d;
  const Tensor<T>& w_out;
};

template <class T>
LayerParams<T> layer_params(const ParamSet<T>& p, std::size_t l) {
  using detail::layer_name;
  return {p.get(layer_name(l, "norm")),    p.get(layer_name(l, "w_x")),       p.get(layer_name(l, "w_z")),
          p.get(layer_name(l, "conv_kernel")), p.get(layer_name(l, "conv_bias")), p.get(layer_name(l, "w_delta")),
          p.get(layer_name(l, "b_delta")), p.get(layer_name(l, "w_b")),       p.get(layer_name(l, "w_c")),
          p.get(layer_name(l, "a_log")),   p.get(layer_name(l, "d")),         p.get(layer_name(l, "w_out"))};
}

/// One residual selective-SSM block over u[T x d_model].
template <class T>
Tensor<T> mamba_block(const Tensor<T>& u, const LayerParams<T>& lp,
                      ScanAlgorithm algo = ScanAlgorithm::parallel) {
  auto v = rmsnorm(u, lp.norm, static_cast<T>(kNormEps));
  auto x = matmul(v, lp.w_x);
  auto z = matmul(v, lp.w_z);
  x = silu(causal_depthwise_conv1d(x, lp.conv_kernel, lp.conv_bias));
  auto delta = softplus(add(matmul(x, lp.w_delta), lp.b_delta));
  auto B = matmul(x, lp.w_b);
  auto C = matmul(x, lp.w_c);
  auto A = neg(exp(lp.a_log));
  auto h = scan(discretize(delta, A, B, x), algo);
  auto y = add(ssm_readout(h, C), mul(x, lp.d));
  return add(matmul(mul(y, silu(z)), lp.w_out), u);
}

/// Embedding, all blocks and the final norm: hidden states [T x d_model].
template <class T>
Tensor<T> backbone(std::span<const TokenId> ids, const ModelSpec& spec, const ParamSet<T>& params,
                   ScanAlgorithm algo = ScanAlgorithm::parallel) {
  if (ids.empty()) throw DimensionError("empty token sequence");
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= spec.vocab_size) {
      throw DimensionError("token id " + std::to_string(id) + " out of range for vocab " +
                           std::to_string(spec.vocab_size));
    }
  }
  auto h = embedding(ids, params.get("embedding"));
  for (std::size_t l = 0; l < spec.n_layers; ++l) h = mamba_block(h, layer_params(params, l), algo);
  return rmsnorm(h, params.get("final_norm"), static_cast<T>(kNormEps));
}

/// Next-token logits [T x vocab]; row t scores token t + 1.
template <class T>
Tensor<T> forward_lm(std::span<const TokenId> ids, const ModelSpec& spec, const ParamSet<T>& params,
                     ScanAlgorithm algo = ScanAlgorithm::parallel) {
  if (!params.contains("lm_head")) throw ConfigError("forward_lm: parameters have no language-model head");
  return matmul(backbone(ids, spec, params, algo), params.get("lm_head"));
}

/// Raw task output, shape [1]: the regression value, or the logit for
/// binary classification. Hidden states are mean-pooled over non-PAD positions.
template <class T>
Tensor<T> forward_task(std::span<const TokenId> ids, const ModelSpec& spec, const ParamSet<T>& params,
                       ScanAlgorithm algo = ScanAlgorithm::parallel) {
  if (spec.head == Head::lm || !params.contains("head.weight")) {
    throw ConfigError("forward_task: model spec has head '" + to_string(spec.head) + "', not a task head");
  }
  auto h = backbone(ids, spec, params, algo);
  std::vector<std::uint8_t> keep(ids.size());
  for (std::size_t t = 0; t < ids.size(); ++t) keep[t] = ids[t] != vocab::kPad;
  auto pooled = masked_mean_rows(h, std::span<const std::uint8_t>(keep));
  return reshape(add(matmul(pooled, params.get("head.weight")), params.get("head.bias")), {1});
}

}  // namespace seqfn
