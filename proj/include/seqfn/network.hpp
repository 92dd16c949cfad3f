#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>

#include "seqfn/cnn.hpp"
#include "seqfn/mamba.hpp"

namespace seqfn {

using ArchSpec = std::variant<ModelSpec, CnnSpec>;

inline std::string arch_name(const ArchSpec& spec) {
  return std::holds_alternative<ModelSpec>(spec) ? "mamba" : "cnn";
}

inline Head head_of(const ArchSpec& spec) {
  return std::visit([](const auto& s) { return s.head; }, spec);
}

/// A model of either architecture with its parameters.
template <class T>
struct Network {
  ArchSpec spec;
  ParamSet<T> params;
  ScanAlgorithm scan = ScanAlgorithm::parallel;

  static Network init(const ArchSpec& spec, std::uint64_t seed) {
    if (const auto* m = std::get_if<ModelSpec>(&spec)) return {spec, init_params<T>(*m, seed)};
    return {spec, init_cnn_params<T>(std::get<CnnSpec>(spec), seed)};
  }

  Head head() const { return head_of(spec); }

  /// Raw scalar output [1] (logit for classification).
  Tensor<T> forward_task(std::span<const TokenId> ids) const {
    if (const auto* m = std::get_if<ModelSpec>(&spec)) return seqfn::forward_task(ids, *m, params, scan);
    return forward_cnn(ids, std::get<CnnSpec>(spec), params);
  }

  Tensor<T> forward_lm(std::span<const TokenId> ids) const {
    const auto* m = std::get_if<ModelSpec>(&spec);
    if (!m) throw ConfigError("the cnn baseline has no language-model head");
    return seqfn::forward_lm(ids, *m, params, scan);
  }

  /// Inference value: regression output, or a probability for classification.
  T predict(std::span<const TokenId> ids) const {
    NoGradGuard no_grad;
    const T raw = forward_task(ids).item();
    return head() == Head::binary_classification ? detail::stable_sigmoid(raw) : raw;
  }
};

}  // namespace seqfn
