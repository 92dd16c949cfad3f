#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "seqfn/errors.hpp"
#include "seqfn/params.hpp"

namespace seqfn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers keyed by parameter name.
struct OptimState {
  AdamConfig config;
  std::size_t step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

/// One bias-corrected Adam update over every parameter with a gradient.
/// All gradients are checked before anything is modified: a non-finite value
/// aborts the step with the parameter's name and leaves params and state as they were.
template <class T>
void adam_step(ParamSet<T>& params, OptimState& state) {
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) continue;
    for (auto g : t.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + name + "'");
    }
  }
  ++state.step;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (auto& [name, t] : params) {
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != t.numel()) {
      m.assign(t.numel(), 0.0);
      v.assign(t.numel(), 0.0);
    }
    auto w = t.update_data();
    const bool has = t.has_grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = has ? static_cast<double>(t.grad()[i]) : 0.0;
      m[i] = c.beta1 * m[i] + (1 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1 - c.beta2) * g * g;
      const double mhat = m[i] / bc1, vhat = v[i] / bc2;
      w[i] = static_cast<T>(static_cast<double>(w[i]) - c.lr * mhat / (std::sqrt(vhat) + c.eps));
    }
  }
}

template <class T>
double grad_global_norm(const ParamSet<T>& params) {
  double ss = 0;
  for (const auto& [_, t] : params) {
    if (!t.has_grad()) continue;
    for (auto g : t.grad()) ss += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(ss);
}

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns true when clipping happened.
template <class T>
bool clip_grad_norm(ParamSet<T>& params, double max_norm) {
  const double norm = grad_global_norm(params);
  if (!(norm > max_norm)) return false;
  const double s = max_norm / norm;
  for (auto& [_, t] : params) {
    if (!t.has_grad()) continue;
    for (auto& g : t.mutable_grad()) g = static_cast<T>(g * s);
  }
  return true;
}

}  // namespace seqfn
