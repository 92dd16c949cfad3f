#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include "json.hpp"

#include "seqfn/errors.hpp"
#include "seqfn/network.hpp"

namespace seqfn {

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                                const std::string& where) {
  if (!j.is_object()) throw ConfigError("'" + where + "' must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class V>
void read_field(const nlohmann::json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("field '" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

}  // namespace detail

inline nlohmann::json to_json(const ModelSpec& s) {
  return {{"vocab_size", s.vocab_size}, {"d_model", s.d_model},         {"n_layers", s.n_layers},
          {"d_state", s.d_state},       {"expand", s.expand},           {"conv_kernel", s.conv_kernel},
          {"head", to_string(s.head)}};
}

inline nlohmann::json to_json(const CnnSpec& s) {
  return {{"vocab_size", s.vocab_size}, {"embed_dim", s.embed_dim}, {"filters", s.filters},
          {"kernels", s.kernels},       {"head", to_string(s.head)}};
}

/// Overlays the keys present in `j` onto `base`; unknown keys are rejected.
inline ModelSpec model_spec_from_json(const nlohmann::json& j, ModelSpec base = {}) {
  const std::string where = "model spec";
  detail::reject_unknown_keys(j, {"vocab_size", "d_model", "n_layers", "d_state", "expand", "conv_kernel", "head"},
                              where);
  detail::read_field(j, "vocab_size", base.vocab_size, where);
  detail::read_field(j, "d_model", base.d_model, where);
  detail::read_field(j, "n_layers", base.n_layers, where);
  detail::read_field(j, "d_state", base.d_state, where);
  detail::read_field(j, "expand", base.expand, where);
  detail::read_field(j, "conv_kernel", base.conv_kernel, where);
  std::string head = to_string(base.head);
  detail::read_field(j, "head", head, where);
  base.head = head_from_string(head);
  return base;
}

inline CnnSpec cnn_spec_from_json(const nlohmann::json& j, CnnSpec base = {}) {
  const std::string where = "cnn spec";
  detail::reject_unknown_keys(j, {"vocab_size", "embed_dim", "filters", "kernels", "head"}, where);
  detail::read_field(j, "vocab_size", base.vocab_size, where);
  detail::read_field(j, "embed_dim", base.embed_dim, where);
  detail::read_field(j, "filters", base.filters, where);
  detail::read_field(j, "kernels", base.kernels, where);
  std::string head = to_string(base.head);
  detail::read_field(j, "head", head, where);
  base.head = head_from_string(head);
  return base;
}

inline nlohmann::json to_json(const ArchSpec& spec) {
  auto j = std::visit([](const auto& s) { return to_json(s); }, spec);
  j["arch"] = arch_name(spec);
  return j;
}

inline ArchSpec arch_spec_from_json(nlohmann::json j) {
  if (!j.contains("arch")) throw ConfigError("spec has no 'arch' field");
  const auto arch = j.at("arch").get<std::string>();
  j.erase("arch");
  if (arch == "mamba") return model_spec_from_json(j);
  if (arch == "cnn") return cnn_spec_from_json(j);
  throw ConfigError("unknown arch '" + arch + "'");
}

}  // namespace seqfn
