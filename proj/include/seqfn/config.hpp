#pragma once

#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "json.hpp"

#include "seqfn/dataset.hpp"
#include "seqfn/spec_json.hpp"
#include "seqfn/train.hpp"

namespace seqfn {

enum class Mode { reference, fast };  // 64-bit and 32-bit scalars

inline Mode mode_from_string(const std::string& s) {
  if (s == "reference") return Mode::reference;
  if (s == "fast") return Mode::fast;
  throw ConfigError("mode must be 'reference' or 'fast', got '" + s + "'");
}

inline std::string to_string(Mode m) { return m == Mode::fast ? "fast" : "reference"; }

struct DataPaths {
  std::string corpus;
  std::string dataset;
  std::string checkpoint;
  ColumnMap columns;
};

/// A run configuration document. Every key is optional; keys not listed in
/// the README are rejected.
///
///   {"arch": "mamba" | "cnn",
///    "model": {vocab_size, d_model, n_layers, d_state, expand, conv_kernel, head},
///    "cnn":   {vocab_size, embed_dim, filters, kernels, head},
///    "train": {max_epochs, patience, max_tokens, seed, eval_every, lr, beta1, beta2, eps,
///              clip_norm, valid_fraction},
///    "data":  {corpus, dataset, checkpoint, sequence_column, label_column, split_column},
///    "mode":  "reference" | "fast"}
struct RunConfig {
  std::string arch = "mamba";
  nlohmann::json model = nlohmann::json::object();
  nlohmann::json cnn = nlohmann::json::object();
  TrainConfig train;
  DataPaths data;
  Mode mode = Mode::reference;

  /// The architecture spec with config values overlaid on `base`.
  ArchSpec arch_spec(const std::optional<ArchSpec>& base = std::nullopt) const {
    if (arch == "mamba") {
      const auto* b = base ? std::get_if<ModelSpec>(&*base) : nullptr;
      auto s = model_spec_from_json(model, b ? *b : ModelSpec{});
      validate(s);
      return s;
    }
    if (arch == "cnn") {
      const auto* b = base ? std::get_if<CnnSpec>(&*base) : nullptr;
      auto s = cnn_spec_from_json(cnn, b ? *b : CnnSpec{});
      return s;
    }
    throw ConfigError("arch must be 'mamba' or 'cnn', got '" + arch + "'");
  }
};

/// `defaults` supplies the command-specific training defaults.
inline RunConfig run_config_from_json(const nlohmann::json& j, TrainConfig defaults = {}) {
  using detail::read_field;
  detail::reject_unknown_keys(j, {"arch", "model", "cnn", "train", "data", "mode"}, "config");
  RunConfig c;
  c.train = std::move(defaults);
  read_field(j, "arch", c.arch, "config");
  if (j.contains("model")) {
    c.model = j.at("model");
    model_spec_from_json(c.model);
  }
  if (j.contains("cnn")) {
    c.cnn = j.at("cnn");
    cnn_spec_from_json(c.cnn);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    const std::string where = "train";
    detail::reject_unknown_keys(t,
                                {"max_epochs", "patience", "max_tokens", "seed", "eval_every", "lr", "beta1", "beta2",
                                 "eps", "clip_norm", "valid_fraction"},
                                where);
    read_field(t, "max_epochs", c.train.max_epochs, where);
    read_field(t, "patience", c.train.patience, where);
    read_field(t, "max_tokens", c.train.max_tokens, where);
    read_field(t, "seed", c.train.seed, where);
    read_field(t, "eval_every", c.train.eval_every, where);
    read_field(t, "lr", c.train.adam.lr, where);
    read_field(t, "beta1", c.train.adam.beta1, where);
    read_field(t, "beta2", c.train.adam.beta2, where);
    read_field(t, "eps", c.train.adam.eps, where);
    read_field(t, "clip_norm", c.train.clip_norm, where);
    read_field(t, "valid_fraction", c.train.valid_fraction, where);
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    const std::string where = "data";
    detail::reject_unknown_keys(d, {"corpus", "dataset", "checkpoint", "sequence_column", "label_column", "split_column"},
                                where);
    read_field(d, "corpus", c.data.corpus, where);
    read_field(d, "dataset", c.data.dataset, where);
    read_field(d, "checkpoint", c.data.checkpoint, where);
    read_field(d, "sequence_column", c.data.columns.sequence, where);
    read_field(d, "label_column", c.data.columns.label, where);
    read_field(d, "split_column", c.data.columns.split, where);
  }
  std::string mode = to_string(c.mode);
  read_field(j, "mode", mode, "config");
  c.mode = mode_from_string(mode);
  validate(c.train);
  return c;
}

inline RunConfig load_run_config(const std::string& path, TrainConfig defaults = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j, std::move(defaults));
}

/// SEQFN_MODE, when set, wins over the config file.
inline Mode resolve_mode(Mode configured) {
  if (const char* env = std::getenv("SEQFN_MODE"); env && *env) return mode_from_string(env);
  return configured;
}

/// Fully resolved document: feeding it back to run_config_from_json
/// reproduces the same run.
inline nlohmann::json resolved_json(const RunConfig& c, const ArchSpec& spec) {
  nlohmann::json j;
  j["arch"] = arch_name(spec);
  auto s = to_json(spec);
  s.erase("arch");
  j[arch_name(spec) == "mamba" ? "model" : "cnn"] = s;
  const auto& t = c.train;
  j["train"] = {{"max_epochs", t.max_epochs}, {"patience", t.patience},       {"max_tokens", t.max_tokens},
                {"seed", t.seed},             {"eval_every", t.eval_every},   {"lr", t.adam.lr},
                {"beta1", t.adam.beta1},      {"beta2", t.adam.beta2},        {"eps", t.adam.eps},
                {"clip_norm", t.clip_norm},   {"valid_fraction", t.valid_fraction}};
  j["data"] = {{"corpus", c.data.corpus},
               {"dataset", c.data.dataset},
               {"checkpoint", c.data.checkpoint},
               {"sequence_column", c.data.columns.sequence},
               {"label_column", c.data.columns.label},
               {"split_column", c.data.columns.split}};
  j["mode"] = to_string(c.mode);
  return j;
}

}  // namespace seqfn
