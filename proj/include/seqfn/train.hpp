#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "seqfn/checkpoint.hpp"
#include "seqfn/batching.hpp"
#include "seqfn/dataset.hpp"
#include "seqfn/losses.hpp"
#include "seqfn/metrics.hpp"
#include "seqfn/network.hpp"
#include "seqfn/optim.hpp"

namespace seqfn {

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::string valid_name;             // valid_loss, valid_spearman or valid_accuracy
  std::optional<double> valid_value;  // empty on epochs without evaluation
  std::size_t tokens = 0;
  std::size_t steps = 0;
  std::size_t clipped_steps = 0;
  bool improved = false;
  double seconds = 0.0;
};

/// Log-file form of an epoch. Wall-clock figures are left out so that
/// seeded runs produce identical files.
inline nlohmann::json to_json(const EpochLog& e) {
  nlohmann::json j{{"epoch", e.epoch},   {"train_loss", e.train_loss},       {"tokens", e.tokens},
                   {"steps", e.steps},   {"clipped_steps", e.clipped_steps}, {"improved", e.improved}};
  j[e.valid_name] = e.valid_value ? nlohmann::json(*e.valid_value) : nlohmann::json(nullptr);
  return j;
}

struct TrainConfig {
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  std::size_t max_tokens = 2048;  // per optimizer step, rows x padded width
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;
  AdamConfig adam;
  double clip_norm = 1.0;
  double valid_fraction = 0.05;  // pretraining hold-out
  std::function<void(const EpochLog&)> on_epoch;

  static TrainConfig pretrain_defaults() { return {}; }
  static TrainConfig finetune_defaults() {
    TrainConfig c;
    c.max_epochs = 50;
    return c;
  }
};

inline void validate(const TrainConfig& c) {
  if (c.max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (c.patience < 1) throw ConfigError("patience must be at least 1");
  if (c.eval_every < 1) throw ConfigError("eval_every must be at least 1");
  if (c.max_tokens < 1) throw ConfigError("max_tokens must be at least 1");
  if (!(c.adam.lr >= 0)) throw ConfigError("lr must be non-negative");
  if (!(c.clip_norm > 0)) throw ConfigError("clip_norm must be positive");
  if (!(c.valid_fraction >= 0 && c.valid_fraction < 1)) throw ConfigError("valid_fraction must be in [0, 1)");
}

template <class T>
struct TrainResult {
  Network<T> best;
  OptimState optim;  // state that produced `best`
  std::vector<EpochLog> history;
  std::size_t best_epoch = 0;  // 0: the initial weights
  std::optional<double> best_value;
  std::string metric;
  bool stopped_early = false;
  std::optional<std::string> divergence;

  nlohmann::json metadata() const {
    nlohmann::json j{{"epochs_run", history.size()},
                     {"best_epoch", best_epoch},
                     {"metric", metric},
                     {"stopped_early", stopped_early},
                     {"diverged", divergence.has_value()}};
    j["best_value"] = best_value ? nlohmann::json(*best_value) : nlohmann::json(nullptr);
    return j;
  }
  Checkpoint checkpoint() const { return make_checkpoint(best, &optim, metadata()); }
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Stable hold-out membership: depends only on the sequence text.
inline bool in_holdout(std::string_view seq, double fraction) {
  return static_cast<double>(fnv1a(seq) % 1000000) < fraction * 1000000.0;
}

template <class T>
Network<T> snapshot(const Network<T>& net) {
  return {net.spec, net.params.clone(), net.scan};
}

class EarlyStopper {
 public:
  EarlyStopper(std::size_t patience, bool higher_is_better) : patience_(patience), higher_(higher_is_better) {}

  bool observe(double value) {
    const bool better = !best_ || (higher_ ? value > *best_ : value < *best_);
    if (better) {
      best_ = value;
      stale_ = 0;
    } else {
      ++stale_;
    }
    return better;
  }
  bool should_stop() const { return stale_ >= patience_; }
  std::optional<double> best() const { return best_; }

 private:
  std::size_t patience_;
  bool higher_;
  std::optional<double> best_;
  std::size_t stale_ = 0;
};

inline std::size_t longest(const std::vector<TokenSequence>& seqs) {
  std::size_t n = 0;
  for (const auto& s : seqs) n = std::max(n, s.ids.size());
  return n;
}

template <class T>
std::size_t optimizer_step(ParamSet<T>& params, OptimState& optim, double clip_norm) {
  const bool clipped = clip_grad_norm(params, clip_norm);
  adam_step(params, optim);
  return clipped ? 1 : 0;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Token-weighted mean next-token loss over `seqs`.
template <class T>
double mean_lm_loss(const Network<T>& net, const std::vector<TokenSequence>& seqs) {
  NoGradGuard no_grad;
  double total = 0;
  std::size_t count = 0;
  for (const auto& s : seqs) {
    const auto targets = next_token_targets(s.ids);
    total += static_cast<double>(cross_entropy_sum(net.forward_lm(s.ids), targets).item());
    count += count_targets(targets);
  }
  if (count == 0) throw DimensionError("mean_lm_loss: no prediction targets");
  return total / static_cast<double>(count);
}

inline std::vector<TokenSequence> encode_all(const std::vector<std::string>& corpus) {
  std::vector<TokenSequence> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) out.push_back(encode(s));
  return out;
}

/// Next-token pretraining with early stopping on a hashed hold-out slice.
/// Returns the weights with the lowest validation loss; if a loss or
/// gradient goes non-finite, training stops and the last good weights are
/// returned with `divergence` set.
template <class T>
TrainResult<T> pretrain(const std::vector<std::string>& corpus, ModelSpec spec, const TrainConfig& cfg) {
  validate(cfg);
  if (corpus.empty()) throw ConfigError("pretrain: corpus is empty");
  spec.head = Head::lm;
  std::vector<TokenSequence> train, valid;
  for (const auto& s : corpus) (detail::in_holdout(s, cfg.valid_fraction) ? valid : train).push_back(encode(s));
  if (train.empty()) std::swap(train, valid);

  auto net = Network<T>::init(spec, cfg.seed);
  OptimState optim;
  optim.config = cfg.adam;
  TrainResult<T> res;
  res.best = detail::snapshot(net);
  res.optim = optim;
  res.metric = valid.empty() ? "train_loss" : "valid_loss";
  detail::EarlyStopper stopper(cfg.patience, false);
  const std::size_t max_tokens = std::max(cfg.max_tokens, detail::longest(train));

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochLog log;
    log.epoch = epoch;
    log.valid_name = "valid_loss";
    double loss_sum = 0;
    std::size_t target_count = 0;
    try {
      const auto plan = make_batches(train, max_tokens, cfg.seed + epoch, true);
      for (const auto& batch : plan.batches) {
        std::size_t n = 0;
        for (auto i : batch.indices) n += count_targets(next_token_targets(train[i].ids));
        if (n == 0) continue;
        net.params.zero_grad();
        for (auto i : batch.indices) {
          const auto& ids = train[i].ids;
          auto ce = cross_entropy_sum(net.forward_lm(ids), next_token_targets(ids));
          if (!std::isfinite(static_cast<double>(ce.item()))) {
            throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
          }
          loss_sum += static_cast<double>(ce.item());
          backward(scale(ce, T(1) / static_cast<T>(n)));
          log.tokens += ids.size();
        }
        target_count += n;
        log.clipped_steps += detail::optimizer_step(net.params, optim, cfg.clip_norm);
        ++log.steps;
      }
      log.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(target_count, 1));
      if (epoch % cfg.eval_every == 0 || epoch == cfg.max_epochs) {
        const double v = valid.empty() ? log.train_loss : mean_lm_loss(net, valid);
        if (!std::isfinite(v)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
        log.valid_value = v;
        log.improved = stopper.observe(v);
      }
    } catch (const NumericError& e) {
      res.divergence = e.what();
      break;
    }
    if (log.improved) {
      res.best = detail::snapshot(net);
      res.optim = optim;
      res.best_epoch = epoch;
      res.best_value = log.valid_value;
    }
    log.seconds = detail::seconds_since(t0);
    res.history.push_back(log);
    if (cfg.on_epoch) cfg.on_epoch(log);
    if (log.valid_value && stopper.should_stop()) {
      res.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  return res;
}

/// Model outputs for `examples` (probabilities for classification heads).
template <class T>
std::vector<double> predict_all(const Network<T>& net, const std::vector<TokenSequence>& seqs) {
  std::vector<double> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(static_cast<double>(net.predict(s.ids)));
  return out;
}

inline std::string metric_name(Head head) { return head == Head::binary_classification ? "accuracy" : "spearman"; }

/// Spearman for regression, accuracy for classification.
inline double task_metric(Head head, std::span<const double> pred, std::span<const double> truth) {
  return head == Head::binary_classification ? accuracy(pred, truth) : spearman(pred, truth);
}

/// Encodes examples, attaching the CSV line to any tokenizer error.
inline std::vector<TokenSequence> encode_examples(const std::vector<LabeledExample>& examples) {
  std::vector<TokenSequence> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    try {
      out.push_back(encode(ex.sequence));
    } catch (const FormatError& e) {
      throw FormatError(e.what(), ex.line);
    }
  }
  return out;
}

inline std::vector<double> labels_of(const std::vector<LabeledExample>& examples) {
  std::vector<double> y;
  y.reserve(examples.size());
  for (const auto& ex : examples) y.push_back(ex.label);
  return y;
}

template <class T>
MetricValue evaluate(const Network<T>& net, const std::vector<LabeledExample>& examples) {
  const auto seqs = encode_examples(examples);
  const auto pred = predict_all(net, seqs);
  const auto truth = labels_of(examples);
  if (net.head() == Head::binary_classification) require_binary_labels(examples);
  return {metric_name(net.head()), task_metric(net.head(), pred, truth), examples.size()};
}

/// Names the first architecture field on which two specs disagree (the head
/// kind is not compared), or returns nullopt when they are compatible.
inline std::optional<std::string> spec_mismatch(const ArchSpec& checkpoint, const ArchSpec& requested) {
  auto a = to_json(checkpoint), b = to_json(requested);
  a.erase("head");
  b.erase("head");
  for (const auto& [key, value] : b.items()) {
    if (!a.contains(key) || a[key] != value) {
      return "checkpoint " + key + " is " + (a.contains(key) ? a[key].dump() : std::string("absent")) +
             " but the run requests " + value.dump();
    }
  }
  return std::nullopt;
}

/// Copies every non-head parameter of `base` into `net`.
template <class T>
void load_backbone(Network<T>& net, const Checkpoint& base) {
  for (auto& [name, t] : net.params) {
    if (name.starts_with("head.") || name == "lm_head") continue;
    const auto* rec = base.find(name);
    if (!rec) throw CheckpointError("checkpoint has no parameter '" + name + "'");
    if (rec->shape != t.shape()) {
      throw CheckpointError("parameter '" + name + "' is " + shape_str(rec->shape) + " in the checkpoint, expected " +
                            shape_str(t.shape()));
    }
    auto dst = t.update_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(rec->values[i]);
  }
}

/// Supervised training of every parameter on the train split, early-stopped
/// on the valid-split metric. With `base`, backbone weights come from the
/// checkpoint and a fresh task head is initialized; without it the run
/// starts from random weights. Optimizer state always starts fresh.
template <class T>
TrainResult<T> finetune(const ArchSpec& spec, const Checkpoint* base, const std::vector<LabeledExample>& data,
                        const TrainConfig& cfg) {
  validate(cfg);
  const Head head = head_of(spec);
  if (head == Head::lm) throw ConfigError("finetune needs a regression or classification head");
  if (base) {
    if (arch_name(base->spec) != arch_name(spec)) {
      throw ConfigError("checkpoint arch is " + arch_name(base->spec) + " but the run requests " + arch_name(spec));
    }
    if (auto why = spec_mismatch(base->spec, spec)) throw ConfigError("spec mismatch: " + *why);
  }
  const auto train_ex = select_split(data, Split::train);
  const auto valid_ex = select_split(data, Split::valid);
  if (train_ex.empty()) throw FormatError("dataset has no 'train' examples");
  if (valid_ex.empty()) throw FormatError("dataset has no 'valid' examples");
  if (head == Head::binary_classification) require_binary_labels(data);
  const auto train = encode_examples(train_ex);
  const auto valid = encode_examples(valid_ex);
  const auto train_y = labels_of(train_ex);
  const auto valid_y = labels_of(valid_ex);

  auto net = Network<T>::init(spec, cfg.seed);
  if (base) load_backbone(net, *base);
  OptimState optim;
  optim.config = cfg.adam;
  TrainResult<T> res;
  res.best = detail::snapshot(net);
  res.optim = optim;
  res.metric = "valid_" + metric_name(head);
  detail::EarlyStopper stopper(cfg.patience, true);
  const std::size_t max_tokens = std::max(cfg.max_tokens, detail::longest(train));

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochLog log;
    log.epoch = epoch;
    log.valid_name = res.metric;
    double loss_sum = 0;
    try {
      const auto plan = make_batches(train, max_tokens, cfg.seed + epoch, true);
      for (const auto& batch : plan.batches) {
        net.params.zero_grad();
        const T inv = T(1) / static_cast<T>(batch.size());
        for (auto i : batch.indices) {
          const auto pred = net.forward_task(train[i].ids);
          auto loss = task_loss<T>(std::span(&pred, 1), std::span(&train_y[i], 1), head);
          if (!std::isfinite(static_cast<double>(loss.item()))) {
            throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
          }
          loss_sum += static_cast<double>(loss.item());
          backward(scale(loss, inv));
          log.tokens += train[i].ids.size();
        }
        log.clipped_steps += detail::optimizer_step(net.params, optim, cfg.clip_norm);
        ++log.steps;
      }
      log.train_loss = loss_sum / static_cast<double>(train.size());
      if (epoch % cfg.eval_every == 0 || epoch == cfg.max_epochs) {
        const auto pred = predict_all(net, valid);
        for (double p : pred) {
          if (!std::isfinite(p)) throw NumericError("non-finite prediction at epoch " + std::to_string(epoch));
        }
        double v = -std::numeric_limits<double>::infinity();
        try {
          v = task_metric(head, pred, valid_y);
        } catch (const UndefinedMetricError&) {
          // constant predictions rank as the worst possible score
        }
        log.valid_value = v;
        log.improved = stopper.observe(v);
      }
    } catch (const NumericError& e) {
      res.divergence = e.what();
      break;
    }
    if (log.improved) {
      res.best = detail::snapshot(net);
      res.optim = optim;
      res.best_epoch = epoch;
      res.best_value = log.valid_value;
    }
    log.seconds = detail::seconds_since(t0);
    res.history.push_back(log);
    if (cfg.on_epoch) cfg.on_epoch(log);
    if (log.valid_value && stopper.should_stop()) {
      res.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  return res;
}

}  // namespace seqfn
