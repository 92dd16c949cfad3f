// seqfn: ingest protein corpora, pretrain, fine-tune, evaluate and predict.
//
// Exit codes: 0 ok, 2 numeric failure, 64 usage, 65 data format.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "seqfn/checkpoint.hpp"
#include "seqfn/config.hpp"
#include "seqfn/dataset.hpp"
#include "seqfn/fasta.hpp"
#include "seqfn/metrics.hpp"
#include "seqfn/pdb.hpp"
#include "seqfn/train.hpp"

namespace fs = std::filesystem;
using namespace seqfn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNumeric = 2;
constexpr int kExitUsage = 64;
constexpr int kExitData = 65;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_input(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("no ") + what + " given");
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " '" + path + "' does not exist");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError(std::string("cannot read ") + what + " '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  out << text;
}

template <class F>
int with_scalar(Mode mode, F&& f) {
  if (mode == Mode::fast) return f.template operator()<float>();
  return f.template operator()<double>();
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// ingest

struct IngestOptions {
  std::string pdb_dir;
  std::string fasta;
  std::string out;
  bool single_chain_only = false;
};

bool canonical_letters_ok(const std::string& seq, std::string& why) {
  try {
    encode(seq);
    return true;
  } catch (const FormatError& e) {
    why = e.what();
    return false;
  }
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

void print_frequencies(const std::vector<FastaRecord>& records) {
  std::vector<std::string> seqs;
  for (const auto& r : records) seqs.push_back(r.sequence);
  const auto report = vocab_frequencies(seqs);
  std::printf("sequences: %zu\n", report.sequences);
  std::printf("%-15s %-4s %9s\n", "amino acid", "code", "percent");
  for (std::size_t i = 0; i < 20; ++i) {
    std::printf("%-15s %-4c %8.2f%%\n", std::string(kResidueNames[i]).c_str(), vocab::kCanonical[i], report.percent(i));
  }
  std::printf("%-15s %-4s %8.2f%% (of all residues)\n", "unknown", "X", report.unknown_percent());
}

int cmd_ingest(const IngestOptions& o) {
  if (o.pdb_dir.empty() == o.fasta.empty()) throw UsageError("give exactly one of --pdb-dir or --fasta");
  std::vector<FastaRecord> records;
  std::size_t skipped = 0;
  if (!o.pdb_dir.empty()) {
    if (!fs::is_directory(o.pdb_dir)) throw UsageError("--pdb-dir '" + o.pdb_dir + "' is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(o.pdb_dir)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      const std::string name = file.filename().string();
      std::ifstream in(file, std::ios::binary);
      if (!in) {
        std::fprintf(stderr, "skipped %s: unreadable\n", name.c_str());
        ++skipped;
        continue;
      }
      std::ostringstream ss;
      ss << in.rdbuf();
      const auto pdb = parse_pdb(ss.str());
      for (const auto& w : pdb.warnings) std::fprintf(stderr, "%s: %s\n", name.c_str(), w.c_str());
      if (pdb.chains.empty()) {
        std::fprintf(stderr, "skipped %s: no SEQRES records\n", name.c_str());
        ++skipped;
        continue;
      }
      if (o.single_chain_only && !is_single_chain(pdb)) {
        std::fprintf(stderr, "skipped %s: %zu chains\n", name.c_str(), pdb.chains.size());
        ++skipped;
        continue;
      }
      for (const auto& chain : pdb.chains) {
        records.push_back({file.stem().string() + "_" + chain.chain_id, chain.sequence});
      }
    }
  } else {
    for (auto& r : parse_fasta(read_input(o.fasta, "--fasta file"))) {
      std::string why;
      r.sequence = upper(r.sequence);
      if (!canonical_letters_ok(r.sequence, why)) {
        std::fprintf(stderr, "skipped record '%s': %s\n", r.header.c_str(), why.c_str());
        ++skipped;
        continue;
      }
      records.push_back(std::move(r));
    }
  }
  if (records.empty()) {
    std::fprintf(stderr, "no sequences produced (%zu inputs skipped)\n", skipped);
    return kExitData;
  }
  write_text(o.out, write_fasta(records));
  print_frequencies(records);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// shared training plumbing

struct TrainOptions {
  std::string config;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_epochs;
};

RunConfig resolve_config(const TrainOptions& o, TrainConfig defaults) {
  RunConfig cfg = o.config.empty() ? run_config_from_json(nlohmann::json::object(), std::move(defaults))
                                   : load_run_config(o.config, std::move(defaults));
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.max_epochs) cfg.train.max_epochs = *o.max_epochs;
  cfg.mode = resolve_mode(cfg.mode);
  validate(cfg.train);
  return cfg;
}

fs::path prepare_out_dir(const std::string& dir) {
  if (dir.empty()) throw UsageError("no --out-dir given");
  fs::create_directories(dir);
  return dir;
}

/// Writes one JSON object per epoch to `log` and a progress line to stdout.
std::function<void(const EpochLog&)> epoch_logger(std::ofstream& log, std::string prefix = "") {
  return [&log, prefix](const EpochLog& e) {
    log << to_json(e).dump() << '\n';
    log.flush();
    const double rate = e.seconds > 0 ? static_cast<double>(e.tokens) / e.seconds : 0.0;
    std::printf("%sepoch %3zu  train_loss %.6f  %s %s  tokens/s %.0f%s\n", prefix.c_str(), e.epoch, e.train_loss,
                e.valid_name.c_str(), e.valid_value ? format_double(*e.valid_value).c_str() : "-", rate,
                e.improved ? "  *" : "");
    std::fflush(stdout);
  };
}

// ---------------------------------------------------------------------------
// pretrain

int cmd_pretrain(const TrainOptions& o, std::string corpus_path) {
  RunConfig cfg = resolve_config(o, TrainConfig::pretrain_defaults());
  if (corpus_path.empty()) corpus_path = cfg.data.corpus;
  const std::string text = read_input(corpus_path, "corpus");
  cfg.data.corpus = corpus_path;
  if (cfg.arch != "mamba") throw ConfigError("pretraining needs arch 'mamba'; the cnn baseline has no LM head");
  auto spec = std::get<ModelSpec>(cfg.arch_spec());
  spec.head = Head::lm;
  const auto dir = prepare_out_dir(o.out_dir);
  write_text(dir / "config.json", resolved_json(cfg, spec).dump(2) + "\n");

  std::vector<std::string> corpus;
  for (const auto& r : parse_fasta(text)) corpus.push_back(r.sequence);
  if (corpus.empty()) throw FormatError("corpus '" + corpus_path + "' has no records");

  std::ofstream log(dir / "train_log.jsonl", std::ios::trunc);
  cfg.train.on_epoch = epoch_logger(log);
  return with_scalar(cfg.mode, [&]<class T>() {
    const auto res = pretrain<T>(corpus, spec, cfg.train);
    save_checkpoint((dir / "checkpoint.ckpt").string(), res.checkpoint());
    if (res.divergence) {
      std::fprintf(stderr, "training diverged: %s\nlast good weights (epoch %zu) saved\n", res.divergence->c_str(),
                   res.best_epoch);
      return kExitNumeric;
    }
    std::printf("best epoch %zu  %s %s\n", res.best_epoch, res.metric.c_str(),
                res.best_value ? format_double(*res.best_value).c_str() : "-");
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// finetune

struct FinetuneOptions {
  std::string checkpoint;
  std::string data;
  std::string task;
  std::string arch;
  std::vector<std::uint64_t> seeds;
};

Head task_head(const std::string& task) {
  if (task == "regression") return Head::regression;
  if (task == "classification") return Head::binary_classification;
  throw UsageError("--task must be 'regression' or 'classification'");
}

std::vector<LabeledExample> load_dataset(const std::string& path, const ColumnMap& columns) {
  return load_labeled_csv(read_input(path, "dataset"), columns);
}

EvalReport single_split_report(const std::string& task, const std::string& split, const MetricValue& m) {
  return {task, m.metric, m.value, m.n_examples, {{split, m}}};
}

int cmd_finetune(const TrainOptions& o, FinetuneOptions f) {
  RunConfig cfg = resolve_config(o, TrainConfig::finetune_defaults());
  if (!f.arch.empty()) cfg.arch = f.arch;
  if (f.data.empty()) f.data = cfg.data.dataset;
  if (f.checkpoint.empty()) f.checkpoint = cfg.data.checkpoint;
  const Head head = task_head(f.task);
  const auto data = load_dataset(f.data, cfg.data.columns);
  cfg.data.dataset = f.data;
  cfg.data.checkpoint = f.checkpoint;

  std::optional<Checkpoint> base;
  if (!f.checkpoint.empty()) {
    if (!fs::is_regular_file(f.checkpoint)) throw UsageError("checkpoint '" + f.checkpoint + "' does not exist");
    base = load_checkpoint(f.checkpoint);
  }
  ArchSpec spec = cfg.arch_spec(base ? std::optional<ArchSpec>(base->spec) : std::nullopt);
  std::visit([&](auto& s) { s.head = head; }, spec);

  const auto dir = prepare_out_dir(o.out_dir);
  if (f.seeds.empty()) f.seeds.push_back(cfg.train.seed);
  const std::string task_name = fs::path(f.data).stem().string();
  std::vector<double> values;
  bool diverged = false;
  for (auto seed : f.seeds) {
    RunConfig run = cfg;
    run.train.seed = seed;
    const fs::path run_dir = f.seeds.size() == 1 ? dir : dir / ("seed_" + std::to_string(seed));
    fs::create_directories(run_dir);
    write_text(run_dir / "config.json", resolved_json(run, spec).dump(2) + "\n");
    std::ofstream log(run_dir / "train_log.jsonl", std::ios::trunc);
    run.train.on_epoch =
        epoch_logger(log, f.seeds.size() == 1 ? std::string() : "[seed " + std::to_string(seed) + "] ");
    const int code = with_scalar(run.mode, [&]<class T>() {
      const auto res = finetune<T>(spec, base ? &*base : nullptr, data, run.train);
      save_checkpoint((run_dir / "checkpoint.ckpt").string(), res.checkpoint());
      if (res.divergence) {
        std::fprintf(stderr, "training diverged: %s\n", res.divergence->c_str());
        return kExitNumeric;
      }
      const auto m = evaluate(res.best, select_split(data, Split::valid));
      write_text(run_dir / "report.json", to_json(single_split_report(task_name, "valid", m)).dump(2) + "\n");
      std::printf("%sbest epoch %zu  valid %s %s\n",
                  f.seeds.size() == 1 ? "" : ("[seed " + std::to_string(seed) + "] ").c_str(), res.best_epoch,
                  m.metric.c_str(), format_double(m.value).c_str());
      values.push_back(m.value);
      return kExitOk;
    });
    diverged = diverged || code == kExitNumeric;
  }
  if (f.seeds.size() > 1 && !values.empty()) {
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = values.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    std::printf("valid %s over %zu seeds: %.3f(%.3f)\n", metric_name(head).c_str(), values.size(), mean, sd);
    nlohmann::json summary{{"metric", metric_name(head)}, {"seeds", f.seeds}, {"values", values},
                           {"mean", mean},               {"std", sd}};
    write_text(dir / "summary.json", summary.dump(2) + "\n");
  }
  return diverged ? kExitNumeric : kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate / predict

template <class T>
Network<T> task_network(const std::string& path) {
  if (path.empty()) throw UsageError("no --checkpoint given");
  if (!fs::is_regular_file(path)) throw UsageError("checkpoint '" + path + "' does not exist");
  auto net = network_from_checkpoint<T>(load_checkpoint(path));
  if (net.head() == Head::lm) {
    throw ConfigError("checkpoint '" + path + "' has a language-model head; fine-tune it first");
  }
  return net;
}

struct EvaluateOptions {
  std::string config;
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string task_name;
  bool json = false;
};

int cmd_evaluate(const EvaluateOptions& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  const Split split = split_from_string(o.split);
  const auto data = load_dataset(o.data, cfg.data.columns);
  return with_scalar(resolve_mode(cfg.mode), [&]<class T>() {
    const auto net = task_network<T>(o.checkpoint);
    const auto selected = select_split(data, split);
    if (selected.empty()) throw FormatError("dataset has no '" + o.split + "' examples");
    const auto headline = evaluate(net, selected);
    EvalReport report{o.task_name.empty() ? fs::path(o.data).stem().string() : o.task_name, headline.metric,
                      headline.value, headline.n_examples, {}};
    for (Split s : {Split::train, Split::valid, Split::test}) {
      const auto part = select_split(data, s);
      if (part.empty()) continue;
      try {
        report.splits[to_string(s)] = evaluate(net, part);
      } catch (const UndefinedMetricError& e) {
        std::fprintf(stderr, "split %s: %s\n", to_string(s).c_str(), e.what());
      }
    }
    if (o.json) {
      std::printf("%s\n", to_json(report).dump(2).c_str());
    } else {
      std::printf("task %s  split %s  %s %s  n %zu\n\n%s", report.task.c_str(), o.split.c_str(),
                  report.metric.c_str(), format_double(report.value).c_str(), report.n_examples,
                  render_table(report).c_str());
    }
    return kExitOk;
  });
}

int cmd_predict(const std::string& checkpoint, const std::string& fasta) {
  const auto records = parse_fasta(read_input(fasta, "--fasta file"));
  return with_scalar(resolve_mode(Mode::reference), [&]<class T>() {
    const auto net = task_network<T>(checkpoint);
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      std::string id = r.header.substr(0, r.header.find_first_of(" \t"));
      if (id.empty()) id = "seq" + std::to_string(i + 1);
      std::printf("%s\t%s\n", id.c_str(), format_double(static_cast<double>(net.predict(encode(r.sequence).ids))).c_str());
    }
    return kExitOk;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seqfn: selective state-space protein sequence models"};
  app.require_subcommand(1);

  IngestOptions ingest;
  auto* ing = app.add_subcommand("ingest", "Build a FASTA corpus from PDB files or a FASTA file");
  ing->add_option("--pdb-dir", ingest.pdb_dir, "Directory of PDB files");
  ing->add_option("--fasta", ingest.fasta, "FASTA file to normalize");
  ing->add_option("--out", ingest.out, "Output FASTA corpus")->required();
  ing->add_flag("--single-chain-only", ingest.single_chain_only, "Keep only entries with exactly one chain");

  TrainOptions pre_opts;
  std::string corpus;
  auto* pre = app.add_subcommand("pretrain", "Next-token pretraining on a FASTA corpus");
  pre->add_option("--config", pre_opts.config, "JSON run config");
  pre->add_option("--corpus", corpus, "FASTA corpus");
  pre->add_option("--out-dir", pre_opts.out_dir, "Run directory")->required();
  pre->add_option("--seed", pre_opts.seed, "Random seed (overrides the config)");
  pre->add_option("--max-epochs", pre_opts.max_epochs, "Epoch limit (overrides the config)");

  TrainOptions ft_opts;
  FinetuneOptions ft;
  auto* fin = app.add_subcommand("finetune", "Supervised fine-tuning on a labeled CSV");
  fin->add_option("--config", ft_opts.config, "JSON run config");
  fin->add_option("--checkpoint", ft.checkpoint, "Pretrained checkpoint (omit to train from scratch)");
  fin->add_option("--data", ft.data, "CSV with sequence,label,split columns");
  fin->add_option("--task", ft.task, "regression or classification")
      ->required()
      ->check(CLI::IsMember({"regression", "classification"}));
  fin->add_option("--arch", ft.arch, "mamba or cnn (overrides the config)")
      ->check(CLI::IsMember({"mamba", "cnn"}));
  fin->add_option("--out-dir", ft_opts.out_dir, "Run directory")->required();
  fin->add_option("--seed", ft_opts.seed, "Random seed (overrides the config)");
  fin->add_option("--seeds", ft.seeds, "Comma-separated seeds; reports mean(std)")->delimiter(',');
  fin->add_option("--max-epochs", ft_opts.max_epochs, "Epoch limit (overrides the config)");

  EvaluateOptions ev;
  auto* eva = app.add_subcommand("evaluate", "Score a fine-tuned checkpoint on one split");
  eva->add_option("--config", ev.config, "JSON run config (column names, mode)");
  eva->add_option("--checkpoint", ev.checkpoint, "Fine-tuned checkpoint")->required();
  eva->add_option("--data", ev.data, "Labeled CSV")->required();
  eva->add_option("--split", ev.split, "train, valid or test")
      ->capture_default_str()
      ->check(CLI::IsMember({"train", "valid", "test"}));
  eva->add_option("--task-name", ev.task_name, "Name recorded in the report (default: CSV file stem)");
  eva->add_flag("--json", ev.json, "Print the report as JSON");

  std::string pred_ckpt, pred_fasta;
  auto* prd = app.add_subcommand("predict", "Per-sequence predictions for a FASTA file");
  prd->add_option("--checkpoint", pred_ckpt, "Fine-tuned checkpoint")->required();
  prd->add_option("--fasta", pred_fasta, "Input sequences")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (ing->parsed()) return cmd_ingest(ingest);
    if (pre->parsed()) return cmd_pretrain(pre_opts, corpus);
    if (fin->parsed()) return cmd_finetune(ft_opts, ft);
    if (eva->parsed()) return cmd_evaluate(ev);
    if (prd->parsed()) return cmd_predict(pred_ckpt, pred_fasta);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const CheckpointError& e) {
    std::fprintf(stderr, "checkpoint error: %s\n", e.what());
    return kExitData;
  } catch (const UndefinedMetricError& e) {
    std::fprintf(stderr, "metric error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitUsage;
}
