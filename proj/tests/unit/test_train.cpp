#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "seqfn/train.hpp"

using namespace seqfn;

namespace {

ModelSpec tiny_spec(Head head = Head::lm) {
  ModelSpec s;
  s.d_model = 8;
  s.n_layers = 1;
  s.d_state = 4;
  s.head = head;
  return s;
}

std::vector<std::string> corpus(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string s(10 + rng() % 10, 'A');
    for (auto& c : s) c = vocab::kCanonical[rng() % 20];
    out.push_back(s);
  }
  return out;
}

std::vector<LabeledExample> a_fraction_dataset(std::size_t n_train, std::size_t n_valid, std::uint64_t seed,
                                               bool binary) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledExample> out;
  for (std::size_t i = 0; i < n_train + n_valid; ++i) {
    const double p = std::uniform_real_distribution<double>(0, 0.6)(rng);
    std::string s(12, 'G');
    std::size_t a = 0;
    for (auto& c : s) {
      c = std::uniform_real_distribution<double>(0, 1)(rng) < p ? 'A' : vocab::kCanonical[1 + rng() % 19];
      a += c == 'A';
    }
    const double frac = static_cast<double>(a) / static_cast<double>(s.size());
    out.push_back({s, binary ? double(frac > 0.3) : frac, i < n_train ? Split::train : Split::valid, i + 2});
  }
  return out;
}

}  // namespace

TEST(Pretrain, FrozenWeightsStopAfterTwoEpochs) {
  auto cfg = TrainConfig::pretrain_defaults();
  cfg.adam.lr = 0.0;
  cfg.patience = 1;
  const auto res = pretrain<double>(corpus(20, 1), tiny_spec(), cfg);
  EXPECT_EQ(res.history.size(), 2u);
  EXPECT_TRUE(res.stopped_early);
  EXPECT_EQ(res.best_epoch, 1u);
}

TEST(Pretrain, SeededRunsAreIdentical) {
  auto cfg = TrainConfig::pretrain_defaults();
  cfg.max_epochs = 3;
  cfg.max_tokens = 64;
  cfg.seed = 7;
  const auto a = pretrain<double>(corpus(30, 2), tiny_spec(), cfg);
  const auto b = pretrain<double>(corpus(30, 2), tiny_spec(), cfg);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(to_json(a.history[i]), to_json(b.history[i]));
  EXPECT_EQ(serialize_checkpoint(a.checkpoint()), serialize_checkpoint(b.checkpoint()));
}

TEST(Pretrain, LossDecreasesAndBestIsNeverWorseThanObserved) {
  auto cfg = TrainConfig::pretrain_defaults();
  cfg.max_epochs = 8;
  cfg.max_tokens = 64;
  cfg.adam.lr = 1e-2;
  cfg.valid_fraction = 0.3;
  const auto res = pretrain<double>(corpus(40, 3), tiny_spec(), cfg);
  EXPECT_LT(res.history.back().train_loss, res.history.front().train_loss);
  ASSERT_TRUE(res.best_value.has_value());
  for (const auto& e : res.history) EXPECT_LE(*res.best_value, *e.valid_value);
  EXPECT_EQ(res.checkpoint().metadata.at("best_epoch"), res.best_epoch);
}

TEST(Pretrain, RejectsEmptyCorpusAndBadConfig) {
  EXPECT_THROW(pretrain<double>({}, tiny_spec(), TrainConfig{}), ConfigError);
  TrainConfig bad;
  bad.patience = 0;
  EXPECT_THROW(pretrain<double>(corpus(3, 1), tiny_spec(), bad), ConfigError);
}

TEST(Pretrain, HoldoutDependsOnlyOnSequence) {
  EXPECT_EQ(detail::in_holdout("MKV", 0.05), detail::in_holdout(std::string("MKV"), 0.05));
  std::size_t held = 0;
  for (const auto& s : corpus(4000, 4)) held += detail::in_holdout(s, 0.05);
  EXPECT_NEAR(static_cast<double>(held) / 4000.0, 0.05, 0.015);
}

TEST(Finetune, FromScratchAndFromCheckpoint) {
  auto cfg = TrainConfig::finetune_defaults();
  EXPECT_EQ(cfg.max_epochs, 50u);
  cfg.max_epochs = 2;
  const auto data = a_fraction_dataset(30, 10, 5, false);
  const auto scratch = finetune<double>(tiny_spec(Head::regression), nullptr, data, cfg);
  EXPECT_EQ(scratch.metric, "valid_spearman");

  auto pcfg = TrainConfig::pretrain_defaults();
  pcfg.max_epochs = 1;
  const auto base = pretrain<double>(corpus(10, 6), tiny_spec(), pcfg).checkpoint();
  const auto tuned = finetune<double>(tiny_spec(Head::regression), &base, data, cfg);
  EXPECT_FALSE(tuned.best.params.contains("lm_head"));
  EXPECT_TRUE(tuned.best.params.contains("head.weight"));
  // untouched backbone weights at epoch 0 equal the checkpoint's
  auto net = Network<double>::init(tiny_spec(Head::regression), cfg.seed);
  load_backbone(net, base);
  EXPECT_EQ(net.params.get("embedding").data()[5], static_cast<double>(base.find("embedding")->values[5]));
}

TEST(Finetune, SpecMismatchNamesTheField) {
  auto pcfg = TrainConfig::pretrain_defaults();
  pcfg.max_epochs = 1;
  const auto base = pretrain<double>(corpus(10, 6), tiny_spec(), pcfg).checkpoint();
  auto other = tiny_spec(Head::regression);
  other.d_model = 12;
  try {
    finetune<double>(other, &base, a_fraction_dataset(10, 5, 1, false), TrainConfig::finetune_defaults());
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("d_model"), std::string::npos);
  }
}

TEST(Finetune, MissingSplitAndNonBinaryLabels) {
  auto data = a_fraction_dataset(10, 0, 1, false);
  EXPECT_THROW(finetune<double>(tiny_spec(Head::regression), nullptr, data, TrainConfig{}), FormatError);
  auto bin = a_fraction_dataset(10, 5, 1, true);
  bin[3].label = 0.5;
  try {
    finetune<double>(tiny_spec(Head::binary_classification), nullptr, bin, TrainConfig{});
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line, bin[3].line);
  }
}

TEST(Finetune, ClassificationOutputsProbabilities) {
  auto cfg = TrainConfig::finetune_defaults();
  cfg.max_epochs = 2;
  const auto data = a_fraction_dataset(30, 10, 8, true);
  for (const ArchSpec& spec : {ArchSpec{tiny_spec(Head::binary_classification)},
                              ArchSpec{CnnSpec{25, 8, {4, 4}, {3, 5}, Head::binary_classification}}}) {
    const auto res = finetune<double>(spec, nullptr, data, cfg);
    for (const auto& ex : data) {
      const double p = res.best.predict(encode(ex.sequence).ids);
      EXPECT_GT(p, 0.0);
      EXPECT_LT(p, 1.0);
    }
    const auto m = evaluate(res.best, select_split(data, Split::valid));
    EXPECT_EQ(m.metric, "accuracy");
    EXPECT_EQ(m.n_examples, 10u);
  }
}
