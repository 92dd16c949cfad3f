// Pretrain a tiny model on a toy corpus, fine-tune it to predict the
// fraction of alanine, then score and save it.

#include <algorithm>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "seqfn/checkpoint.hpp"
#include "seqfn/train.hpp"

using namespace seqfn;

int main() {
  std::mt19937_64 rng(1);
  auto random_protein = [&](double p_ala) {
    std::string s(30, 'A');
    for (auto& c : s) c = std::bernoulli_distribution(p_ala)(rng) ? 'A' : vocab::kCanonical[1 + rng() % 19];
    return s;
  };

  std::vector<std::string> corpus;
  for (int i = 0; i < 200; ++i) corpus.push_back(random_protein(0.5 * (i % 10) / 10.0));

  ModelSpec spec;
  spec.d_model = 16;
  spec.n_layers = 2;
  spec.d_state = 4;

  auto pre_cfg = TrainConfig::pretrain_defaults();
  pre_cfg.max_epochs = 5;
  pre_cfg.max_tokens = 256;
  pre_cfg.on_epoch = [](const EpochLog& e) {
    std::printf("pretrain epoch %zu  train %.4f  valid %.4f\n", e.epoch, e.train_loss, e.valid_value.value_or(0));
  };
  const auto base = pretrain<double>(corpus, spec, pre_cfg).checkpoint();

  std::vector<LabeledExample> data;
  for (int i = 0; i < 300; ++i) {
    auto s = random_protein(0.6 * (i % 13) / 13.0);
    const double frac = static_cast<double>(std::count(s.begin(), s.end(), 'A')) / static_cast<double>(s.size());
    data.push_back({s, frac, i < 250 ? Split::train : Split::valid});
  }
  spec.head = Head::regression;
  auto ft_cfg = TrainConfig::finetune_defaults();
  ft_cfg.max_epochs = 10;
  ft_cfg.max_tokens = 256;
  const auto tuned = finetune<double>(spec, &base, data, ft_cfg);

  const auto m = evaluate(tuned.best, select_split(data, Split::valid));
  std::printf("valid %s = %.3f on %zu examples\n", m.metric.c_str(), m.value, m.n_examples);
  std::printf("prediction for AAAAAGGGGG: %.3f\n", tuned.best.predict(encode("AAAAAGGGGG").ids));
  save_checkpoint("quickstart.ckpt", tuned.checkpoint());
}
