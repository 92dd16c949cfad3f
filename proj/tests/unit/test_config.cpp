#include <gtest/gtest.h>

#include <cstdlib>

#include "seqfn/config.hpp"

using namespace seqfn;

TEST(RunConfig, DefaultsResolveToPaperSettings) {
  const auto cfg = run_config_from_json(nlohmann::json::object(), TrainConfig::pretrain_defaults());
  const auto spec = cfg.arch_spec();
  const auto j = resolved_json(cfg, spec);
  EXPECT_EQ(j.at("model").at("n_layers"), 8);
  EXPECT_EQ(j.at("model").at("d_model"), 300);
  EXPECT_EQ(j.at("train").at("lr"), 1e-3);
  EXPECT_EQ(j.at("train").at("max_epochs"), 100);
  EXPECT_EQ(j.at("train").at("patience"), 5);
  EXPECT_EQ(j.at("mode"), "reference");
  const auto ft = run_config_from_json(nlohmann::json::object(), TrainConfig::finetune_defaults());
  EXPECT_EQ(ft.train.max_epochs, 50u);
}

TEST(RunConfig, UnknownKeysRejectedAtEveryLevel) {
  for (const char* text : {R"({"lr": 0.1})", R"({"train": {"learning_rate": 0.1}})", R"({"model": {"layers": 2}})",
                           R"({"cnn": {"filter": [1]}})", R"({"data": {"csv": "x"}})"}) {
    EXPECT_THROW(run_config_from_json(nlohmann::json::parse(text)), ConfigError) << text;
  }
  try {
    run_config_from_json(nlohmann::json::parse(R"({"train": {"pateince": 3}})"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("pateince"), std::string::npos);
  }
}

TEST(RunConfig, WrongTypesAndBadValues) {
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"train": {"seed": "x"}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"train": {"patience": 0}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"mode": "half"})")), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"arch": "lstm"})")).arch_spec(), ConfigError);
}

TEST(RunConfig, EchoRoundTrips) {
  const auto cfg = run_config_from_json(nlohmann::json::parse(
      R"({"arch": "cnn", "cnn": {"filters": [4, 4], "kernels": [3, 5]}, "train": {"seed": 9, "lr": 0.01}})"));
  const auto spec = cfg.arch_spec();
  const auto echoed = resolved_json(cfg, spec);
  const auto again = run_config_from_json(echoed);
  EXPECT_EQ(resolved_json(again, again.arch_spec()), echoed);
  EXPECT_EQ(std::get<CnnSpec>(again.arch_spec()).filters, (std::vector<std::size_t>{4, 4}));
}

TEST(RunConfig, OverlayOnCheckpointSpec) {
  ModelSpec base;
  base.d_model = 64;
  base.n_layers = 2;
  const auto cfg = run_config_from_json(nlohmann::json::parse(R"({"model": {"d_state": 8}})"));
  const auto s = std::get<ModelSpec>(cfg.arch_spec(ArchSpec{base}));
  EXPECT_EQ(s.d_model, 64u);
  EXPECT_EQ(s.n_layers, 2u);
  EXPECT_EQ(s.d_state, 8u);
}

TEST(RunConfig, EnvironmentModeWins) {
  ::setenv("SEQFN_MODE", "fast", 1);
  EXPECT_EQ(resolve_mode(Mode::reference), Mode::fast);
  ::setenv("SEQFN_MODE", "bogus", 1);
  EXPECT_THROW(resolve_mode(Mode::reference), ConfigError);
  ::unsetenv("SEQFN_MODE");
  EXPECT_EQ(resolve_mode(Mode::fast), Mode::fast);
}
