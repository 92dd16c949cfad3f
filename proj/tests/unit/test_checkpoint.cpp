#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "seqfn/checkpoint.hpp"

using namespace seqfn;
namespace fs = std::filesystem;

namespace {

ModelSpec tiny_spec() {
  ModelSpec s;
  s.d_model = 8;
  s.n_layers = 2;
  s.d_state = 4;
  return s;
}

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "seqfn_test_checkpoint";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Checkpoint sample_checkpoint() {
  auto net = Network<double>::init(tiny_spec(), 3);
  OptimState st;
  st.step = 7;
  for (const auto& [name, t] : net.params) {
    st.m[name].assign(t.numel(), 0.25);
    st.v[name].assign(t.numel(), 0.5);
  }
  return make_checkpoint(net, &st, {{"epoch", 7}, {"best_value", 1.25}});
}

}  // namespace

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const auto a = temp_path("a.ckpt"), b = temp_path("b.ckpt");
  save_checkpoint(a.string(), sample_checkpoint());
  const auto loaded = load_checkpoint(a.string());
  save_checkpoint(b.string(), loaded);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_EQ(loaded.params, sample_checkpoint().params);
  ASSERT_TRUE(loaded.optim.has_value());
  EXPECT_EQ(loaded.optim->step, 7u);
  EXPECT_EQ(loaded.metadata.at("epoch"), 7);
}

TEST(Checkpoint, ParametersSurviveBitExactAtFloatPrecision) {
  auto net = Network<float>::init(tiny_spec(), 9);
  const auto back = network_from_checkpoint<float>(deserialize_checkpoint(serialize_checkpoint(make_checkpoint(net))));
  for (const auto& [name, t] : net.params) {
    const auto& u = back.params.get(name);
    ASSERT_EQ(u.shape(), t.shape());
    EXPECT_EQ(std::memcmp(u.data().data(), t.data().data(), 4 * t.numel()), 0) << name;
  }
}

TEST(Checkpoint, EveryTruncationFails) {
  const auto bytes = serialize_checkpoint(sample_checkpoint());
  for (std::size_t n = 0; n < bytes.size(); n += 1 + n / 50) {
    EXPECT_THROW(deserialize_checkpoint(std::string_view(bytes).substr(0, n)), CheckpointError) << n;
  }
  const auto path = temp_path("trunc.ckpt");
  {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 3));
  }
  EXPECT_THROW(load_checkpoint(path.string()), CheckpointError);
}

TEST(Checkpoint, CorruptionAndVersionAreDetected) {
  auto bytes = serialize_checkpoint(sample_checkpoint());
  auto flipped = bytes;
  flipped[bytes.size() - 10] ^= 0x40;
  try {
    deserialize_checkpoint(flipped);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
  }
  auto versioned = bytes;
  versioned[8] = 9;
  try {
    deserialize_checkpoint(versioned);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version 9"), std::string::npos);
  }
  EXPECT_THROW(deserialize_checkpoint(bytes + "x"), CheckpointError);
}

TEST(Checkpoint, PayloadLengthMatchesShape) {
  const auto ck = sample_checkpoint();
  for (const auto& r : ck.params) EXPECT_EQ(r.values.size(), shape_numel(r.shape));
}

TEST(Checkpoint, DefaultSpecHeaderListsDefaults) {
  const auto path = temp_path("default.ckpt");
  save_checkpoint(path.string(), make_checkpoint(Network<float>::init(ModelSpec{}, 0)));
  const auto header = read_checkpoint_header(path.string());
  EXPECT_EQ(header.at("spec").at("n_layers"), 8);
  EXPECT_EQ(header.at("spec").at("d_model"), 300);
  EXPECT_EQ(header.at("spec").at("arch"), "mamba");
  EXPECT_EQ(header.at("format_version"), kCheckpointVersion);
}

TEST(Checkpoint, CnnSpecRoundTrips) {
  CnnSpec spec;
  spec.head = Head::binary_classification;
  const auto ck = make_checkpoint(Network<double>::init(spec, 1));
  const auto back = deserialize_checkpoint(serialize_checkpoint(ck));
  EXPECT_EQ(std::get<CnnSpec>(back.spec), spec);
  EXPECT_FALSE(back.optim.has_value());
}
