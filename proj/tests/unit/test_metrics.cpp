#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "seqfn/metrics.hpp"

using namespace seqfn;

namespace {

// Rank of v[i] by direct counting: 1 + (#strictly smaller) + (#equal - 1)/2.
std::vector<double> brute_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) {
      less += w < v[i];
      equal += w == v[i];
    }
    r[i] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

double brute_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = brute_ranks(x), ry = brute_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i] / n;
    my += ry[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n, bool ties) {
  std::vector<double> v(n);
  std::uniform_real_distribution<double> u(-5, 5);
  std::uniform_int_distribution<int> k(0, 4);
  for (auto& x : v) x = ties ? static_cast<double>(k(rng)) : u(rng);
  return v;
}

bool constant(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; });
}

}  // namespace

TEST(Spearman, Monotone) {
  EXPECT_DOUBLE_EQ(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{10, 20, 30}), 1.0);
  EXPECT_DOUBLE_EQ(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}), -1.0);
}

TEST(Spearman, TieCaseMatchesBruteForce) {
  const std::vector<double> p{1, 2, 2, 3}, t{1, 2, 3, 4};
  EXPECT_EQ(average_ranks(p), (std::vector<double>{1, 2.5, 2.5, 4}));
  EXPECT_NEAR(spearman(p, t), brute_spearman(p, t), 1e-12);
}

TEST(Spearman, RandomVectorsMatchBruteForce) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const bool ties = trial % 2;
    const std::size_t n = 2 + rng() % 40;
    auto x = random_vec(rng, n, ties), y = random_vec(rng, n, ties);
    if (constant(x) || constant(y)) continue;
    EXPECT_NEAR(spearman(x, y), brute_spearman(x, y), 1e-12);
  }
}

TEST(Spearman, SelfAndNegationAndMonotoneInvariance) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto x = random_vec(rng, 30, trial % 2), y = random_vec(rng, 30, false);
    if (constant(x)) continue;
    std::vector<double> neg(x.size()), ex(x.size()), aff(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      neg[i] = -x[i];
      ex[i] = std::exp(x[i]);
      aff[i] = 3.0 * x[i] + 7.0;
    }
    EXPECT_EQ(spearman(x, x), 1.0);
    EXPECT_EQ(spearman(x, neg), -1.0);
    EXPECT_EQ(spearman(ex, y), spearman(x, y));
    EXPECT_EQ(spearman(aff, y), spearman(x, y));
    EXPECT_EQ(spearman(y, ex), spearman(y, x));
  }
}

TEST(Spearman, UndefinedInputsRaise) {
  EXPECT_THROW(spearman(std::vector<double>{1}, std::vector<double>{2}), UndefinedMetricError);
  EXPECT_THROW(spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), UndefinedMetricError);
  EXPECT_THROW(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{4, 4, 4}), UndefinedMetricError);
  EXPECT_THROW(spearman(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(Accuracy, Examples) {
  EXPECT_EQ(accuracy(std::vector<double>{0.9, 0.1, 0.7}, std::vector<double>{1, 0, 1}), 1.0);
  EXPECT_EQ(accuracy(std::vector<double>{0.6, 0.4}, std::vector<double>{1, 1}), 0.5);
  EXPECT_EQ(accuracy(std::vector<double>{0.0, 0.2, 0.9}, std::vector<double>{1, 1, 1}, 0.0), 1.0);
  EXPECT_EQ(accuracy(std::vector<double>{0.0, 0.2, 0.9}, std::vector<double>{0, 0, 0}, 0.0), 0.0);
}

TEST(Accuracy, PermutationInvariant) {
  std::mt19937_64 rng(3);
  std::vector<double> p(50), t(50);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::uniform_real_distribution<double>(0, 1)(rng);
    t[i] = static_cast<double>(rng() % 2);
  }
  const double base = accuracy(p, t);
  std::vector<std::size_t> perm(p.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> p2, t2;
  for (auto i : perm) {
    p2.push_back(p[i]);
    t2.push_back(t[i]);
  }
  EXPECT_EQ(accuracy(p2, t2), base);
}

TEST(Accuracy, RejectsNonBinaryTruth) {
  EXPECT_THROW(accuracy(std::vector<double>{0.5}, std::vector<double>{2}), FormatError);
  EXPECT_THROW(accuracy(std::vector<double>{}, std::vector<double>{}), UndefinedMetricError);
}

TEST(EvalReport, JsonRoundTripAndTable) {
  EvalReport r{"gb1", "spearman", 0.5, 3, {{"test", {"spearman", 0.5, 3}}}};
  const auto j = to_json(r);
  EXPECT_EQ(j.at("n_examples").get<int>(), 3);
  const auto back = eval_report_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.task, "gb1");
  EXPECT_EQ(back.splits.at("test").value, 0.5);
  const auto table = render_table(r);
  EXPECT_NE(table.find("test"), std::string::npos);
  EXPECT_NE(table.find("0.500000"), std::string::npos);
}
