#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "seqfn/errors.hpp"

namespace seqfn {

/// 1-based ranks with ties given the average of the positions they span.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) throw UndefinedMetricError("correlation undefined for a constant vector");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Spearman rank correlation: Pearson correlation of average ranks.
inline double spearman(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw DimensionError("spearman: inputs differ in length");
  if (pred.size() < 2) throw UndefinedMetricError("spearman needs at least two examples");
  const auto rp = average_ranks(pred);
  const auto rt = average_ranks(truth);
  return pearson(rp, rt);
}

/// Fraction of examples where (prob >= threshold) agrees with the 0/1 truth.
inline double accuracy(std::span<const double> prob, std::span<const double> truth, double threshold = 0.5) {
  if (prob.size() != truth.size()) throw DimensionError("accuracy: inputs differ in length");
  if (prob.empty()) throw UndefinedMetricError("accuracy needs at least one example");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    if (truth[i] != 0.0 && truth[i] != 1.0) {
      throw FormatError("accuracy: truth value " + std::to_string(truth[i]) + " is not 0 or 1");
    }
    hit += (prob[i] >= threshold) == (truth[i] == 1.0);
  }
  return static_cast<double>(hit) / static_cast<double>(prob.size());
}

struct MetricValue {
  std::string metric;
  double value = 0.0;
  std::size_t n_examples = 0;
};

struct EvalReport {
  std::string task;
  std::string metric;
  double value = 0.0;
  std::size_t n_examples = 0;
  std::map<std::string, MetricValue> splits;
};

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["task"] = r.task;
  j["metric"] = r.metric;
  j["value"] = r.value;
  j["n_examples"] = r.n_examples;
  j["splits"] = nlohmann::json::object();
  for (const auto& [name, m] : r.splits) {
    j["splits"][name] = {{"metric", m.metric}, {"value", m.value}, {"n_examples", m.n_examples}};
  }
  return j;
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.task = j.at("task").get<std::string>();
  r.metric = j.at("metric").get<std::string>();
  r.value = j.at("value").get<double>();
  r.n_examples = j.at("n_examples").get<std::size_t>();
  for (const auto& [name, m] : j.at("splits").items()) {
    r.splits[name] = {m.at("metric").get<std::string>(), m.at("value").get<double>(),
                      m.at("n_examples").get<std::size_t>()};
  }
  return r;
}

/// Fixed-width text rendering of a report.
inline std::string render_table(const EvalReport& r) {
  char buf[160];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-10s %-10s %12s %10s\n", "split", "metric", "value", "n");
  out += buf;
  auto row = [&](const std::string& split, const std::string& metric, double value, std::size_t n) {
    std::snprintf(buf, sizeof buf, "%-10s %-10s %12.6f %10zu\n", split.c_str(), metric.c_str(), value, n);
    out += buf;
  };
  for (const auto& [name, m] : r.splits) row(name, m.metric, m.value, m.n_examples);
  return out;
}

}  // namespace seqfn
