#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "seqfn/vocab.hpp"

namespace seqfn {

struct Batch {
  std::vector<std::size_t> indices;               // positions in the input list
  std::vector<std::vector<TokenId>> ids;          // each padded to `width` with PAD
  std::vector<std::vector<std::uint8_t>> is_pad;  // 1 where ids holds padding
  std::size_t width = 0;

  std::size_t size() const { return indices.size(); }

  /// Row i without its padding.
  std::span<const TokenId> unpadded(std::size_t i) const {
    const auto pads = static_cast<std::size_t>(std::count(is_pad[i].begin(), is_pad[i].end(), 1));
    return std::span<const TokenId>(ids[i]).first(width - pads);
  }
};

struct BatchPlan {
  std::vector<Batch> batches;
  std::vector<std::size_t> skipped;  // sequences longer than max_tokens
};

/// Length-bucketed padded batches holding at most `max_tokens` tokens
/// (rows x padded width) each. With `shuffle`, sequence order within a length
/// and the order of batches are permuted by `seed`; otherwise the plan is the
/// sorted-by-length order. Sequences longer than max_tokens are skipped.
inline BatchPlan make_batches(std::span<const TokenSequence> seqs, std::size_t max_tokens, std::uint64_t seed,
                              bool shuffle) {
  BatchPlan plan;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    if (seqs[i].ids.size() > max_tokens || seqs[i].ids.empty()) {
      plan.skipped.push_back(i);
    } else {
      order.push_back(i);
    }
  }
  std::mt19937_64 rng(seed);
  if (shuffle) std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return seqs[a].ids.size() < seqs[b].ids.size(); });

  auto flush = [&](std::vector<std::size_t>& members) {
    if (members.empty()) return;
    Batch b;
    b.indices = members;
    for (auto i : members) b.width = std::max(b.width, seqs[i].ids.size());
    for (auto i : members) {
      auto row = seqs[i].ids;
      std::vector<std::uint8_t> pad(b.width, 0);
      std::fill(pad.begin() + row.size(), pad.end(), 1);
      row.resize(b.width, vocab::kPad);
      b.ids.push_back(std::move(row));
      b.is_pad.push_back(std::move(pad));
    }
    plan.batches.push_back(std::move(b));
    members.clear();
  };

  std::vector<std::size_t> current;
  for (auto i : order) {
    const std::size_t len = seqs[i].ids.size();  // ascending, so len is the new width
    if (!current.empty() && (current.size() + 1) * len > max_tokens) flush(current);
    current.push_back(i);
  }
  flush(current);
  if (shuffle) std::shuffle(plan.batches.begin(), plan.batches.end(), rng);
  return plan;
}

}  // namespace seqfn
