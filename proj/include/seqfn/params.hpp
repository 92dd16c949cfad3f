#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "seqfn/tensor.hpp"

namespace seqfn {

/// Ordered, named collection of trainable leaf tensors.
template <class T>
class ParamSet {
 public:
  using Entry = std::pair<std::string, Tensor<T>>;

  Tensor<T>& add(std::string name, Tensor<T> value) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    value.set_requires_grad(true);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(value));
    return entries_.back().second;
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  const Tensor<T>& get(const std::string& name) const { return entries_[lookup(name)].second; }
  Tensor<T>& get(const std::string& name) { return entries_[lookup(name)].second; }

  std::size_t size() const { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : entries_) n += t.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [_, t] : entries_) t.zero_grad();
  }

  /// Deep copy: new leaf tensors with the same values.
  ParamSet clone() const {
    ParamSet out;
    for (const auto& [name, t] : entries_) out.add(name, t.detach());
    return out;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace seqfn
