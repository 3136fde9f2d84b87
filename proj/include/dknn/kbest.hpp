#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dknn/types.hpp"

namespace dknn {

// The k closest distinct keys seen so far, keeping only the best distance per
// key. Offers at or beyond the current bound are rejected.
template <typename Key>
class KBest {
 public:
  explicit KBest(std::size_t k = 1) : k_(k) {}

  std::size_t capacity() const noexcept { return k_; }
  std::size_t size() const noexcept { return by_key_.size(); }
  bool full() const noexcept { return size() == k_; }

  // Distance of the k-th entry when full, kInfinity otherwise.
  Cost bound() const noexcept { return full() ? std::prev(ordered_.end())->first : kInfinity; }

  // Returns true if the entry set changed.
  bool offer(Key key, Cost distance) {
    if (!(distance < bound())) return false;
    if (auto it = by_key_.find(key); it != by_key_.end()) {
      if (!(distance < it->second)) return false;
      ordered_.erase({it->second, key});
      it->second = distance;
      ordered_.emplace(distance, key);
      return true;
    }
    by_key_.emplace(key, distance);
    ordered_.emplace(distance, key);
    if (by_key_.size() > k_) {
      auto last = std::prev(ordered_.end());
      by_key_.erase(last->second);
      ordered_.erase(last);
    }
    return true;
  }

  // Ascending by distance, ties by key.
  std::vector<std::pair<Key, Cost>> sorted() const {
    std::vector<std::pair<Key, Cost>> out;
    out.reserve(ordered_.size());
    for (const auto& [d, key] : ordered_) out.emplace_back(key, d);
    return out;
  }

  void clear() {
    by_key_.clear();
    ordered_.clear();
  }

 private:
  std::size_t k_;
  std::unordered_map<Key, Cost> by_key_;
  std::set<std::pair<Cost, Key>> ordered_;
};

}  // namespace dknn
