#pragma once

#include <numeric>
#include <vector>

namespace hierkit {

// Disjoint-set with path halving and union by rank.
class DisjointSet {
 public:
  explicit DisjointSet(int size) : parent_(size), rank_(size, 0) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }

  int find(int element) {
    while (element != parent_[element]) {
      parent_[element] = parent_[parent_[element]];
      element = parent_[element];
    }
    return element;
  }

  void merge(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }

 private:
  std::vector<int> parent_;
  std::vector<int> rank_;
};

}  // namespace hierkit
