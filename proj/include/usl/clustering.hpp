#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "usl/errors.hpp"

namespace usl {

/// A partition of {0..n-1} into K non-empty clusters.
///
/// Labels are 0-based in memory; the labels file format is 1-based and the
/// conversion happens in the I/O layer.
class Clustering {
 public:
  Clustering() = default;

  Clustering(std::vector<int> labels, int K) : labels_(std::move(labels)), K_(K) { validate(); }

  /// Infers K as max(label) + 1 and checks that every id in [0, K) occurs.
  static Clustering from_labels(std::vector<int> labels) {
    int K = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    return Clustering(std::move(labels), K);
  }

  /// Every point in one cluster.
  static Clustering single(std::size_t n) { return Clustering(std::vector<int>(n, 0), n > 0 ? 1 : 0); }

  std::size_t size() const noexcept { return labels_.size(); }
  int clusters() const noexcept { return K_; }
  int operator[](std::size_t i) const { return labels_[i]; }
  std::span<const int> labels() const noexcept { return labels_; }

  std::vector<std::size_t> counts() const {
    std::vector<std::size_t> out(static_cast<std::size_t>(K_), 0);
    for (int c : labels_) ++out[static_cast<std::size_t>(c)];
    return out;
  }

  /// Members of cluster c, ascending.
  std::vector<std::ptrdiff_t> members(int c) const {
    std::vector<std::ptrdiff_t> out;
    for (std::size_t i = 0; i < labels_.size(); ++i)
      if (labels_[i] == c) out.push_back(static_cast<std::ptrdiff_t>(i));
    return out;
  }

  /// Relabels clusters in order of first appearance, so two clusterings that
  /// are the same partition have identical canonical labels.
  Clustering canonical() const {
    std::vector<int> map(static_cast<std::size_t>(K_), -1);
    std::vector<int> out(labels_.size());
    int next = 0;
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      int& m = map[static_cast<std::size_t>(labels_[i])];
      if (m < 0) m = next++;
      out[i] = m;
    }
    Clustering c;
    c.labels_ = std::move(out);
    c.K_ = K_;
    return c;
  }

  /// Applies a label permutation: new label of cluster c is perm[c].
  Clustering relabeled(std::span<const int> perm) const {
    std::vector<int> out(labels_.size());
    for (std::size_t i = 0; i < labels_.size(); ++i) out[i] = perm[static_cast<std::size_t>(labels_[i])];
    return Clustering(std::move(out), K_);
  }

  bool operator==(const Clustering&) const = default;

 private:
  void validate() const {
    if (K_ < 0) throw data_error("cluster count must be non-negative");
    std::vector<char> seen(static_cast<std::size_t>(K_), 0);
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      int c = labels_[i];
      if (c < 0 || c >= K_)
        throw data_error("label " + std::to_string(c) + " at point " + std::to_string(i) + " outside [0, " +
                         std::to_string(K_) + ")");
      seen[static_cast<std::size_t>(c)] = 1;
    }
    for (int c = 0; c < K_; ++c)
      if (!seen[static_cast<std::size_t>(c)])
        throw data_error("cluster " + std::to_string(c) + " is empty; cluster ids must be contiguous");
  }

  std::vector<int> labels_;
  int K_ = 0;
};

inline bool same_partition(const Clustering& a, const Clustering& b) {
  return a.size() == b.size() && a.clusters() == b.clusters() && a.canonical() == b.canonical();
}

}  // namespace usl
