#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "usl/clustering.hpp"
#include "usl/data.hpp"
#include "usl/simgraph.hpp"

namespace usl::test {

/// Pairwise |differences| of n random points in [0, scale]^F.
inline FeatureTensord random_features(Index n, Index F, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, scale);
  Eigen::MatrixXd p(n, F);
  for (Index i = 0; i < n; ++i)
    for (Index f = 0; f < F; ++f) p(i, f) = u(rng);
  return pairwise_features(p);
}

/// Random labels with every cluster non-empty.
inline Clustering random_clustering(std::size_t n, int K, std::mt19937_64& rng) {
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(K));
  std::shuffle(labels.begin(), labels.end(), rng);
  return Clustering(std::move(labels), K);
}

/// Random symmetric similarity with entries in [lo, 1] and unit diagonal.
inline SimilarityMatrixd random_similarity(Index n, std::mt19937_64& rng, double lo = 0.01) {
  std::uniform_real_distribution<double> u(lo, 1.0);
  Eigen::MatrixXd S(n, n);
  for (Index j = 0; j < n; ++j) {
    S(j, j) = 1.0;
    for (Index i = j + 1; i < n; ++i) S(i, j) = S(j, i) = u(rng);
  }
  return SimilarityMatrixd(std::move(S));
}

/// Contiguous block labels for the given block sizes.
inline Clustering block_labels(const std::vector<int>& sizes) {
  std::vector<int> labels;
  for (std::size_t b = 0; b < sizes.size(); ++b) labels.insert(labels.end(), static_cast<std::size_t>(sizes[b]), static_cast<int>(b));
  return Clustering(std::move(labels), static_cast<int>(sizes.size()));
}

/// Block-constant similarity: `within` inside blocks, `between` across.
inline SimilarityMatrixd block_similarity(const std::vector<int>& sizes, double within = 1.0, double between = 0.0) {
  const Clustering c = block_labels(sizes);
  const Index n = static_cast<Index>(c.size());
  Eigen::MatrixXd S(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) S(i, j) = c[static_cast<std::size_t>(i)] == c[static_cast<std::size_t>(j)] ? within : between;
  return SimilarityMatrixd(std::move(S));
}

/// Random non-negative parameters of the given mode.
inline ParamSetd random_params(ParamMode mode, Index K, Index F, std::mt19937_64& rng, double lo = 0.2, double hi = 1.5) {
  std::uniform_real_distribution<double> u(lo, hi);
  const Index k = mode == ParamMode::Shared ? 1 : K;
  Eigen::VectorXd v(ParamSetd::coordinate_count(mode, k, F));
  for (Index p = 0; p < v.size(); ++p) v[p] = u(rng);
  return ParamSetd(mode, k, F, v);
}

inline double relative_error(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Fresh empty directory under the system temp path.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("usl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace usl::test
