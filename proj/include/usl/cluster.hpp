#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

#include "usl/clustering.hpp"
#include "usl/simgraph.hpp"
#include "usl/spectra.hpp"

namespace usl {

enum class KMeansInit { RandomPartition, OrthogonalCenters };

struct KMeansOptions {
  KMeansInit init = KMeansInit::OrthogonalCenters;
  std::uint64_t seed = 0;
  int max_iterations = 100;
  // Orthogonal init only: first center row. Defaults to the largest-norm row.
  std::optional<Index> first_center;
};

struct KMeansResult {
  Clustering clustering;
  double distortion = 0;  // sum of squared distances to assigned centers
  int iterations = 0;
};

/// Lloyd's algorithm until assignments stop changing or max_iterations.
/// Emptied clusters are re-seeded at the point farthest from its center.
KMeansResult kmeans(const Eigen::MatrixXd& rows, int K, const KMeansOptions& options);

struct Candidate {
  Clustering clustering;
  double mncut = 0;
};

/// Distinct candidate partitions sorted by MNCut, then canonical labels.
struct CandidateSet {
  std::vector<Candidate> members;

  std::size_t size() const noexcept { return members.size(); }
  const Candidate& best() const { return members.front(); }
  bool contains(const Clustering& c) const;
};

struct SpectralClusteringOptions {
  int restarts = 20;
  std::uint64_t seed = 0;
  bool row_normalize = false;
};

/// Clusters the rows of the selected right eigenvectors with multi-restart K-means.
///
/// Restart 0 uses orthogonal centers from the largest-norm row; odd restarts
/// use random partitions; later even restarts use orthogonal centers from a
/// seeded random first row.
CandidateSet cluster_spectral(const SimilarityMatrixd& S, int K, const SpectralDecompd& decomp,
                              const EigSelection& selection, const SpectralClusteringOptions& options);

/// Decomposes S and clusters by `selection`, or the leading K eigenvectors.
CandidateSet cluster_spectral(const SimilarityMatrixd& S, int K, const std::optional<EigSelection>& selection,
                              const SpectralClusteringOptions& options);

/// Maximum-weight perfect assignment on a square matrix: result[row] = column.
std::vector<int> max_weight_assignment(const Eigen::MatrixXd& weights);

/// Minimum misclassified fraction over all relabelings of `pred`.
double classification_error(const Clustering& pred, const Clustering& truth);

/// Relabels `c` to agree as much as possible with `reference` (same K).
Clustering align_labels(const Clustering& c, const Clustering& reference);

/// Deterministic 64-bit mixing for deriving per-restart seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace usl
