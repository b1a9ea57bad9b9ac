#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "usl/clustering.hpp"
#include "usl/simgraph.hpp"

namespace usl {

/// n points in R^d, one per row, with optional reference labels.
struct PointSet {
  Eigen::MatrixXd coords;
  std::optional<Clustering> labels;

  Index size() const noexcept { return coords.rows(); }
  Index dims() const noexcept { return coords.cols(); }
};

/// Gaussian blobs in two meaningful dimensions plus label-independent noise.
struct GaussianSpec {
  std::vector<Eigen::Vector2d> means;
  std::vector<double> deviations;  // isotropic, per component
  std::vector<int> counts;
  int noisy_dims = 0;
  double noise_scale = 3.0;  // standard deviation of every noise coordinate

  /// Means on a grid of spacing 6 ((0,0), (6,0), (0,6), (6,6) for K = 4),
  /// deviations cycling through 0.5, 0.8, 1.0, 0.6.
  static GaussianSpec defaults(std::vector<int> counts, int noisy_dims = 0, double noise_scale = 3.0);

  void validate() const;
};

PointSet gen_gaussians(const GaussianSpec& spec, std::uint64_t seed);

/// x_ij,f = |p_i,f - p_j,f| for every coordinate f.
FeatureTensord pairwise_features(const Eigen::MatrixXd& coords);
inline FeatureTensord pairwise_features(const PointSet& p) { return pairwise_features(p.coords); }

/// Rescales every column to [0, 1]; constant columns become 0.
Eigen::MatrixXd minmax_scale(const Eigen::MatrixXd& coords);

/// Rows "v1,...,vd[,label]"; `with_labels` reads the last column as a 1-based label.
PointSet load_points_csv(const std::filesystem::path& path, bool with_labels = false);
/// Writes the label column when the set has labels.
void save_points_csv(const std::filesystem::path& path, const PointSet& points);

/// One 1-based integer per line.
Clustering load_labels(const std::filesystem::path& path);
void save_labels(const std::filesystem::path& path, const Clustering& labels);

/// Binary "USLF" tensors or the text pair list (first line "n,F", then
/// "i,j,x_1,...,x_F" for every 1-based pair i < j).
FeatureTensord load_features(const std::filesystem::path& path);
void save_features(const std::filesystem::path& path, const FeatureTensord& x);

/// UCI Dermatology raw format: 34 attributes and the class, "?" for missing.
/// Rows with missing fields are dropped, columns min-max scaled, class kept as labels.
PointSet load_dermatology(const std::filesystem::path& path);

}  // namespace usl
