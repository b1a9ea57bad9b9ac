#pragma once

// Parametric similarity matrices built from pairwise features.
//
// Similarities have the form S_ij = exp(-E_ij), E_ij = sum_f w_f(c(i), c(j)) x_ij,f
// where the effective weight w_f depends on the parameter mode:
//   Shared          w_f = theta_f
//   ClusterProduct  w_f = theta_f^c(i) * theta_f^c(j)       (soft AND)
//   ClusterSum      w_f = theta_f^c(i) + theta_f^c(j)       (soft OR)
//   PairMatrix      w_f = theta_f^{c(i),c(j)}, symmetric in the two clusters
// Larger features always mean smaller similarity as long as theta >= 0.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "usl/clustering.hpp"
#include "usl/errors.hpp"

namespace usl {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Dense symmetric pairwise features, one n x n slice per feature.
template <typename Scalar>
class FeatureTensor {
 public:
  using Matrix = MatrixX<Scalar>;

  FeatureTensor() = default;

  /// Validates symmetry, non-negativity and a zero diagonal on every slice.
  explicit FeatureTensor(std::vector<Matrix> slices) : slices_(std::move(slices)) {
    n_ = slices_.empty() ? 0 : slices_.front().rows();
    validate();
  }

  Index points() const noexcept { return n_; }
  Index features() const noexcept { return static_cast<Index>(slices_.size()); }
  const Matrix& slice(Index f) const { return slices_[static_cast<std::size_t>(f)]; }
  Scalar operator()(Index i, Index j, Index f) const { return slices_[static_cast<std::size_t>(f)](i, j); }

 private:
  void validate() const {
    for (std::size_t f = 0; f < slices_.size(); ++f) {
      const Matrix& x = slices_[f];
      if (x.rows() != n_ || x.cols() != n_)
        throw data_error("feature slice " + std::to_string(f) + " is not " + std::to_string(n_) + "x" +
                         std::to_string(n_));
      for (Index j = 0; j < n_; ++j) {
        if (x(j, j) != Scalar(0))
          throw data_error("feature " + std::to_string(f) + " has non-zero self-dissimilarity at point " +
                           std::to_string(j));
        for (Index i = 0; i < n_; ++i) {
          if (!(x(i, j) >= Scalar(0)) || !std::isfinite(static_cast<double>(x(i, j))))
            throw data_error("feature " + std::to_string(f) + " entry (" + std::to_string(i) + ", " +
                             std::to_string(j) + ") is negative or non-finite");
          if (x(i, j) != x(j, i))
            throw data_error("feature " + std::to_string(f) + " is not symmetric at (" + std::to_string(i) +
                             ", " + std::to_string(j) + ")");
        }
      }
    }
  }

  std::vector<Matrix> slices_;
  Index n_ = 0;
};

enum class ParamMode { Shared, ClusterProduct, ClusterSum, PairMatrix };

inline std::string_view to_string(ParamMode mode) {
  switch (mode) {
    case ParamMode::Shared: return "shared";
    case ParamMode::ClusterProduct: return "cluster-product";
    case ParamMode::ClusterSum: return "cluster-sum";
    case ParamMode::PairMatrix: return "pair";
  }
  return "unknown";
}

inline ParamMode parse_param_mode(std::string_view name) {
  if (name == "shared") return ParamMode::Shared;
  if (name == "cluster-product") return ParamMode::ClusterProduct;
  if (name == "cluster-sum") return ParamMode::ClusterSum;
  if (name == "pair") return ParamMode::PairMatrix;
  throw data_error("unknown parameter mode '" + std::string(name) + "'");
}

/// Similarity parameters stored as one flat coordinate vector.
///
/// Layout: Shared [f]; ClusterProduct / ClusterSum [c * F + f];
/// PairMatrix [pair(c, c') * F + f] over unordered pairs c <= c', so the
/// symmetry theta^{c,c'} = theta^{c',c} holds by construction.
template <typename Scalar>
class ParamSet {
 public:
  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;

  ParamSet() = default;

  ParamSet(ParamMode mode, Index K, Index F, Vector values)
      : mode_(mode), K_(mode == ParamMode::Shared ? 1 : K), F_(F), values_(std::move(values)) {
    if (K_ < 1 || F_ < 0) throw data_error("parameter set needs K >= 1 and F >= 0");
    if (values_.size() != coordinate_count(mode_, K_, F_))
      throw data_error("parameter vector has " + std::to_string(values_.size()) + " values, mode " +
                       std::string(to_string(mode_)) + " needs " + std::to_string(coordinate_count(mode_, K_, F_)));
  }

  static ParamSet uniform(ParamMode mode, Index K, Index F, Scalar value) {
    Index k = mode == ParamMode::Shared ? 1 : K;
    return ParamSet(mode, k, F, Vector::Constant(coordinate_count(mode, k, F), value));
  }

  static Index coordinate_count(ParamMode mode, Index K, Index F) {
    switch (mode) {
      case ParamMode::Shared: return F;
      case ParamMode::ClusterProduct:
      case ParamMode::ClusterSum: return K * F;
      case ParamMode::PairMatrix: return K * (K + 1) / 2 * F;
    }
    return 0;
  }

  ParamMode mode() const noexcept { return mode_; }
  Index clusters() const noexcept { return K_; }
  Index features() const noexcept { return F_; }
  Index size() const noexcept { return values_.size(); }
  bool label_dependent() const noexcept { return mode_ != ParamMode::Shared; }

  const Vector& values() const noexcept { return values_; }

  ParamSet with_values(Vector values) const { return ParamSet(mode_, K_, F_, std::move(values)); }

  /// Index of the unordered cluster pair {a, b}.
  Index pair_index(Index a, Index b) const {
    if (a > b) std::swap(a, b);
    return a * K_ - a * (a - 1) / 2 + (b - a);
  }

  /// Raw parameter theta_f^{c} (cluster modes) or theta_f^{c,c'} (pair mode).
  Scalar theta(Index f, Index c = 0, Index c2 = 0) const {
    switch (mode_) {
      case ParamMode::Shared: return values_[f];
      case ParamMode::ClusterProduct:
      case ParamMode::ClusterSum: return values_[c * F_ + f];
      case ParamMode::PairMatrix: return values_[pair_index(c, c2) * F_ + f];
    }
    return Scalar(0);
  }

  /// Effective exponent weight w_f(c, c').
  Scalar weight(Index f, Index c, Index c2) const {
    switch (mode_) {
      case ParamMode::Shared: return values_[f];
      case ParamMode::ClusterProduct: return values_[c * F_ + f] * values_[c2 * F_ + f];
      case ParamMode::ClusterSum: return values_[c * F_ + f] + values_[c2 * F_ + f];
      case ParamMode::PairMatrix: return values_[pair_index(c, c2) * F_ + f];
    }
    return Scalar(0);
  }

  /// K x K table of w_f(c, c') for one feature.
  Matrix weight_table(Index f) const {
    Matrix w(K_, K_);
    for (Index b = 0; b < K_; ++b)
      for (Index a = 0; a < K_; ++a) w(a, b) = weight(f, a, b);
    return w;
  }

  /// Feature of coordinate p.
  Index feature_of(Index p) const { return p % F_; }

  /// K x K table of d w_f(c, c') / d theta_p, where f = feature_of(p).
  Matrix weight_derivative_table(Index p) const {
    Matrix d = Matrix::Zero(K_, K_);
    const Index f = feature_of(p);
    const Index block = p / F_;
    switch (mode_) {
      case ParamMode::Shared: d.setOnes(); break;
      case ParamMode::ClusterProduct:
        for (Index c = 0; c < K_; ++c) {
          d(block, c) += values_[c * F_ + f];
          d(c, block) += values_[c * F_ + f];
        }
        break;
      case ParamMode::ClusterSum:
        for (Index c = 0; c < K_; ++c) {
          d(block, c) += 1;
          d(c, block) += 1;
        }
        break;
      case ParamMode::PairMatrix:
        for (Index b = 0; b < K_; ++b)
          for (Index a = 0; a < K_; ++a)
            if (pair_index(a, b) == block) d(a, b) = 1;
        break;
    }
    return d;
  }

  /// Label-free parameters whose weights equal this set's weights for
  /// cluster 0 paired with itself.
  ParamSet shared_equivalent() const {
    Vector v(F_);
    for (Index f = 0; f < F_; ++f) v[f] = weight(f, 0, 0);
    return ParamSet(ParamMode::Shared, 1, F_, std::move(v));
  }

 private:
  ParamMode mode_ = ParamMode::Shared;
  Index K_ = 1;
  Index F_ = 0;
  Vector values_;
};

/// Symmetric non-negative similarities with their node volumes.
template <typename Scalar>
class SimilarityMatrix {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  SimilarityMatrix() = default;

  /// Checks symmetry, non-negativity and strictly positive volumes.
  explicit SimilarityMatrix(Matrix S) : S_(std::move(S)) {
    if (S_.rows() != S_.cols()) throw data_error("similarity matrix must be square");
    for (Index j = 0; j < S_.cols(); ++j)
      for (Index i = 0; i < S_.rows(); ++i) {
        if (!(S_(i, j) >= Scalar(0))) throw data_error("similarity matrix has a negative or NaN entry");
        if (S_(i, j) != S_(j, i)) throw data_error("similarity matrix is not symmetric");
      }
    volumes_ = S_.rowwise().sum();
    for (Index i = 0; i < volumes_.size(); ++i)
      if (!(volumes_[i] > Scalar(0))) throw degenerate_row_error(i);
    total_ = volumes_.sum();
  }

  Index size() const noexcept { return S_.rows(); }
  const Matrix& matrix() const noexcept { return S_; }
  Scalar operator()(Index i, Index j) const { return S_(i, j); }
  const Vector& volumes() const noexcept { return volumes_; }
  Scalar total_volume() const noexcept { return total_; }

 private:
  Matrix S_;
  Vector volumes_;
  Scalar total_ = 0;
};

template <typename Scalar>
struct TransitionMatrix {
  MatrixX<Scalar> P;           // row-stochastic, P_ij = S_ij / D_i
  VectorX<Scalar> stationary;  // pi_i = D_i / Vol V
};

template <typename Scalar>
TransitionMatrix<Scalar> transition(const SimilarityMatrix<Scalar>& S) {
  const auto& D = S.volumes();
  for (Index i = 0; i < D.size(); ++i)
    if (!(D[i] > Scalar(0))) throw degenerate_row_error(i);
  TransitionMatrix<Scalar> t;
  t.P = D.cwiseInverse().asDiagonal() * S.matrix();
  t.stationary = D / S.total_volume();
  return t;
}

namespace detail {

inline void check_labels(Index n, Index K, const Clustering& labels) {
  if (static_cast<Index>(labels.size()) != n)
    throw data_error("labels cover " + std::to_string(labels.size()) + " points, features cover " + std::to_string(n));
  if (labels.clusters() != K)
    throw data_error("labels have " + std::to_string(labels.clusters()) + " clusters, parameters expect " +
                     std::to_string(K));
}

template <typename Scalar>
void check_dimensions(const FeatureTensor<Scalar>& x, const ParamSet<Scalar>& theta) {
  if (x.features() != theta.features())
    throw data_error("features have F = " + std::to_string(x.features()) + ", parameters have F = " +
                     std::to_string(theta.features()));
}

// Largest exponent evaluated; anything beyond underflows to ~1e-304.
inline constexpr double kMaxExponent = 700.0;

}  // namespace detail

/// S_ij = exp(-E_ij) for label-dependent parameters; labels choose the
/// per-cluster parameter blocks. Shared parameters ignore the labels.
template <typename Scalar>
SimilarityMatrix<Scalar> build_similarity(const FeatureTensor<Scalar>& x, const Clustering& labels,
                                          const ParamSet<Scalar>& theta) {
  detail::check_dimensions(x, theta);
  const Index n = x.points();
  const auto c = labels.labels();
  if (theta.label_dependent()) detail::check_labels(n, theta.clusters(), labels);

  MatrixX<Scalar> E = MatrixX<Scalar>::Zero(n, n);
  for (Index f = 0; f < x.features(); ++f) {
    const auto& xf = x.slice(f);
    if (theta.label_dependent()) {
      const MatrixX<Scalar> w = theta.weight_table(f);
      for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < n; ++i) E(i, j) += w(c[i], c[j]) * xf(i, j);
    } else {
      E.noalias() += theta.values()[f] * xf;
    }
  }
  MatrixX<Scalar> S = (-E.array().min(Scalar(detail::kMaxExponent))).exp().matrix();
  S.diagonal().setOnes();
  return SimilarityMatrix<Scalar>(std::move(S));
}

template <typename Scalar>
SimilarityMatrix<Scalar> build_similarity(const FeatureTensor<Scalar>& x, const ParamSet<Scalar>& theta) {
  if (theta.label_dependent())
    throw data_error("mode " + std::string(to_string(theta.mode())) +
                     " needs cluster labels to build similarities (the similarity depends on the clustering)");
  return build_similarity(x, Clustering::single(static_cast<std::size_t>(x.points())), theta);
}

/// Analytic derivatives of S(theta) with respect to every parameter coordinate.
///
/// dS_ij / dtheta_p = -S_ij * x_ij,f * dw_f(c(i), c(j)) / dtheta_p. The
/// evaluator keeps a reference to the feature tensor, which must outlive it.
template <typename Scalar>
class SimilarityGradient {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  SimilarityGradient(const FeatureTensor<Scalar>& x, const Clustering& labels, const ParamSet<Scalar>& theta)
      : x_(&x), theta_(theta), S_(build_similarity(x, labels, theta).matrix()) {
    detail::check_dimensions(x, theta);
    labels_.assign(labels.labels().begin(), labels.labels().end());
    if (!theta.label_dependent()) labels_.assign(static_cast<std::size_t>(x.points()), 0);
  }

  SimilarityGradient(const FeatureTensor<Scalar>& x, const ParamSet<Scalar>& theta)
      : SimilarityGradient(x, Clustering::single(static_cast<std::size_t>(x.points())), theta) {}

  Index coordinates() const noexcept { return theta_.size(); }
  const Matrix& similarity() const noexcept { return S_; }

  /// dS / dtheta_p as a dense n x n matrix.
  Matrix derivative(Index p) const {
    const Index n = S_.rows();
    const auto& xf = x_->slice(theta_.feature_of(p));
    const Matrix dw = theta_.weight_derivative_table(p);
    Matrix out(n, n);
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i) out(i, j) = -S_(i, j) * xf(i, j) * dw(labels_[i], labels_[j]);
    return out;
  }

  /// sum_ij G_ij dS_ij / dtheta_p for every p, with G the gradient of some
  /// scalar with respect to the n^2 entries of S treated as independent.
  Vector contract(const Matrix& G) const {
    const Index n = S_.rows();
    const Index K = theta_.clusters();
    const Matrix H = G.cwiseProduct(S_);
    std::vector<Matrix> blocks(static_cast<std::size_t>(theta_.features()), Matrix::Zero(K, K));
    for (Index f = 0; f < theta_.features(); ++f) {
      const auto& xf = x_->slice(f);
      Matrix& B = blocks[static_cast<std::size_t>(f)];
      if (K == 1) {
        B(0, 0) = H.cwiseProduct(xf).sum();
        continue;
      }
      for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < n; ++i) B(labels_[i], labels_[j]) += H(i, j) * xf(i, j);
    }
    Vector out(theta_.size());
    for (Index p = 0; p < theta_.size(); ++p)
      out[p] = -blocks[static_cast<std::size_t>(theta_.feature_of(p))].cwiseProduct(theta_.weight_derivative_table(p)).sum();
    return out;
  }

 private:
  const FeatureTensor<Scalar>* x_;
  ParamSet<Scalar> theta_;
  Matrix S_;
  std::vector<int> labels_;
};

using FeatureTensord = FeatureTensor<double>;
using ParamSetd = ParamSet<double>;
using SimilarityMatrixd = SimilarityMatrix<double>;

}  // namespace usl
