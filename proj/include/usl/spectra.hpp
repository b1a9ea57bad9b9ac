#pragma once

// Eigenstructure of the random-walk matrix P = D^-1 S.
//
// P is similar to the symmetric N = D^-1/2 S D^-1/2. With N u = lambda u and
// u orthonormal, v = D^-1/2 u is a right eigenvector of P and w = D^1/2 u a
// left eigenvector, normalized so that w . v = 1.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "usl/errors.hpp"
#include "usl/simgraph.hpp"

namespace usl {

template <typename Scalar>
struct SpectralDecomp {
  VectorX<Scalar> eigenvalues;  // descending
  MatrixX<Scalar> right;        // columns v^k
  MatrixX<Scalar> left;         // columns w^k
  MatrixX<Scalar> orthonormal;  // columns u^k of N
  VectorX<Scalar> stationary;   // pi

  Index size() const noexcept { return eigenvalues.size(); }
  Index points() const noexcept { return right.rows(); }
};

namespace detail {

// Eigenvalues closer than this are treated as one degenerate eigenvalue.
inline constexpr double kTieTolerance = 1e-8;

template <typename Scalar>
MatrixX<Scalar> normalized_similarity(const SimilarityMatrix<Scalar>& S) {
  const VectorX<Scalar> r = S.volumes().cwiseSqrt().cwiseInverse();
  MatrixX<Scalar> N = r.asDiagonal() * S.matrix() * r.asDiagonal();
  // Restore exact symmetry lost to rounding.
  return Scalar(0.5) * (N + N.transpose());
}

template <typename Scalar>
void flip_to_positive_peak(MatrixX<Scalar>& U) {
  for (Index k = 0; k < U.cols(); ++k) {
    Index peak = 0;
    U.col(k).cwiseAbs().maxCoeff(&peak);
    if (U(peak, k) < Scalar(0)) U.col(k) = -U.col(k);
  }
}

}  // namespace detail

/// Top-m eigenpairs of P, eigenvalues sorted descending.
///
/// The first eigenvector is pinned to the constant vector (u^1 ~ sqrt(D)),
/// also when eigenvalue 1 is repeated because the graph is disconnected; the
/// rest of that eigenspace is re-orthogonalized against it.
template <typename Scalar>
SpectralDecomp<Scalar> decompose(const SimilarityMatrix<Scalar>& S, Index m) {
  const Index n = S.size();
  if (m < 1 || m > n) throw data_error("requested " + std::to_string(m) + " eigenpairs of a " + std::to_string(n) + "-point graph");

  const MatrixX<Scalar> N = detail::normalized_similarity(S);
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> solver(N);
  if (solver.info() != Eigen::Success)
    throw numerical_error("symmetric eigensolver did not converge (n = " + std::to_string(n) +
                          ", max |N_ij| = " + std::to_string(static_cast<double>(N.cwiseAbs().maxCoeff())) + ")");

  VectorX<Scalar> lambda = solver.eigenvalues().reverse();
  MatrixX<Scalar> U = solver.eigenvectors().rowwise().reverse();

  const VectorX<Scalar> sqrt_d = S.volumes().cwiseSqrt();
  const VectorX<Scalar> q = sqrt_d.normalized();
  Index ones = 1;
  while (ones < n && std::abs(lambda[ones] - lambda[0]) < Scalar(detail::kTieTolerance)) ++ones;
  if (ones > 1) {
    MatrixX<Scalar> R = U.leftCols(ones) - q * (q.transpose() * U.leftCols(ones));
    Index weakest = 0;
    R.colwise().norm().minCoeff(&weakest);
    Index out = 1;
    for (Index k = 0; k < ones; ++k) {
      if (k == weakest) continue;
      VectorX<Scalar> r = R.col(k);
      r -= q * q.dot(r);
      for (Index j = 1; j < out; ++j) r -= U.col(j) * U.col(j).dot(r);
      U.col(out) = r.normalized();
      lambda[out] = U.col(out).dot(N * U.col(out));
      ++out;
    }
  }
  U.col(0) = q;
  lambda[0] = q.dot(N * q);
  detail::flip_to_positive_peak(U);

  SpectralDecomp<Scalar> d;
  d.eigenvalues = lambda.head(m);
  d.orthonormal = U.leftCols(m);
  d.right = sqrt_d.cwiseInverse().asDiagonal() * d.orthonormal;
  d.left = sqrt_d.asDiagonal() * d.orthonormal;
  d.stationary = S.volumes() / S.total_volume();
  return d;
}

/// All eigenvalues of P, descending, without eigenvectors.
template <typename Scalar>
VectorX<Scalar> eigenvalues(const SimilarityMatrix<Scalar>& S) {
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> solver(detail::normalized_similarity(S), Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw numerical_error("symmetric eigensolver did not converge (n = " + std::to_string(S.size()) + ")");
  return solver.eigenvalues().reverse();
}

/// True when eigenvalue k (0-based) is within the tie tolerance of a neighbor.
template <typename Scalar>
bool near_degenerate(const VectorX<Scalar>& lambda, Index k) {
  const Scalar tol(detail::kTieTolerance);
  return (k > 0 && std::abs(lambda[k] - lambda[k - 1]) <= tol) ||
         (k + 1 < lambda.size() && std::abs(lambda[k] - lambda[k + 1]) <= tol);
}

template <typename Scalar>
struct EigenvalueDerivative {
  Scalar value = 0;
  bool near_degenerate = false;  // one-sided value from the solver's basis
};

/// First-order change of eigenvalue k under the perturbation P + dP: w^k . (dP v^k).
template <typename Scalar>
EigenvalueDerivative<Scalar> eigenvalue_gradient(const SpectralDecomp<Scalar>& d, Index k, const MatrixX<Scalar>& dP) {
  if (k < 0 || k >= d.size()) throw data_error("eigenvalue index " + std::to_string(k) + " not computed");
  return {d.left.col(k).dot(dP * d.right.col(k)), near_degenerate(d.eigenvalues, k)};
}

/// d lambda_k / d S_il with all n^2 entries of S independent:
/// v_i (v_l - lambda_k v_i).
template <typename Scalar>
MatrixX<Scalar> eigenvalue_sensitivity(const SpectralDecomp<Scalar>& d, Index k) {
  if (k < 0 || k >= d.size()) throw data_error("eigenvalue index " + std::to_string(k) + " not computed");
  const auto v = d.right.col(k);
  MatrixX<Scalar> M = v * v.transpose();
  M.colwise() -= d.eigenvalues[k] * v.cwiseAbs2();
  return M;
}

struct PcIndexOptions {
  double bandwidth = 0.05;
  int grid_points = 64;
};

/// Piecewise-constancy score of an eigenvector; lower is more piecewise constant.
///
/// Entries are rescaled affinely to [0, 1], smoothed by a pi-weighted Gaussian
/// kernel density on a uniform grid over [0, 1], and scored by the entropy of
/// the discretized density divided by log(grid size).
template <typename Scalar>
double pc_index(const VectorX<Scalar>& v, const VectorX<Scalar>& pi, const PcIndexOptions& opt = {}) {
  if (v.size() != pi.size() || v.size() == 0) throw data_error("pc_index: vector and weights differ in length");
  if (opt.grid_points < 2 || !(opt.bandwidth > 0)) throw data_error("pc_index: need >= 2 grid points and positive bandwidth");
  const double lo = static_cast<double>(v.minCoeff());
  const double range = static_cast<double>(v.maxCoeff()) - lo;
  if (!(range >= 1e-12)) throw data_error("pc_index is undefined for a constant vector");

  const double wsum = static_cast<double>(pi.sum());
  const int G = opt.grid_points;
  std::vector<double> density(static_cast<std::size_t>(G), 0.0);
  const double inv_h = 1.0 / opt.bandwidth;
  for (Index i = 0; i < v.size(); ++i) {
    const double t = (static_cast<double>(v[i]) - lo) / range;
    const double w = static_cast<double>(pi[i]) / wsum;
    for (int g = 0; g < G; ++g) {
      const double z = (static_cast<double>(g) / (G - 1) - t) * inv_h;
      density[static_cast<std::size_t>(g)] += w * std::exp(-0.5 * z * z);
    }
  }
  double total = 0.0;
  for (double p : density) total += p;
  double entropy = 0.0;
  for (double p : density) {
    const double q = p / total;
    if (q > 0) entropy -= q * std::log(q);
  }
  return entropy / std::log(static_cast<double>(G));
}

/// Eigenvectors chosen for clustering: 0-based indices, first is always 0.
struct EigSelection {
  std::vector<Index> indices;  // strictly increasing
  Index next = 0;              // smallest index not selected
  bool clamped = false;        // K' was reduced to n - 1

  Index clusters() const noexcept { return static_cast<Index>(indices.size()); }
  Index last() const { return indices.back(); }
  bool contiguous() const {
    for (std::size_t k = 0; k < indices.size(); ++k)
      if (indices[k] != static_cast<Index>(k)) return false;
    return true;
  }
  /// Eigenpairs a decomposition must hold to evaluate objectives with this selection.
  Index required_pairs() const { return std::max(last(), next) + 1; }

  static EigSelection leading(Index K) {
    EigSelection s;
    for (Index k = 0; k < K; ++k) s.indices.push_back(k);
    s.next = K;
    return s;
  }
};

inline Index default_candidate_count(Index K) { return std::max<Index>(2 * K, 10); }

/// Keeps eigenvector 0 and the K-1 lowest-scoring of 1..K'-1 (0-based);
/// equal scores go to the smaller index.
template <typename Scalar>
EigSelection select_eigenvectors(const SpectralDecomp<Scalar>& d, Index K, Index Kprime, const PcIndexOptions& opt = {}) {
  const Index n = d.points();
  EigSelection sel;
  if (Kprime > n - 1) {
    Kprime = n - 1;
    sel.clamped = true;
  }
  if (K < 1 || K > Kprime) throw data_error("need 1 <= K <= K' (K = " + std::to_string(K) + ", K' = " + std::to_string(Kprime) + ")");
  if (d.size() < Kprime + 1)
    throw data_error("selection among " + std::to_string(Kprime) + " eigenvectors needs " + std::to_string(Kprime + 1) +
                     " computed pairs, have " + std::to_string(d.size()));

  std::vector<double> score(static_cast<std::size_t>(Kprime), std::numeric_limits<double>::infinity());
  for (Index k = 1; k < Kprime; ++k) score[static_cast<std::size_t>(k)] = pc_index<Scalar>(d.right.col(k), d.stationary, opt);

  std::vector<char> taken(static_cast<std::size_t>(Kprime + 1), 0);
  taken[0] = 1;
  constexpr double kScoreTie = 1e-12;
  for (Index pick = 1; pick < K; ++pick) {
    Index best = -1;
    for (Index k = 1; k < Kprime; ++k) {
      if (taken[static_cast<std::size_t>(k)]) continue;
      if (best < 0 || score[static_cast<std::size_t>(k)] < score[static_cast<std::size_t>(best)] - kScoreTie) best = k;
    }
    taken[static_cast<std::size_t>(best)] = 1;
  }
  for (Index k = 0; k <= Kprime; ++k) {
    if (taken[static_cast<std::size_t>(k)])
      sel.indices.push_back(k);
    else if (sel.next == 0)
      sel.next = k;
  }
  return sel;
}

using SpectralDecompd = SpectralDecomp<double>;

}  // namespace usl
