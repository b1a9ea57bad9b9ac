#pragma once

// Clustering-quality functionals of a similarity matrix and their gradients.
//
//   MNCut(C)  = K - sum_k Cut(C_k, C_k) / Vol C_k
//   gap(C)    = MNCut(C) - K + sum_{k <= K} lambda_k         >= 0
//   f_alpha   = gap - alpha * (lambda_K - lambda_{K+1})^2
//   f_tilde   = [MNCut - K + sum_k lambda_{i_k}] - alpha * (lambda_{i_K} - lambda_{i_0})
//
// Gradients with respect to S treat all n^2 entries as independent; the chain
// rule through S(theta) then counts S_ij and S_ji once each.

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "usl/clustering.hpp"
#include "usl/errors.hpp"
#include "usl/simgraph.hpp"
#include "usl/spectra.hpp"

namespace usl {

template <typename Scalar>
Scalar cut(const SimilarityMatrix<Scalar>& S, std::span<const Index> A, std::span<const Index> B) {
  const Index n = S.size();
  auto check = [n](Index i) {
    if (i < 0 || i >= n) throw data_error("node index " + std::to_string(i) + " outside [0, " + std::to_string(n) + ")");
  };
  Scalar total = 0;
  for (Index i : A) {
    check(i);
    for (Index j : B) {
      check(j);
      total += S(i, j);
    }
  }
  return total;
}

namespace detail {

inline void check_clustering(Index n, const Clustering& C) {
  if (static_cast<Index>(C.size()) != n)
    throw data_error("clustering covers " + std::to_string(C.size()) + " points, graph has " + std::to_string(n));
  if (C.clusters() < 1) throw data_error("clustering has no clusters");
}

template <typename Scalar>
struct ClusterMass {
  VectorX<Scalar> within;  // Cut(C_k, C_k)
  VectorX<Scalar> volume;  // Vol C_k
};

template <typename Scalar>
ClusterMass<Scalar> cluster_mass(const SimilarityMatrix<Scalar>& S, const Clustering& C) {
  check_clustering(S.size(), C);
  const Index n = S.size();
  const Index K = C.clusters();
  ClusterMass<Scalar> m{VectorX<Scalar>::Zero(K), VectorX<Scalar>::Zero(K)};
  const auto& M = S.matrix();
  for (Index j = 0; j < n; ++j) {
    const int cj = C[static_cast<std::size_t>(j)];
    for (Index i = 0; i < n; ++i)
      if (C[static_cast<std::size_t>(i)] == cj) m.within[cj] += M(i, j);
  }
  for (Index i = 0; i < n; ++i) m.volume[C[static_cast<std::size_t>(i)]] += S.volumes()[i];
  for (Index k = 0; k < K; ++k)
    if (!(m.volume[k] > Scalar(0))) throw data_error("cluster " + std::to_string(k) + " is empty or has zero volume");
  return m;
}

}  // namespace detail

/// MNCut from the random-walk identity: K minus the within-cluster escape-free mass.
template <typename Scalar>
Scalar mncut(const SimilarityMatrix<Scalar>& S, const Clustering& C) {
  const auto m = detail::cluster_mass(S, C);
  return Scalar(C.clusters()) - m.within.cwiseQuotient(m.volume).sum();
}

/// MNCut as the double sum of between-cluster cuts over cluster volumes.
template <typename Scalar>
Scalar mncut_by_cuts(const SimilarityMatrix<Scalar>& S, const Clustering& C) {
  detail::check_clustering(S.size(), C);
  const int K = C.clusters();
  std::vector<std::vector<Index>> members(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) members[static_cast<std::size_t>(k)] = C.members(k);
  Scalar total = 0;
  for (int k = 0; k < K; ++k) {
    const auto& Ck = members[static_cast<std::size_t>(k)];
    if (Ck.empty()) throw data_error("cluster " + std::to_string(k) + " is empty");
    Scalar vol = 0;
    for (Index i : Ck) vol += S.volumes()[i];
    for (int k2 = 0; k2 < K; ++k2)
      if (k2 != k) total += cut<Scalar>(S, Ck, members[static_cast<std::size_t>(k2)]) / vol;
  }
  return total;
}

template <typename Scalar>
Scalar eigengap(const VectorX<Scalar>& lambda, Index K) {
  if (K < 1 || lambda.size() < K + 1)
    throw data_error("eigengap for K = " + std::to_string(K) + " needs " + std::to_string(K + 1) + " eigenvalues, have " +
                     std::to_string(lambda.size()));
  return lambda[K - 1] - lambda[K];
}

template <typename Scalar>
Scalar eigengap(const SpectralDecomp<Scalar>& d, Index K) {
  return eigengap(d.eigenvalues, K);
}

template <typename Scalar>
Scalar gap(const SimilarityMatrix<Scalar>& S, const Clustering& C, const SpectralDecomp<Scalar>& d) {
  const Index K = C.clusters();
  if (d.size() < K) throw data_error("gap needs " + std::to_string(K) + " eigenvalues, have " + std::to_string(d.size()));
  return mncut(S, C) - Scalar(K) + d.eigenvalues.head(K).sum();
}

/// Weighted collection of target clusterings; weights sum to 1.
struct TargetSet {
  std::vector<Clustering> clusterings;
  std::vector<double> weights;
  std::size_t incumbent = 0;  // lowest-MNCut member; its labels build S

  static TargetSet single(Clustering C) {
    TargetSet t;
    t.clusterings.push_back(std::move(C));
    t.weights.push_back(1.0);
    return t;
  }

  std::size_t size() const noexcept { return clusterings.size(); }
  bool empty() const noexcept { return clusterings.empty(); }
  const Clustering& best() const { return clusterings.at(incumbent); }

  void validate() const {
    if (clusterings.empty()) throw data_error("target set is empty");
    if (weights.size() != clusterings.size()) throw data_error("target set has mismatched weights");
    double total = 0;
    for (double w : weights) {
      if (!(w > 0)) throw data_error("target weights must be positive");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw data_error("target weights must sum to 1");
    if (incumbent >= clusterings.size()) throw data_error("target incumbent out of range");
  }
};

enum class Regularizer {
  SquaredEigengap,  // alpha * (lambda_K - lambda_{K+1})^2
  SelectedLinear,   // alpha * (lambda_{i_K} - lambda_{i_0})
};

/// Which eigenvalues enter the objective and how the stability term is formed.
struct ObjectiveForm {
  double alpha = 0.0;
  EigSelection selection;
  Regularizer regularizer = Regularizer::SquaredEigengap;

  static ObjectiveForm leading(Index K, double alpha) { return {alpha, EigSelection::leading(K), Regularizer::SquaredEigengap}; }
  static ObjectiveForm selected(EigSelection sel, double alpha) { return {alpha, std::move(sel), Regularizer::SelectedLinear}; }
  /// Squared regularizer for the leading K eigenvectors, linear otherwise.
  static ObjectiveForm automatic(EigSelection sel, double alpha) {
    const bool lead = sel.contiguous();
    return {alpha, std::move(sel), lead ? Regularizer::SquaredEigengap : Regularizer::SelectedLinear};
  }

  Index clusters() const { return selection.clusters(); }
  Index required_pairs() const {
    return regularizer == Regularizer::SquaredEigengap ? std::max(selection.required_pairs(), clusters() + 1)
                                                       : selection.required_pairs();
  }
};

template <typename Scalar>
struct Objective {
  Scalar value = 0;
  Scalar mncut = 0;      // weighted over targets when there are several
  Scalar gap = 0;        // mncut - K + bound_sum
  Scalar eigengap = 0;   // stability term before alpha and squaring
  Scalar bound_sum = 0;  // sum of the eigenvalues entering the gap
  double alpha = 0;
};

namespace detail {

template <typename Scalar>
Objective<Scalar> assemble(Scalar mn, const VectorX<Scalar>& lambda, const ObjectiveForm& form) {
  if (lambda.size() < form.required_pairs())
    throw data_error("objective needs " + std::to_string(form.required_pairs()) + " eigenvalues, have " +
                     std::to_string(lambda.size()));
  Objective<Scalar> o;
  o.alpha = form.alpha;
  o.mncut = mn;
  for (Index k : form.selection.indices) o.bound_sum += lambda[k];
  o.gap = mn - Scalar(form.clusters()) + o.bound_sum;
  if (form.regularizer == Regularizer::SquaredEigengap) {
    o.eigengap = eigengap(lambda, form.clusters());
    o.value = o.gap - Scalar(form.alpha) * o.eigengap * o.eigengap;
  } else {
    o.eigengap = lambda[form.selection.last()] - lambda[form.selection.next];
    o.value = o.gap - Scalar(form.alpha) * o.eigengap;
  }
  return o;
}

template <typename Scalar>
Scalar weighted_mncut(const SimilarityMatrix<Scalar>& S, const TargetSet& T) {
  T.validate();
  Scalar total = 0;
  for (std::size_t t = 0; t < T.size(); ++t) total += Scalar(T.weights[t]) * mncut(S, T.clusterings[t]);
  return total;
}

}  // namespace detail

/// Regularized gap with the leading K eigenvalues and a squared eigengap.
template <typename Scalar>
Objective<Scalar> f_alpha(const SimilarityMatrix<Scalar>& S, const Clustering& C, const SpectralDecomp<Scalar>& d, double alpha) {
  if (alpha < 0) throw data_error("alpha must be non-negative");
  return detail::assemble(mncut(S, C), d.eigenvalues, ObjectiveForm::leading(C.clusters(), alpha));
}

/// Regularized gap over selected eigenvectors with the unsquared stability term.
template <typename Scalar>
Objective<Scalar> f_tilde(const SimilarityMatrix<Scalar>& S, const Clustering& C, const SpectralDecomp<Scalar>& d,
                          const EigSelection& sel, double alpha) {
  if (alpha < 0) throw data_error("alpha must be non-negative");
  if (sel.clusters() != C.clusters()) throw data_error("selection size differs from the cluster count");
  return detail::assemble(mncut(S, C), d.eigenvalues, ObjectiveForm::selected(sel, alpha));
}

/// sum_i w_i f(C_i); only the MNCut term differs between targets.
template <typename Scalar>
Objective<Scalar> weighted_objective(const SimilarityMatrix<Scalar>& S, const TargetSet& T, const VectorX<Scalar>& lambda,
                                     const ObjectiveForm& form) {
  return detail::assemble(detail::weighted_mncut(S, T), lambda, form);
}

/// d MNCut / d S_il = -([c(l) = c(i)] - Cut_kk / Vol_k) / Vol_k with k = c(i).
template <typename Scalar>
MatrixX<Scalar> mncut_sensitivity(const SimilarityMatrix<Scalar>& S, const Clustering& C) {
  const auto m = detail::cluster_mass(S, C);
  const Index n = S.size();
  const VectorX<Scalar> ratio = m.within.cwiseQuotient(m.volume);
  MatrixX<Scalar> G(n, n);
  for (Index l = 0; l < n; ++l) {
    const int cl = C[static_cast<std::size_t>(l)];
    for (Index i = 0; i < n; ++i) {
      const int ci = C[static_cast<std::size_t>(i)];
      G(i, l) = -((ci == cl ? Scalar(1) : Scalar(0)) - ratio[ci]) / m.volume[ci];
    }
  }
  return G;
}

template <typename Scalar>
struct SimilaritySensitivity {
  MatrixX<Scalar> gradient;  // d objective / d S, entries independent
  bool near_degenerate = false;
};

/// Gradient of the weighted objective with respect to the entries of S.
template <typename Scalar>
SimilaritySensitivity<Scalar> objective_sensitivity(const SimilarityMatrix<Scalar>& S, const TargetSet& T,
                                                    const SpectralDecomp<Scalar>& d, const ObjectiveForm& form) {
  T.validate();
  if (d.size() < form.required_pairs())
    throw data_error("objective gradient needs " + std::to_string(form.required_pairs()) + " eigenpairs");
  SimilaritySensitivity<Scalar> out;
  out.gradient = MatrixX<Scalar>::Zero(S.size(), S.size());
  for (std::size_t t = 0; t < T.size(); ++t) out.gradient += Scalar(T.weights[t]) * mncut_sensitivity(S, T.clusterings[t]);

  std::vector<Scalar> coef(static_cast<std::size_t>(d.size()), Scalar(0));
  for (Index k : form.selection.indices) coef[static_cast<std::size_t>(k)] += 1;
  const Scalar alpha(form.alpha);
  if (form.regularizer == Regularizer::SquaredEigengap) {
    const Index K = form.clusters();
    const Scalar delta = d.eigenvalues[K - 1] - d.eigenvalues[K];
    coef[static_cast<std::size_t>(K - 1)] -= 2 * alpha * delta;
    coef[static_cast<std::size_t>(K)] += 2 * alpha * delta;
  } else {
    coef[static_cast<std::size_t>(form.selection.last())] -= alpha;
    coef[static_cast<std::size_t>(form.selection.next)] += alpha;
  }
  for (Index k = 0; k < d.size(); ++k) {
    if (coef[static_cast<std::size_t>(k)] == Scalar(0)) continue;
    out.gradient += coef[static_cast<std::size_t>(k)] * eigenvalue_sensitivity(d, k);
    out.near_degenerate = out.near_degenerate || near_degenerate(d.eigenvalues, k);
  }
  return out;
}

template <typename Scalar>
struct ObjectiveGradient {
  Objective<Scalar> objective;
  VectorX<Scalar> gradient;  // over parameter coordinates
  bool near_degenerate = false;
};

/// Objective value only; S is built from the targets' incumbent labels.
template <typename Scalar>
Objective<Scalar> objective_value(const FeatureTensor<Scalar>& x, const ParamSet<Scalar>& theta, const TargetSet& T,
                                  const ObjectiveForm& form) {
  const auto S = build_similarity(x, T.best(), theta);
  return weighted_objective(S, T, eigenvalues(S), form);
}

/// Objective and its analytic gradient over theta, chained through
/// theta -> S -> (MNCut, P -> lambda).
template <typename Scalar>
ObjectiveGradient<Scalar> grad_f(const FeatureTensor<Scalar>& x, const ParamSet<Scalar>& theta, const TargetSet& T,
                                 const ObjectiveForm& form) {
  T.validate();
  const SimilarityGradient<Scalar> dS(x, T.best(), theta);
  const SimilarityMatrix<Scalar> S(dS.similarity());
  const auto d = decompose(S, std::min<Index>(S.size(), form.required_pairs()));
  const auto sens = objective_sensitivity(S, T, d, form);
  ObjectiveGradient<Scalar> out;
  out.objective = weighted_objective(S, T, d.eigenvalues, form);
  out.gradient = dS.contract(sens.gradient);
  out.near_degenerate = sens.near_degenerate;
  return out;
}

}  // namespace usl
