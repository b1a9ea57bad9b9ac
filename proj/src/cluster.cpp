#include "usl/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "usl/criteria.hpp"
#include "usl/errors.hpp"

namespace usl {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::vector<int> assign_nearest(const MatrixXd& rows, const MatrixXd& centers) {
  const Index n = rows.rows();
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    Index best = 0;
    (centers.rowwise() - rows.row(i)).rowwise().squaredNorm().minCoeff(&best);
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return labels;
}

MatrixXd cluster_means(const MatrixXd& rows, const std::vector<int>& labels, const MatrixXd& previous) {
  MatrixXd centers = MatrixXd::Zero(previous.rows(), rows.cols());
  std::vector<Index> count(static_cast<std::size_t>(previous.rows()), 0);
  for (Index i = 0; i < rows.rows(); ++i) {
    centers.row(labels[static_cast<std::size_t>(i)]) += rows.row(i);
    ++count[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
  }
  for (Index c = 0; c < centers.rows(); ++c) {
    if (count[static_cast<std::size_t>(c)] > 0)
      centers.row(c) /= static_cast<double>(count[static_cast<std::size_t>(c)]);
    else
      centers.row(c) = previous.row(c);
  }
  return centers;
}

// Moves the farthest point of a multi-member cluster into each empty cluster.
void repair_empty(const MatrixXd& rows, std::vector<int>& labels, MatrixXd& centers) {
  const Index K = centers.rows();
  std::vector<Index> count(static_cast<std::size_t>(K), 0);
  for (int c : labels) ++count[static_cast<std::size_t>(c)];
  for (Index c = 0; c < K; ++c) {
    if (count[static_cast<std::size_t>(c)] > 0) continue;
    Index far = -1;
    double far_d = -1;
    for (Index i = 0; i < rows.rows(); ++i) {
      const int ci = labels[static_cast<std::size_t>(i)];
      if (count[static_cast<std::size_t>(ci)] < 2) continue;
      const double d = (rows.row(i) - centers.row(ci)).squaredNorm();
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    --count[static_cast<std::size_t>(labels[static_cast<std::size_t>(far)])];
    labels[static_cast<std::size_t>(far)] = static_cast<int>(c);
    count[static_cast<std::size_t>(c)] = 1;
    centers.row(c) = rows.row(far);
  }
}

MatrixXd orthogonal_centers(const MatrixXd& rows, int K, Index first) {
  const Index n = rows.rows();
  const VectorXd norms = rows.rowwise().norm();
  std::vector<Index> chosen{first};
  std::vector<char> used(static_cast<std::size_t>(n), 0);
  used[static_cast<std::size_t>(first)] = 1;
  // max |cos| of each row against the chosen centers
  VectorXd worst = VectorXd::Zero(n);
  auto update = [&](Index c) {
    for (Index i = 0; i < n; ++i) {
      const double denom = norms[i] * norms[c];
      const double cosine = denom > 0 ? std::abs(rows.row(i).dot(rows.row(c))) / denom : 1.0;
      worst[i] = std::max(worst[i], cosine);
    }
  };
  update(first);
  while (static_cast<int>(chosen.size()) < K) {
    Index best = -1;
    for (Index i = 0; i < n; ++i)
      if (!used[static_cast<std::size_t>(i)] && (best < 0 || worst[i] < worst[best])) best = i;
    chosen.push_back(best);
    used[static_cast<std::size_t>(best)] = 1;
    update(best);
  }
  MatrixXd centers(K, rows.cols());
  for (int c = 0; c < K; ++c) centers.row(c) = rows.row(chosen[static_cast<std::size_t>(c)]);
  return centers;
}

bool candidate_less(const Candidate& a, const Candidate& b) {
  if (a.mncut != b.mncut) return a.mncut < b.mncut;
  return std::lexicographical_compare(a.clustering.labels().begin(), a.clustering.labels().end(),
                                      b.clustering.labels().begin(), b.clustering.labels().end());
}

}  // namespace

KMeansResult kmeans(const MatrixXd& rows, int K, const KMeansOptions& options) {
  const Index n = rows.rows();
  if (K < 1) throw data_error("kmeans needs K >= 1");
  if (K > n) throw data_error("kmeans with K = " + std::to_string(K) + " on only " + std::to_string(n) + " points");

  std::mt19937_64 rng(options.seed);
  std::vector<int> labels(static_cast<std::size_t>(n));
  MatrixXd centers = MatrixXd::Zero(K, rows.cols());
  if (options.init == KMeansInit::RandomPartition) {
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (Index r = 0; r < n; ++r) labels[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = static_cast<int>(r % K);
    centers = cluster_means(rows, labels, centers);
  } else {
    Index first = 0;
    if (options.first_center) {
      first = *options.first_center;
      if (first < 0 || first >= n) throw data_error("kmeans first center out of range");
    } else {
      rows.rowwise().squaredNorm().maxCoeff(&first);
    }
    centers = orthogonal_centers(rows, K, first);
  }

  KMeansResult result;
  labels = assign_nearest(rows, centers);
  for (result.iterations = 1; result.iterations < options.max_iterations; ++result.iterations) {
    repair_empty(rows, labels, centers);
    centers = cluster_means(rows, labels, centers);
    std::vector<int> next = assign_nearest(rows, centers);
    if (next == labels) break;
    labels = std::move(next);
  }
  repair_empty(rows, labels, centers);
  centers = cluster_means(rows, labels, centers);
  for (Index i = 0; i < n; ++i) result.distortion += (rows.row(i) - centers.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
  result.clustering = Clustering(std::move(labels), K);
  return result;
}

bool CandidateSet::contains(const Clustering& c) const {
  return std::any_of(members.begin(), members.end(), [&](const Candidate& m) { return same_partition(m.clustering, c); });
}

CandidateSet cluster_spectral(const SimilarityMatrixd& S, int K, const SpectralDecompd& decomp, const EigSelection& selection,
                              const SpectralClusteringOptions& options) {
  if (options.restarts < 1) throw data_error("cluster_spectral needs at least one restart");
  if (selection.clusters() != K) throw data_error("eigenvector selection size differs from K");
  if (decomp.size() <= selection.last()) throw data_error("decomposition lacks selected eigenvectors");

  const Index n = decomp.points();
  MatrixXd rows(n, K);
  for (int k = 0; k < K; ++k) rows.col(k) = decomp.right.col(selection.indices[static_cast<std::size_t>(k)]);
  if (options.row_normalize)
    for (Index i = 0; i < n; ++i)
      if (rows.row(i).norm() > 0) rows.row(i).normalize();

  CandidateSet out;
  for (int r = 0; r < options.restarts; ++r) {
    KMeansOptions ko;
    ko.seed = mix_seed(options.seed, static_cast<std::uint64_t>(r));
    ko.init = r % 2 == 1 ? KMeansInit::RandomPartition : KMeansInit::OrthogonalCenters;
    if (r > 0 && ko.init == KMeansInit::OrthogonalCenters) {
      std::mt19937_64 pick(ko.seed);
      ko.first_center = std::uniform_int_distribution<Index>(0, n - 1)(pick);
    }
    Clustering c = kmeans(rows, K, ko).clustering.canonical();
    if (out.contains(c)) continue;
    const double mn = mncut(S, c);
    out.members.push_back({std::move(c), mn});
  }
  std::sort(out.members.begin(), out.members.end(), candidate_less);
  return out;
}

CandidateSet cluster_spectral(const SimilarityMatrixd& S, int K, const std::optional<EigSelection>& selection,
                              const SpectralClusteringOptions& options) {
  const EigSelection sel = selection ? *selection : EigSelection::leading(K);
  const auto decomp = decompose(S, std::min<Index>(S.size(), sel.last() + 1));
  return cluster_spectral(S, K, decomp, sel, options);
}

std::vector<int> max_weight_assignment(const MatrixXd& weights) {
  const Index m = weights.rows();
  if (weights.cols() != m) throw data_error("assignment needs a square weight matrix");
  if (m == 0) return {};
  // Hungarian algorithm with potentials on cost = max - weight (1-based arrays).
  const double top = weights.maxCoeff();
  const double inf = std::numeric_limits<double>::infinity();
  const std::size_t M = static_cast<std::size_t>(m);
  std::vector<double> u(M + 1, 0), v(M + 1, 0);
  std::vector<std::size_t> p(M + 1, 0), way(M + 1, 0);
  for (std::size_t i = 1; i <= M; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(M + 1, inf);
    std::vector<char> used(M + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= M; ++j) {
        if (used[j]) continue;
        const double cur = (top - weights(static_cast<Index>(i0 - 1), static_cast<Index>(j - 1))) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= M; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> result(M, 0);
  for (std::size_t j = 1; j <= M; ++j) result[p[j] - 1] = static_cast<int>(j - 1);
  return result;
}

namespace {

MatrixXd confusion(const Clustering& a, const Clustering& b, Index size) {
  MatrixXd c = MatrixXd::Zero(size, size);
  for (std::size_t i = 0; i < a.size(); ++i) c(a[i], b[i]) += 1;
  return c;
}

}  // namespace

double classification_error(const Clustering& pred, const Clustering& truth) {
  if (pred.size() != truth.size())
    throw data_error("prediction has " + std::to_string(pred.size()) + " labels, truth has " + std::to_string(truth.size()));
  if (pred.size() == 0) return 0.0;
  const Index m = std::max(pred.clusters(), truth.clusters());
  const MatrixXd conf = confusion(pred, truth, m);
  const auto match = max_weight_assignment(conf);
  double agree = 0;
  for (Index r = 0; r < m; ++r) agree += conf(r, match[static_cast<std::size_t>(r)]);
  return 1.0 - agree / static_cast<double>(pred.size());
}

Clustering align_labels(const Clustering& c, const Clustering& reference) {
  if (c.size() != reference.size() || c.clusters() != reference.clusters())
    throw data_error("label alignment needs clusterings of equal size and K");
  const auto match = max_weight_assignment(confusion(c, reference, c.clusters()));
  return c.relabeled(match);
}

}  // namespace usl
