#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <random>

#include "support.hpp"
#include "usl/spectra.hpp"

using namespace usl;
using usl::test::block_similarity;
using usl::test::random_similarity;

namespace {

// Eigenvalues of P from the general (nonsymmetric) solver, descending.
Eigen::VectorXd brute_force_eigenvalues(const SimilarityMatrixd& S) {
  const Eigen::MatrixXd P = transition(S).P;
  Eigen::EigenSolver<Eigen::MatrixXd> es(P, false);
  Eigen::VectorXd re = es.eigenvalues().real();
  std::sort(re.data(), re.data() + re.size(), std::greater<>());
  return re;
}

void check_decomposition(const SimilarityMatrixd& S, const SpectralDecompd& d) {
  const Eigen::MatrixXd P = transition(S).P;
  CHECK(std::abs(d.eigenvalues[0] - 1.0) <= 1e-10);
  for (Index k = 0; k < d.size(); ++k) {
    CHECK(d.eigenvalues[k] <= 1.0 + 1e-10);
    CHECK(d.eigenvalues[k] >= -1.0 - 1e-10);
    if (k > 0) CHECK(d.eigenvalues[k] <= d.eigenvalues[k - 1] + 1e-12);
    const Eigen::VectorXd v = d.right.col(k);
    const Eigen::VectorXd w = d.left.col(k);
    CHECK((P * v - d.eigenvalues[k] * v).lpNorm<Eigen::Infinity>() <= 1e-8);
    CHECK((P.transpose() * w - d.eigenvalues[k] * w).lpNorm<Eigen::Infinity>() <= 1e-8);
    CHECK(w.dot(v) == doctest::Approx(1.0).epsilon(1e-10));
  }
  const Eigen::VectorXd v1 = d.right.col(0);
  CHECK(v1.maxCoeff() - v1.minCoeff() <= 1e-8);
}

}  // namespace

TEST_CASE("two disconnected blocks") {
  const auto S = block_similarity({2, 2});
  const auto d = decompose(S, 4);
  CHECK(d.eigenvalues[0] == doctest::Approx(1.0));
  CHECK(d.eigenvalues[1] == doctest::Approx(1.0));
  CHECK(std::abs(d.eigenvalues[2]) <= 1e-12);
  CHECK(std::abs(d.eigenvalues[3]) <= 1e-12);
  check_decomposition(S, d);
  const Eigen::MatrixXd V = d.right.leftCols(2);
  for (int b = 0; b < 2; ++b) {
    Eigen::VectorXd indicator = Eigen::VectorXd::Zero(4);
    indicator.segment(2 * b, 2).setOnes();
    const Eigen::VectorXd coef = V.colPivHouseholderQr().solve(indicator);
    CHECK((V * coef - indicator).norm() <= 1e-10);
  }
}

TEST_CASE("bipartite swap graph") {
  Eigen::Matrix2d M;
  M << 0, 1, 1, 0;
  const SimilarityMatrixd S(M);
  const auto d = decompose(S, 2);
  CHECK(d.eigenvalues[0] == doctest::Approx(1.0));
  CHECK(d.eigenvalues[1] == doctest::Approx(-1.0));
  CHECK(d.right(0, 0) == doctest::Approx(d.right(1, 0)));
  CHECK(d.right(0, 1) == doctest::Approx(-d.right(1, 1)));
  check_decomposition(S, d);
}

TEST_CASE("eigenvalues match a brute-force solve") {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 10; ++rep) {
    const auto S = random_similarity(8, rng);
    const auto d = decompose(S, 8);
    const Eigen::VectorXd oracle = brute_force_eigenvalues(S);
    CHECK((d.eigenvalues - oracle).lpNorm<Eigen::Infinity>() <= 1e-9);
    CHECK((eigenvalues(S) - oracle).lpNorm<Eigen::Infinity>() <= 1e-9);
    CHECK(d.eigenvalues.sum() == doctest::Approx(transition(S).P.trace()).epsilon(1e-8));
    check_decomposition(S, d);
  }
}

TEST_CASE("partial decompositions are prefixes of the full one") {
  std::mt19937_64 rng(4);
  const auto S = random_similarity(15, rng);
  const auto full = decompose(S, 15);
  const auto part = decompose(S, 5);
  CHECK(part.size() == 5);
  CHECK((part.eigenvalues - full.eigenvalues.head(5)).norm() <= 1e-12);
  CHECK((part.right - full.right.leftCols(5)).norm() <= 1e-10);
}

TEST_CASE("disconnected graphs keep a constant first eigenvector") {
  const auto S = block_similarity({3, 4, 2});
  const auto d = decompose(S, 9);
  check_decomposition(S, d);
  CHECK(d.eigenvalues[2] == doctest::Approx(1.0));
  CHECK(d.eigenvalues[3] < 0.5);
}

TEST_CASE("decomposition is deterministic") {
  std::mt19937_64 rng(44);
  const auto S = random_similarity(20, rng);
  const auto a = decompose(S, 10);
  const auto b = decompose(S, 10);
  CHECK(a.eigenvalues == b.eigenvalues);
  CHECK(a.right == b.right);
}

TEST_CASE("eigenvalue gradient examples") {
  std::mt19937_64 rng(5);
  SUBCASE("zero perturbation") {
    const auto d = decompose(random_similarity(6, rng), 6);
    for (Index k = 0; k < 6; ++k) CHECK(eigenvalue_gradient(d, k, Eigen::MatrixXd(Eigen::MatrixXd::Zero(6, 6))).value == 0.0);
  }
  SUBCASE("diagonal P with a diagonal perturbation") {
    SpectralDecompd d;
    d.eigenvalues = Eigen::Vector3d(0.9, 0.5, 0.1);
    d.right = d.left = d.orthonormal = Eigen::Matrix3d::Identity();
    d.stationary = Eigen::Vector3d::Constant(1.0 / 3.0);
    const Eigen::MatrixXd dP = Eigen::Vector3d(0.3, -0.2, 0.7).asDiagonal();
    for (Index k = 0; k < 3; ++k) CHECK(eigenvalue_gradient(d, k, dP).value == doctest::Approx(dP(k, k)));
  }
}

TEST_CASE("eigenvalue gradients match finite differences through theta") {
  std::mt19937_64 rng(9);
  int checked = 0;
  for (int rep = 0; rep < 12; ++rep) {
    const auto x = usl::test::random_features(10, 3, 500 + static_cast<std::uint64_t>(rep));
    const auto th = usl::test::random_params(ParamMode::Shared, 1, 3, rng, 0.5, 3.0);
    const auto S = build_similarity(x, th);
    const auto d = decompose(S, 10);
    const SimilarityGradient<double> g(x, th);
    const Eigen::VectorXd D = S.volumes();
    for (Index p = 0; p < th.size(); ++p) {
      const Eigen::MatrixXd dS = g.derivative(p);
      const Eigen::VectorXd dD = dS.rowwise().sum();
      const Eigen::MatrixXd dP = D.cwiseInverse().asDiagonal() * dS -
                                 (dD.cwiseQuotient(D.cwiseAbs2())).asDiagonal() * S.matrix();
      Eigen::VectorXd up = th.values(), down = th.values();
      up[p] += 1e-6;
      down[p] -= 1e-6;
      const Eigen::VectorXd lu = eigenvalues(build_similarity(x, th.with_values(up)));
      const Eigen::VectorXd ld = eigenvalues(build_similarity(x, th.with_values(down)));
      for (Index k = 1; k < 6; ++k) {
        const double sep = std::min(d.eigenvalues[k - 1] - d.eigenvalues[k], d.eigenvalues[k] - d.eigenvalues[k + 1]);
        if (sep < 1e-3) continue;
        const double fd = (lu[k] - ld[k]) / 2e-6;
        const double analytic = eigenvalue_gradient(d, k, dP).value;
        const double via_entries = eigenvalue_sensitivity(d, k).cwiseProduct(dS).sum();
        if (std::abs(fd) < 1e-6) continue;
        CAPTURE(k);
        CHECK(usl::test::relative_error(analytic, fd) <= 1e-4);
        CHECK(usl::test::relative_error(via_entries, fd) <= 1e-4);
        ++checked;
      }
    }
  }
  CHECK(checked > 50);
}

TEST_CASE("near-degenerate eigenvalues are flagged") {
  const auto d = decompose(block_similarity({3, 3, 3}, 1.0, 0.0), 5);
  CHECK(eigenvalue_gradient(d, 1, Eigen::MatrixXd(Eigen::MatrixXd::Zero(9, 9))).near_degenerate);
  Eigen::VectorXd lambda(3);
  lambda << 1.0, 0.5, 0.2;
  CHECK_FALSE(near_degenerate(lambda, 1));
}

TEST_CASE("pc index orderings") {
  std::mt19937_64 rng(64);
  const Index n = 64;
  const Eigen::VectorXd pi = Eigen::VectorXd::Constant(n, 1.0 / n);
  Eigen::VectorXd two(n), three(n), spread(n);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Index i = 0; i < n; ++i) {
    two[i] = i < n / 2 ? -1.0 : 1.0;
    spread[i] = u(rng);
  }
  for (Index i = 0; i < n; ++i) three[i] = i < 21 ? -1.0 : (i < 42 ? 0.0 : 1.0);
  // Two masses at the extremes of the same support.
  Eigen::VectorXd two_same(n);
  for (Index i = 0; i < n; ++i) two_same[i] = i < 32 ? -1.0 : 1.0;
  CHECK(pc_index(two, pi) < pc_index(spread, pi));
  CHECK(pc_index(two_same, pi) < pc_index(three, pi));
}

TEST_CASE("pc index invariances") {
  std::mt19937_64 rng(65);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Index n = 40;
  Eigen::VectorXd v(n), pi(n);
  for (Index i = 0; i < n; ++i) {
    v[i] = u(rng);
    pi[i] = u(rng) + 0.1;
  }
  pi /= pi.sum();
  const double base = pc_index(v, pi);
  CHECK(pc_index(Eigen::VectorXd(3.5 * v.array() - 2.0), pi) == doctest::Approx(base).epsilon(1e-12));
  CHECK(pc_index(Eigen::VectorXd(-0.25 * v.array() + 7.0), pi) == doctest::Approx(base).epsilon(1e-12));
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::VectorXd vp(n), pp(n);
  for (Index i = 0; i < n; ++i) {
    vp[i] = v[perm[static_cast<std::size_t>(i)]];
    pp[i] = pi[perm[static_cast<std::size_t>(i)]];
  }
  CHECK(pc_index(vp, pp) == doctest::Approx(base).epsilon(1e-12));
  CHECK_THROWS_AS(pc_index(Eigen::VectorXd(Eigen::VectorXd::Constant(n, 2.0)), pi), data_error);
  CHECK_THROWS_AS(pc_index(v, Eigen::VectorXd(Eigen::VectorXd::Ones(3))), data_error);
}

TEST_CASE("selection with K equal to K prime has no choice") {
  std::mt19937_64 rng(70);
  const auto d = decompose(random_similarity(12, rng), 5);
  const auto sel = select_eigenvectors(d, 4, 4);
  CHECK(sel.indices == std::vector<Index>{0, 1, 2, 3});
  CHECK(sel.next == 4);
  CHECK(sel.contiguous());
}

TEST_CASE("selection picks the block indicators of a noisy three-block graph") {
  std::mt19937_64 rng(71);
  const std::vector<int> sizes = {10, 12, 8};
  const Clustering C = usl::test::block_labels(sizes);
  std::uniform_real_distribution<double> u(0.6, 1.0), tiny(0.0, 0.01);
  Eigen::MatrixXd M(30, 30);
  for (Index j = 0; j < 30; ++j)
    for (Index i = 0; i <= j; ++i) {
      const bool same = C[static_cast<std::size_t>(i)] == C[static_cast<std::size_t>(j)];
      M(i, j) = M(j, i) = i == j ? 1.0 : (same ? u(rng) : tiny(rng));
    }
  const SimilarityMatrixd S(M);
  const Index Kp = default_candidate_count(3);
  CHECK(Kp == 10);
  const auto d = decompose(S, Kp + 1);
  const auto sel = select_eigenvectors(d, 3, Kp);
  CHECK(sel.indices == std::vector<Index>{0, 1, 2});
  CHECK(sel.next == 3);
}

TEST_CASE("equal scores resolve toward smaller indices") {
  const Index n = 12;
  SpectralDecompd d;
  d.eigenvalues = Eigen::VectorXd::LinSpaced(8, 1.0, 0.3);
  d.stationary = Eigen::VectorXd::Constant(n, 1.0 / n);
  Eigen::VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = static_cast<double>(i % 3);
  d.right = v.replicate(1, 8);
  d.right.col(0).setOnes();
  d.left = d.orthonormal = d.right;
  const auto sel = select_eigenvectors(d, 3, 7);
  CHECK(sel.indices == std::vector<Index>{0, 1, 2});
  CHECK(sel.next == 3);
}

TEST_CASE("selection invariants and clamping") {
  std::mt19937_64 rng(72);
  for (int rep = 0; rep < 10; ++rep) {
    const auto S = random_similarity(15, rng);
    const auto d = decompose(S, 11);
    const auto sel = select_eigenvectors(d, 3, 10);
    REQUIRE(sel.indices.size() == 3);
    CHECK(sel.indices.front() == 0);
    CHECK(std::is_sorted(sel.indices.begin(), sel.indices.end()));
    CHECK(std::adjacent_find(sel.indices.begin(), sel.indices.end()) == sel.indices.end());
    CHECK(std::find(sel.indices.begin(), sel.indices.end(), sel.next) == sel.indices.end());
    CHECK(sel.required_pairs() <= 11);
  }
  const auto small = decompose(random_similarity(6, rng), 6);
  const auto clamped = select_eigenvectors(small, 2, 10);
  CHECK(clamped.clamped);
  CHECK(clamped.indices.size() == 2);
  CHECK_THROWS_AS(select_eigenvectors(small, 6, 10), data_error);
  CHECK_THROWS_AS(select_eigenvectors(decompose(random_similarity(20, rng), 4), 2, 10), data_error);
}

TEST_CASE("decompose rejects impossible requests") {
  std::mt19937_64 rng(73);
  const auto S = random_similarity(4, rng);
  CHECK_THROWS_AS(decompose(S, 5), data_error);
  CHECK_THROWS_AS(decompose(S, 0), data_error);
  const auto d = decompose(S, 2);
  CHECK_THROWS_AS(eigenvalue_gradient(d, 2, Eigen::MatrixXd(Eigen::MatrixXd::Zero(4, 4))), data_error);
}
