#include <doctest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "usl/cluster.hpp"
#include "usl/data.hpp"
#include "usl/learn.hpp"

using namespace usl;
using usl::test::block_labels;
using usl::test::random_clustering;

namespace {

// Two groups of duplicated points far apart: exactly block-constant S.
FeatureTensord exact_blocks(const std::vector<int>& sizes, double between = 50.0) {
  const Clustering C = block_labels(sizes);
  const Index n = static_cast<Index>(C.size());
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (C[static_cast<std::size_t>(i)] != C[static_cast<std::size_t>(j)]) x(i, j) = between;
  return FeatureTensord({x});
}

PointSet blobs(std::vector<int> counts, int noisy_dims, std::uint64_t seed, double sd = 0.5) {
  auto spec = GaussianSpec::defaults(std::move(counts), noisy_dims, 1.0);
  std::fill(spec.deviations.begin(), spec.deviations.end(), sd);
  return gen_gaussians(spec, seed);
}

LearnConfig base_config(int K, double alpha, std::uint64_t seed) {
  LearnConfig cfg;
  cfg.K = K;
  cfg.alpha = alpha;
  cfg.seed = seed;
  cfg.restarts = 6;
  cfg.max_iterations = 15;
  cfg.max_inner_steps = 15;
  return cfg;
}

bool non_increasing(const std::vector<double>& f, double slack = 1e-12) {
  for (std::size_t i = 1; i < f.size(); ++i)
    if (f[i] > f[i - 1] + slack) return false;
  return true;
}

}  // namespace

TEST_CASE("configuration validation") {
  LearnConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto bad = [](auto mutate) {
    LearnConfig c;
    mutate(c);
    CHECK_THROWS_AS(c.validate(), data_error);
  };
  bad([](LearnConfig& c) { c.alpha = -1; });
  bad([](LearnConfig& c) { c.K = 0; });
  bad([](LearnConfig& c) { c.p_reclust = 1.5; });
  bad([](LearnConfig& c) { c.restarts = 0; });
  bad([](LearnConfig& c) { c.max_targets = 0; });
  bad([](LearnConfig& c) { c.armijo.backtrack = 1.0; });
  bad([](LearnConfig& c) { c.armijo.slope = 0.0; });
  CHECK(cfg.effective_probe_restarts() == 5);
  cfg.probe_restarts = 2;
  CHECK(cfg.effective_probe_restarts() == 2);
}

TEST_CASE("c_step collapses to the block partition on separated blocks") {
  const auto points = blobs({12, 15}, 0, 3, 0.2);
  const auto x = pairwise_features(points);
  const auto th = ParamSetd::uniform(ParamMode::Shared, 1, x.features(), 1.0);
  auto cfg = base_config(2, 0.5, 1);
  std::mt19937_64 rng(1);
  const auto c = c_step(th, TargetSet::single(random_clustering(27, 2, rng)), x, cfg, 7);
  CHECK(c.targets.size() == 1);
  CHECK(same_partition(c.targets.best(), *points.labels));
  CHECK(c.incumbent_changed);
  CHECK(c.eigengap > 0.5);
}

TEST_CASE("c_step keeps a still-minimal incumbent") {
  const auto points = blobs({12, 15}, 0, 3, 0.2);
  const auto x = pairwise_features(points);
  const auto th = ParamSetd::uniform(ParamMode::Shared, 1, x.features(), 1.0);
  for (int max_targets : {1, 6}) {
    auto cfg = base_config(2, 0.5, 1);
    cfg.max_targets = max_targets;
    const auto c = c_step(th, TargetSet::single(*points.labels), x, cfg, 9);
    CHECK_FALSE(c.incumbent_changed);
    CHECK(c.targets.best() == *points.labels);
  }
}

TEST_CASE("zero eigengap widens the cutoff to e") {
  // All-zero features: S is all ones, every 2-way split has MNCut 1.
  const FeatureTensord x({Eigen::MatrixXd::Zero(8, 8)});
  const auto th = ParamSetd::uniform(ParamMode::Shared, 1, 1, 1.0);
  auto cfg = base_config(2, 0.0, 2);
  cfg.restarts = 20;
  cfg.max_targets = 3;
  std::mt19937_64 rng(4);
  const auto c = c_step(th, TargetSet::single(random_clustering(8, 2, rng)), x, cfg, 11);
  CHECK(c.eigengap == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(c.cutoff == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
  // Every split ties, so all distinct candidates survive with equal weight.
  REQUIRE(c.targets.size() >= 2);
  CHECK(c.targets.size() <= 3);
  for (double w : c.targets.weights) CHECK(w == doctest::Approx(1.0 / static_cast<double>(c.targets.size())));
}

TEST_CASE("c_step target sets are weighted by softmax of minus MNCut") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 8; ++rep) {
    const auto points = blobs({10, 9, 11}, 2, 20 + static_cast<std::uint64_t>(rep), 1.5);
    const auto x = pairwise_features(points);
    const auto th = ParamSetd::uniform(ParamMode::Shared, 1, x.features(), 0.6);
    auto cfg = base_config(3, 0.5, 3);
    cfg.restarts = 12;
    const auto prev = TargetSet::single(random_clustering(30, 3, rng));
    const auto c = c_step(th, prev, x, cfg, 13 + static_cast<std::uint64_t>(rep));
    REQUIRE_NOTHROW(c.targets.validate());
    CHECK(c.targets.size() <= 6);
    const auto S = build_similarity(x, prev.best(), th);
    double total = 0;
    for (const auto& C : c.targets.clusterings) total += std::exp(-mncut(S, C));
    for (std::size_t t = 0; t < c.targets.size(); ++t)
      CHECK(c.targets.weights[t] == doctest::Approx(std::exp(-mncut(S, c.targets.clusterings[t])) / total).epsilon(1e-12));
    // Never a worse incumbent.
    CHECK(mncut(S, c.targets.best()) <= mncut(S, prev.best()) + 1e-12);
  }
}

TEST_CASE("s_step leaves a stationary point alone") {
  const auto x = exact_blocks({5, 6});
  const auto th = ParamSetd::uniform(ParamMode::Shared, 1, 1, 1.0);
  auto cfg = base_config(2, 0.0, 4);
  std::mt19937_64 rng(1);
  const auto s = s_step(th, TargetSet::single(block_labels({5, 6})), x, cfg, 0.0, rng, 3);
  CHECK(s.stationary);
  CHECK(s.step_sizes.empty());
  CHECK(s.params.values() == th.values());
}

TEST_CASE("s_step strictly decreases the objective") {
  const auto points = blobs({12, 10, 9}, 2, 51, 1.2);
  const auto x = pairwise_features(points);
  auto cfg = base_config(3, 0.0, 5);
  cfg.max_inner_steps = 20;
  std::mt19937_64 rng(2);
  const auto s = s_step(ParamSetd::uniform(ParamMode::Shared, 1, x.features(), 0.5), TargetSet::single(*points.labels), x, cfg,
                        0.0, rng, 4);
  REQUIRE(!s.f_values.empty());
  CHECK(s.f_values.front() < s.f_start);
  for (std::size_t i = 1; i < s.f_values.size(); ++i) CHECK(s.f_values[i] < s.f_values[i - 1]);
  CHECK((s.params.values().array() >= 0).all());
}

TEST_CASE("a stable probe halves the reclustering probability") {
  const auto points = blobs({10, 12}, 1, 61, 0.3);
  const auto x = pairwise_features(points);
  auto cfg = base_config(2, 0.5, 6);
  cfg.max_inner_steps = 4;
  std::mt19937_64 rng(3);
  const auto s = s_step(ParamSetd::uniform(ParamMode::Shared, 1, x.features(), 0.5), TargetSet::single(*points.labels), x, cfg,
                        1.0, rng, 5);
  REQUIRE(!s.step_sizes.empty());
  CHECK(s.probes >= 1);
  CHECK_FALSE(s.stopped_by_probe);
  CHECK(s.p_reclust == doctest::Approx(std::max(cfg.p_reclust_floor, std::pow(0.5, s.probes))));
  CHECK(s.step_sizes.size() > 1);
}

TEST_CASE("learning separates two one-dimensional clusters") {
  Eigen::MatrixXd p(20, 1);
  for (Index i = 0; i < 20; ++i) p(i, 0) = (i < 10 ? 0.0 : 10.0) + 0.05 * static_cast<double>(i % 10);
  const auto x = pairwise_features(p);
  std::vector<int> truth(20, 0);
  std::fill(truth.begin() + 10, truth.end(), 1);
  auto cfg = base_config(2, 0.5, 7);
  const auto res = run(x, cfg, ParamSetd::uniform(ParamMode::Shared, 1, 1, 0.5));
  CHECK(res.status == "converged");
  CHECK(classification_error(res.clustering, Clustering(truth, 2)) == 0.0);
  CHECK(res.final_objective.gap <= 1e-6);
}

TEST_CASE("single-target runs without regularization never increase f") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto points = blobs({9, 11, 10}, 2, 70 + seed, 1.3);
    const auto x = pairwise_features(points);
    auto cfg = base_config(3, 0.0, seed);
    cfg.max_targets = 1;
    const auto res = run(x, cfg, ParamSetd::uniform(ParamMode::Shared, 1, x.features(), 0.4));
    CAPTURE(seed);
    CHECK(res.status != "numerical_failure");
    CHECK(non_increasing(res.f_history));
    CHECK(res.final_objective.value >= -1e-9);
  }
}

TEST_CASE("single-target runs with regularization never increase f") {
  const auto points = blobs({9, 11, 10}, 2, 80, 1.3);
  const auto x = pairwise_features(points);
  auto cfg = base_config(3, 1.0, 8);
  cfg.max_targets = 1;
  const auto res = run(x, cfg, ParamSetd::uniform(ParamMode::Shared, 1, x.features(), 0.4));
  CHECK(non_increasing(res.f_history));
  CHECK(res.final_objective.value >= -4.0);
}

TEST_CASE("runs are deterministic") {
  const auto points = blobs({8, 10, 9}, 2, 90, 1.0);
  const auto x = pairwise_features(points);
  auto cfg = base_config(3, 0.5, 9);
  const auto th0 = ParamSetd::uniform(ParamMode::Shared, 1, x.features(), 0.5);
  const auto a = run(x, cfg, th0);
  const auto b = run(x, cfg, th0);
  CHECK(a.params.values() == b.params.values());
  CHECK(a.clustering == b.clustering);
  CHECK(a.f_history == b.f_history);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].objective.value == b.trace[i].objective.value);
    CHECK(a.trace[i].step_sizes == b.trace[i].step_sizes);
  }
}

TEST_CASE("multi-target runs keep valid target sets") {
  const auto points = blobs({8, 10, 9}, 3, 91, 1.6);
  const auto x = pairwise_features(points);
  auto cfg = base_config(3, 0.5, 10);
  cfg.max_targets = 4;
  const auto res = run(x, cfg, ParamSetd::uniform(ParamMode::Shared, 1, x.features(), 0.5));
  CHECK_NOTHROW(res.targets.validate());
  CHECK(res.targets.size() <= 4);
  for (const auto& rec : res.trace) CHECK(rec.targets <= 4);
}

TEST_CASE("label-dependent learning keeps parameter layout and aligned labels") {
  const auto points = blobs({10, 12}, 1, 92, 0.6);
  const auto x = pairwise_features(points);
  for (ParamMode mode : {ParamMode::ClusterProduct, ParamMode::ClusterSum, ParamMode::PairMatrix}) {
    auto cfg = base_config(2, 0.5, 11);
    cfg.max_iterations = 5;
    const auto th0 = ParamSetd::uniform(mode, 2, x.features(), 0.7);
    const auto res = run(x, cfg, th0);
    CAPTURE(to_string(mode));
    CHECK(res.status != "numerical_failure");
    CHECK(res.params.mode() == mode);
    CHECK(res.params.size() == th0.size());
    CHECK((res.params.values().array() >= 0).all());
    CHECK(classification_error(res.clustering, *points.labels) == 0.0);
  }
}

TEST_CASE("selection-based learning runs") {
  const auto points = blobs({10, 12, 9}, 2, 93, 0.8);
  const auto x = pairwise_features(points);
  auto cfg = base_config(3, 0.5, 12);
  cfg.use_selection = true;
  cfg.max_iterations = 5;
  const auto res = run(x, cfg, ParamSetd::uniform(ParamMode::Shared, 1, x.features(), 0.5));
  CHECK(res.status != "numerical_failure");
  CHECK(res.trace.size() >= 1);
}

TEST_CASE("bootstrap clustering works for label-dependent parameters") {
  const auto points = blobs({10, 12}, 0, 94, 0.3);
  const auto x = pairwise_features(points);
  auto cfg = base_config(2, 0.5, 13);
  const auto C = bootstrap_clustering(x, ParamSetd::uniform(ParamMode::ClusterSum, 2, x.features(), 0.5), cfg);
  CHECK(classification_error(C, *points.labels) == 0.0);
}

TEST_CASE("run rejects inconsistent inputs") {
  const auto points = blobs({5, 5}, 0, 95);
  const auto x = pairwise_features(points);
  auto cfg = base_config(2, 0.5, 14);
  CHECK_THROWS_AS(run(x, cfg, ParamSetd::uniform(ParamMode::Shared, 1, 3, 1.0)), data_error);
  CHECK_THROWS_AS(run(x, cfg, ParamSetd::uniform(ParamMode::ClusterSum, 3, 2, 1.0)), data_error);
  CHECK_THROWS_AS(run(x, cfg, ParamSetd::uniform(ParamMode::Shared, 1, 2, -1.0)), data_error);
  CHECK_THROWS_AS(run(x, cfg, ParamSetd::uniform(ParamMode::Shared, 1, 2, 1.0), Clustering({0, 1}, 2)), data_error);
}
