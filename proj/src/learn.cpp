#include "usl/learn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "usl/errors.hpp"

namespace usl {

void LearnConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw data_error(std::string("invalid learning configuration: ") + what);
  };
  require(K >= 1, "K >= 1");
  require(alpha >= 0, "alpha >= 0");
  require(p_reclust >= 0 && p_reclust <= 1, "p_reclust in [0, 1]");
  require(p_reclust_decay > 0 && p_reclust_decay <= 1, "p_reclust decay in (0, 1]");
  require(p_reclust_floor >= 0 && p_reclust_floor <= 1, "p_reclust floor in [0, 1]");
  require(restarts >= 1, "restarts >= 1");
  require(probe_restarts >= 0, "probe restarts >= 0");
  require(max_iterations >= 1, "max iterations >= 1");
  require(max_inner_steps >= 1, "max inner steps >= 1");
  require(armijo.slope > 0 && armijo.slope < 1, "Armijo slope factor in (0, 1)");
  require(armijo.backtrack > 0 && armijo.backtrack < 1, "Armijo backtrack factor in (0, 1)");
  require(armijo.initial_step > 0, "Armijo initial step > 0");
  require(armijo.max_backtracks >= 0, "Armijo max backtracks >= 0");
  require(armijo.max_relative_move >= 0, "Armijo relative move cap >= 0");
  require(gradient_tolerance >= 0, "gradient tolerance >= 0");
  require(improvement_tolerance >= 0, "improvement tolerance >= 0");
  require(max_targets >= 1, "max targets >= 1");
}

namespace {

Index candidate_count(const LearnConfig& cfg, Index n) {
  return std::min<Index>(default_candidate_count(cfg.K), n - 1);
}

// Selection (or the leading K) for a decomposition holding K'+1 pairs.
EigSelection choose_eigenvectors(const SpectralDecompd& d, const LearnConfig& cfg) {
  if (!cfg.use_selection) return EigSelection::leading(cfg.K);
  return select_eigenvectors(d, cfg.K, candidate_count(cfg, d.points()), cfg.pc);
}

SpectralDecompd decompose_for(const SimilarityMatrixd& S, const LearnConfig& cfg) {
  const Index n = S.size();
  if (n < cfg.K + 1) throw data_error("need more than K points");
  return decompose(S, std::min<Index>(n, std::max<Index>(candidate_count(cfg, n), cfg.K) + 1));
}

std::vector<double> softmax_weights(const std::vector<double>& mn) {
  const double lo = *std::min_element(mn.begin(), mn.end());
  std::vector<double> w(mn.size());
  double total = 0;
  for (std::size_t i = 0; i < mn.size(); ++i) total += (w[i] = std::exp(-(mn[i] - lo)));
  for (double& v : w) v /= total;
  return w;
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw numerical_error(std::string("non-finite ") + what);
}

}  // namespace

ObjectiveForm objective_form(const FeatureTensord& x, const ParamSetd& theta, const Clustering& C, const LearnConfig& cfg) {
  if (!cfg.use_selection) return ObjectiveForm::leading(cfg.K, cfg.alpha);
  const auto S = build_similarity(x, C, theta);
  return ObjectiveForm::automatic(choose_eigenvectors(decompose_for(S, cfg), cfg), cfg.alpha);
}

Objective<double> state_objective(const FeatureTensord& x, const ParamSetd& theta, const Clustering& C, const LearnConfig& cfg) {
  return objective_value(x, theta, TargetSet::single(C), objective_form(x, theta, C, cfg));
}

Clustering bootstrap_clustering(const FeatureTensord& x, const ParamSetd& theta, const LearnConfig& cfg) {
  const auto S = build_similarity(x, theta.shared_equivalent());
  const auto d = decompose_for(S, cfg);
  SpectralClusteringOptions opt{cfg.restarts, mix_seed(cfg.seed, 0xB0075742ULL), cfg.row_normalize};
  return cluster_spectral(S, cfg.K, d, choose_eigenvectors(d, cfg), opt).best().clustering;
}

CStepResult c_step(const ParamSetd& theta, const TargetSet& previous, const FeatureTensord& x, const LearnConfig& cfg,
                   std::uint64_t seed) {
  previous.validate();
  const Clustering& incumbent = previous.best();
  const auto S = build_similarity(x, incumbent, theta);
  const auto d = decompose_for(S, cfg);
  const auto selection = choose_eigenvectors(d, cfg);

  SpectralClusteringOptions opt{cfg.restarts, seed, cfg.row_normalize};
  const CandidateSet found = cluster_spectral(S, cfg.K, d, selection, opt);

  // Union of the previous targets (incumbent first) and the new candidates,
  // new ones relabeled to match the incumbent so per-cluster parameters keep
  // their meaning.
  std::vector<Clustering> pool;
  pool.push_back(incumbent);
  for (std::size_t t = 0; t < previous.size(); ++t)
    if (t != previous.incumbent) pool.push_back(previous.clusterings[t]);
  for (const auto& cand : found.members) {
    Clustering aligned = align_labels(cand.clustering, incumbent);
    if (std::none_of(pool.begin(), pool.end(), [&](const Clustering& p) { return same_partition(p, aligned); }))
      pool.push_back(std::move(aligned));
  }
  std::vector<double> mn(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) mn[i] = mncut(S, pool[i]);

  CStepResult out;
  out.candidates = found.size();
  out.eigengap = eigengap(d, cfg.K);
  out.cutoff = std::exp((1.0 - out.eigengap) * (1.0 - out.eigengap));

  // Stable order by MNCut; the incumbent wins ties.
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mn[a] < mn[b]; });
  const double lowest = mn[order.front()];

  if (cfg.max_targets == 1) {
    // Single target: replace the incumbent only if the objective strictly drops.
    const std::size_t challenger = order.front();
    std::size_t winner = 0;
    if (challenger != 0) {
      const double f_old = state_objective(x, theta, incumbent, cfg).value;
      const double f_new = state_objective(x, theta, pool[challenger], cfg).value;
      if (f_new < f_old) winner = challenger;
    }
    out.incumbent_changed = winner != 0;
    out.targets = TargetSet::single(pool[winner]);
    return out;
  }

  std::vector<std::size_t> keep;
  for (std::size_t i : order) {
    if (static_cast<int>(keep.size()) >= cfg.max_targets) break;
    if (mn[i] <= lowest || mn[i] < out.cutoff * lowest) keep.push_back(i);
  }
  // The stable sort puts the incumbent ahead of equal-MNCut candidates, so it
  // is displaced only by a strictly lower MNCut.
  out.incumbent_changed = keep.front() != 0;
  std::vector<double> kept_mn;
  for (std::size_t i : keep) {
    out.targets.clusterings.push_back(pool[i]);
    kept_mn.push_back(mn[i]);
  }
  out.targets.weights = softmax_weights(kept_mn);
  out.targets.incumbent = 0;
  return out;
}

SStepResult s_step(const ParamSetd& theta, const TargetSet& targets, const FeatureTensord& x, const LearnConfig& cfg,
                   double p_reclust, std::mt19937_64& rng, std::uint64_t probe_seed) {
  targets.validate();
  const ObjectiveForm form = objective_form(x, theta, targets.best(), cfg);

  SStepResult out;
  out.params = theta;
  out.p_reclust = p_reclust;
  auto current = grad_f(x, out.params, targets, form);
  out.f_start = out.f_end = current.objective.value;
  check_finite(out.f_start, "objective at S-step entry");
  out.near_degenerate = current.near_degenerate;

  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (int step = 0; step < cfg.max_inner_steps; ++step) {
    const Eigen::VectorXd& th = out.params.values();
    const Eigen::VectorXd& g = current.gradient;
    if (!g.allFinite()) throw numerical_error("non-finite gradient in S-step");
    const Eigen::VectorXd projected = th - (th - g).cwiseMax(0.0);
    if (projected.lpNorm<Eigen::Infinity>() < cfg.gradient_tolerance) {
      out.stationary = true;
      break;
    }

    double t = cfg.armijo.initial_step;
    if (cfg.armijo.max_relative_move > 0) {
      const double move = t * g.lpNorm<Eigen::Infinity>();
      const double cap = cfg.armijo.max_relative_move * std::max(th.lpNorm<Eigen::Infinity>(), 1e-3);
      if (move > cap) t *= cap / move;
    }
    bool accepted = false;
    Eigen::VectorXd trial;
    for (int b = 0; b <= cfg.armijo.max_backtracks; ++b, t *= cfg.armijo.backtrack) {
      trial = (th - t * g).cwiseMax(0.0);
      const double decrease = g.dot(th - trial);
      if (!(decrease > 0)) continue;
      const double ft = objective_value(x, out.params.with_values(trial), targets, form).value;
      if (std::isfinite(ft) && ft < out.f_end && ft <= out.f_end - cfg.armijo.slope * decrease) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      out.line_search_failed = true;
      break;
    }

    out.params = out.params.with_values(trial);
    current = grad_f(x, out.params, targets, form);
    out.f_end = current.objective.value;
    check_finite(out.f_end, "objective after an accepted step");
    out.near_degenerate = out.near_degenerate || current.near_degenerate;
    out.step_sizes.push_back(t);
    out.f_values.push_back(out.f_end);

    if (coin(rng) < out.p_reclust) {
      ++out.probes;
      const auto S = build_similarity(x, targets.best(), out.params);
      SpectralClusteringOptions opt{cfg.effective_probe_restarts(), mix_seed(probe_seed, static_cast<std::uint64_t>(step)),
                                    cfg.row_normalize};
      const auto probe = cluster_spectral(S, cfg.K, form.selection, opt);
      const bool fresh = std::any_of(probe.members.begin(), probe.members.end(), [&](const Candidate& c) {
        return std::none_of(targets.clusterings.begin(), targets.clusterings.end(),
                            [&](const Clustering& t) { return same_partition(t, c.clustering); });
      });
      if (fresh) {
        out.stopped_by_probe = true;
        break;
      }
      out.p_reclust = std::max(cfg.p_reclust_floor, out.p_reclust * cfg.p_reclust_decay);
    }
  }
  return out;
}

LearnResult run(const FeatureTensord& x, const LearnConfig& cfg, const ParamSetd& theta0, const std::optional<Clustering>& initial) {
  cfg.validate();
  if (theta0.features() != x.features()) throw data_error("initial parameters do not match the feature count");
  if (theta0.label_dependent() && theta0.clusters() != cfg.K)
    throw data_error("label-dependent parameters have K = " + std::to_string(theta0.clusters()) + ", learning uses K = " +
                     std::to_string(cfg.K));
  if ((theta0.values().array() < 0).any()) throw data_error("initial parameters must be non-negative");
  if (initial && (initial->size() != static_cast<std::size_t>(x.points()) || initial->clusters() != cfg.K))
    throw data_error("initial clustering does not match the data or K");

  LearnResult res;
  res.params = theta0;
  res.status = "max_iterations";
  try {
    res.targets = TargetSet::single(initial ? *initial : bootstrap_clustering(x, theta0, cfg));
    std::mt19937_64 rng(mix_seed(cfg.seed, 0x5EED5EEDULL));
    double p_reclust = cfg.p_reclust;
    res.f_history.push_back(state_objective(x, res.params, res.targets.best(), cfg).value);

    int quiet = 0;
    for (int it = 0; it < cfg.max_iterations; ++it) {
      res.iterations = it + 1;
      const auto c = c_step(res.params, res.targets, x, cfg, mix_seed(cfg.seed, 2 * static_cast<std::uint64_t>(it) + 1));
      res.targets = c.targets;
      const ObjectiveForm form = objective_form(x, res.params, res.targets.best(), cfg);
      const double f_c = objective_value(x, res.params, res.targets, form).value;
      check_finite(f_c, "objective after the C-step");
      res.f_history.push_back(f_c);

      const auto s = s_step(res.params, res.targets, x, cfg, p_reclust, rng,
                            mix_seed(cfg.seed, 2 * static_cast<std::uint64_t>(it) + 2));
      res.params = s.params;
      p_reclust = s.p_reclust;
      res.f_history.insert(res.f_history.end(), s.f_values.begin(), s.f_values.end());

      TraceRecord rec;
      rec.iteration = it;
      rec.objective = objective_value(x, res.params, res.targets, form);
      rec.incumbent_mncut = mncut(build_similarity(x, res.targets.best(), res.params), res.targets.best());
      rec.eigengap = c.eigengap;
      rec.targets = res.targets.size();
      rec.incumbent_changed = c.incumbent_changed;
      rec.step_sizes = s.step_sizes;
      rec.probes = s.probes;
      rec.reclustered = s.stopped_by_probe;
      rec.line_search_failed = s.line_search_failed;
      rec.near_degenerate = s.near_degenerate;
      rec.p_reclust = p_reclust;
      res.trace.push_back(std::move(rec));

      const bool still = !c.incumbent_changed && (s.f_start - s.f_end) < cfg.improvement_tolerance;
      quiet = still ? quiet + 1 : 0;
      if (quiet >= 2) {
        res.status = "converged";
        break;
      }
    }
    res.clustering = res.targets.best();
    const auto S = build_similarity(x, res.clustering, res.params);
    res.final_objective = f_alpha(S, res.clustering, decompose(S, std::min<Index>(S.size(), cfg.K + 1)), cfg.alpha);
  } catch (const numerical_error& e) {
    res.status = "numerical_failure";
    res.message = e.what();
    if (!res.targets.empty()) res.clustering = res.targets.best();
  }
  return res;
}

}  // namespace usl
