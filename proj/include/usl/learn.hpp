#pragma once

// Alternating minimization of the regularized spectral gap.
//
// C-step: spectral clustering at fixed theta produces a weighted target set.
// S-step: projected gradient descent on theta >= 0 with Armijo backtracking,
// interrupted at random to probe whether the clustering has moved.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "usl/cluster.hpp"
#include "usl/clustering.hpp"
#include "usl/criteria.hpp"
#include "usl/simgraph.hpp"
#include "usl/spectra.hpp"

namespace usl {

struct ArmijoOptions {
  double slope = 1e-4;
  double backtrack = 0.5;
  double initial_step = 1.0;
  int max_backtracks = 30;
  // Caps the first trial move at this fraction of max|theta| per coordinate; <= 0 disables.
  double max_relative_move = 0.0;
};

struct LearnConfig {
  int K = 2;
  double alpha = 0.5;
  double p_reclust = 0.8;
  double p_reclust_decay = 0.5;
  double p_reclust_floor = 0.05;
  int restarts = 20;
  int probe_restarts = 0;  // 0: a quarter of `restarts`, at least 1
  int max_iterations = 100;
  int max_inner_steps = 50;  // S-step iterations per outer iteration
  ArmijoOptions armijo;
  double gradient_tolerance = 1e-6;
  double improvement_tolerance = 1e-8;
  bool use_selection = false;
  int max_targets = 6;
  bool row_normalize = false;
  PcIndexOptions pc;
  std::uint64_t seed = 0;

  void validate() const;
  int effective_probe_restarts() const { return probe_restarts > 0 ? probe_restarts : std::max(1, restarts / 4); }
};

struct CStepResult {
  TargetSet targets;
  bool incumbent_changed = false;
  double eigengap = 0;     // Delta_K of P(theta) built from the previous incumbent
  double cutoff = 0;       // exp((1 - Delta_K)^2)
  std::size_t candidates = 0;
};

struct SStepResult {
  ParamSetd params;
  double f_start = 0;
  double f_end = 0;
  std::vector<double> step_sizes;  // one per accepted update
  std::vector<double> f_values;    // objective after each accepted update
  int probes = 0;
  bool stopped_by_probe = false;
  bool line_search_failed = false;
  bool stationary = false;  // projected gradient below tolerance
  bool near_degenerate = false;
  double p_reclust = 0;  // schedule value on exit
};

struct TraceRecord {
  int iteration = 0;
  Objective<double> objective;  // after the S-step
  double incumbent_mncut = 0;
  double eigengap = 0;
  std::size_t targets = 0;
  bool incumbent_changed = false;
  std::vector<double> step_sizes;
  int probes = 0;
  bool reclustered = false;  // S-step ended because a probe found a new clustering
  bool line_search_failed = false;
  bool near_degenerate = false;
  double p_reclust = 0;
};

struct LearnResult {
  ParamSetd params;
  Clustering clustering;
  TargetSet targets;
  std::vector<TraceRecord> trace;
  std::vector<double> f_history;  // objective after every state change, in order
  Objective<double> final_objective;
  std::string status;  // converged | max_iterations | numerical_failure
  std::string message;
  int iterations = 0;
};

/// Objective form for the state (theta, C): leading eigenvectors with the
/// squared eigengap, or pc-index selection when `use_selection` is set.
ObjectiveForm objective_form(const FeatureTensord& x, const ParamSetd& theta, const Clustering& C, const LearnConfig& cfg);

/// Objective of the single-target state (theta, C) with S built from C.
Objective<double> state_objective(const FeatureTensord& x, const ParamSetd& theta, const Clustering& C, const LearnConfig& cfg);

CStepResult c_step(const ParamSetd& theta, const TargetSet& previous, const FeatureTensord& x, const LearnConfig& cfg,
                   std::uint64_t seed);

/// `p_reclust` carries the probe schedule across calls.
SStepResult s_step(const ParamSetd& theta, const TargetSet& targets, const FeatureTensord& x, const LearnConfig& cfg,
                   double p_reclust, std::mt19937_64& rng, std::uint64_t probe_seed);

LearnResult run(const FeatureTensord& x, const LearnConfig& cfg, const ParamSetd& theta0,
                const std::optional<Clustering>& initial = std::nullopt);

/// Spectral clustering at fixed parameters, label-free: the starting point
/// when no initial clustering is given.
Clustering bootstrap_clustering(const FeatureTensord& x, const ParamSetd& theta, const LearnConfig& cfg);

}  // namespace usl
