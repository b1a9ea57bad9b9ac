#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "usl/cluster.hpp"
#include "usl/criteria.hpp"
#include "usl/data.hpp"
#include "usl/errors.hpp"
#include "usl/learn.hpp"
#include "usl/simgraph.hpp"
#include "usl/spectra.hpp"

namespace usl::cli {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

class usage_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct InputOptions {
  std::string points;
  std::string features;
  std::string dermatology;
  std::string scale = "none";
  std::string truth;
};

struct Dataset {
  FeatureTensord x;
  std::optional<Clustering> truth;
};

void add_input_options(CLI::App& cmd, InputOptions& in) {
  cmd.add_option("--points", in.points, "points CSV (pairwise |differences| become the features)");
  cmd.add_option("--features", in.features, "feature tensor file (USLF binary or text pair list)");
  cmd.add_option("--dermatology", in.dermatology, "UCI Dermatology raw file (drops rows with '?', min-max scales, class as truth)");
  cmd.add_option("--scale", in.scale, "column scaling for --points: none | minmax")->check(CLI::IsMember({"none", "minmax"}));
  cmd.add_option("--truth", in.truth, "reference labels file for classification error");
}

Dataset load_input(const InputOptions& in) {
  const int given = !in.points.empty() + !in.features.empty() + !in.dermatology.empty();
  if (given != 1) throw usage_error("give exactly one of --points, --features, --dermatology");
  Dataset ds;
  if (!in.points.empty()) {
    auto p = load_points_csv(in.points);
    ds.x = pairwise_features(in.scale == "minmax" ? minmax_scale(p.coords) : p.coords);
  } else if (!in.features.empty()) {
    ds.x = load_features(in.features);
  } else {
    auto p = load_dermatology(in.dermatology);
    ds.x = pairwise_features(p.coords);
    ds.truth = p.labels;
  }
  if (!in.truth.empty()) ds.truth = load_labels(in.truth);
  if (ds.truth && ds.truth->size() != static_cast<std::size_t>(ds.x.points()))
    throw data_error("truth labels cover " + std::to_string(ds.truth->size()) + " points, data has " + std::to_string(ds.x.points()));
  return ds;
}

json theta_json(const ParamSetd& th) {
  json j;
  j["mode"] = std::string(to_string(th.mode()));
  j["K"] = th.clusters();
  j["F"] = th.features();
  j["values"] = std::vector<double>(th.values().data(), th.values().data() + th.size());
  json by = json::array();
  switch (th.mode()) {
    case ParamMode::Shared: break;
    case ParamMode::ClusterProduct:
    case ParamMode::ClusterSum:
      for (Index c = 0; c < th.clusters(); ++c) {
        json row = json::array();
        for (Index f = 0; f < th.features(); ++f) row.push_back(th.theta(f, c));
        by.push_back(row);
      }
      j["by_cluster"] = by;
      break;
    case ParamMode::PairMatrix:
      for (Index a = 0; a < th.clusters(); ++a) {
        json row = json::array();
        for (Index b = 0; b < th.clusters(); ++b) {
          json cell = json::array();
          for (Index f = 0; f < th.features(); ++f) cell.push_back(th.theta(f, a, b));
          row.push_back(cell);
        }
        by.push_back(row);
      }
      j["by_pair"] = by;
      break;
  }
  return j;
}

ParamSetd parse_theta(const std::string& spec, ParamMode mode, Index K, Index F) {
  double value = 0;
  const auto [ptr, ec] = std::from_chars(spec.data(), spec.data() + spec.size(), value);
  if (ec == std::errc() && ptr == spec.data() + spec.size()) {
    if (!(value >= 0) || !std::isfinite(value)) throw usage_error("--theta value must be a non-negative number");
    return ParamSetd::uniform(mode, K, F, value);
  }
  std::ifstream in(spec);
  if (!in) throw data_error("--theta '" + spec + "' is neither a number nor a readable file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw data_error(spec + ": " + e.what());
  }
  ParamMode file_mode;
  std::vector<double> values;
  Index file_k = 0, file_f = 0;
  try {
    file_mode = parse_param_mode(j.at("mode").get<std::string>());
    values = j.at("values").get<std::vector<double>>();
    file_k = j.at("K").get<Index>();
    file_f = j.at("F").get<Index>();
  } catch (const json::exception& e) {
    throw data_error(spec + ": " + e.what());
  }
  if (file_mode != mode) throw data_error(spec + ": parameters are for mode " + std::string(to_string(file_mode)));
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Index>(values.size()));
  ParamSetd th(mode, file_k, file_f, v);
  if (th.features() != F || (th.label_dependent() && th.clusters() != K))
    throw data_error(spec + ": parameter dimensions do not match the data and --k");
  return th;
}

json objective_json(const Objective<double>& o) {
  return json{{"f", o.value}, {"mncut", o.mncut}, {"gap", o.gap}, {"eigengap", o.eigengap}, {"bound_sum", o.bound_sum}, {"alpha", o.alpha}};
}

json selection_json(const EigSelection& s) {
  std::vector<Index> one_based;
  for (Index k : s.indices) one_based.push_back(k + 1);
  return json{{"indices", one_based}, {"next", s.next + 1}, {"contiguous", s.contiguous()}};
}

std::vector<int> one_based(const Clustering& c) {
  std::vector<int> out;
  for (int l : c.labels()) out.push_back(l + 1);
  return out;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Metrics of (theta, C) with S built from C's labels and leading eigenvalues.
json state_metrics(const FeatureTensord& x, const ParamSetd& th, const Clustering& C, double alpha,
                   const std::optional<Clustering>& truth) {
  const auto S = build_similarity(x, C, th);
  const auto d = decompose(S, std::min<Index>(S.size(), C.clusters() + 1));
  const auto o = f_alpha(S, C, d, alpha);
  json j{{"mncut", o.mncut}, {"gap", o.gap}, {"eigengap", o.eigengap}, {"f", o.value}};
  if (truth) j["ce"] = classification_error(C, *truth);
  return j;
}

json config_json(const LearnConfig& c) {
  return json{{"K", c.K},
              {"alpha", c.alpha},
              {"p_reclust", c.p_reclust},
              {"p_reclust_decay", c.p_reclust_decay},
              {"p_reclust_floor", c.p_reclust_floor},
              {"restarts", c.restarts},
              {"probe_restarts", c.effective_probe_restarts()},
              {"max_iterations", c.max_iterations},
              {"max_inner_steps", c.max_inner_steps},
              {"armijo", {{"slope", c.armijo.slope}, {"backtrack", c.armijo.backtrack}, {"initial_step", c.armijo.initial_step}, {"max_backtracks", c.armijo.max_backtracks}, {"max_relative_move", c.armijo.max_relative_move}}},
              {"gradient_tolerance", c.gradient_tolerance},
              {"improvement_tolerance", c.improvement_tolerance},
              {"use_selection", c.use_selection},
              {"max_targets", c.max_targets},
              {"row_normalize", c.row_normalize},
              {"pc_bandwidth", c.pc.bandwidth},
              {"pc_grid_points", c.pc.grid_points},
              {"seed", c.seed}};
}

json input_json(const InputOptions& in) {
  return json{{"points", in.points}, {"features", in.features}, {"dermatology", in.dermatology}, {"scale", in.scale}, {"truth", in.truth}};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<int> parse_counts(const std::string& text) {
  std::vector<int> counts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size() || v < 1) throw usage_error("--counts must be positive integers separated by commas");
    counts.push_back(v);
  }
  return counts;
}

// ---- gen ----

struct GenOptions {
  int k = 0;
  std::string counts;
  int noisy_dims = 0;
  double noise_scale = 3.0;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_gen(const GenOptions& o, std::ostream& out) {
  if (!o.seed) throw usage_error("--seed is required");
  const auto counts = parse_counts(o.counts);
  if (static_cast<int>(counts.size()) != o.k)
    throw usage_error("--counts lists " + std::to_string(counts.size()) + " clusters but --k is " + std::to_string(o.k));
  const auto spec = GaussianSpec::defaults(counts, o.noisy_dims, o.noise_scale);
  const auto p = gen_gaussians(spec, *o.seed);
  fs::create_directories(o.out);
  PointSet unlabeled{p.coords, std::nullopt};
  save_points_csv(fs::path(o.out) / "points.csv", unlabeled);
  save_labels(fs::path(o.out) / "labels.txt", *p.labels);
  out << "wrote " << p.size() << " points of dimension " << p.dims() << " to " << o.out << "\n";
  return kOk;
}

// ---- cluster ----

struct ClusterOptions {
  InputOptions input;
  int k = 0;
  std::string theta = "1.0";
  std::string mode = "shared";
  std::string labels;
  int restarts = 20;
  bool select = false;
  double alpha = 0.0;
  std::optional<std::uint64_t> seed;
  std::string report;
  std::string out_labels;
};

int cmd_cluster(const ClusterOptions& o, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!o.seed) throw usage_error("--seed is required");
  const auto mode = parse_param_mode(o.mode);
  const auto ds = load_input(o.input);
  const Index n = ds.x.points();
  if (o.k < 1 || o.k >= n) throw usage_error("--k must be in [1, n - 1]");
  const auto th = parse_theta(o.theta, mode, o.k, ds.x.features());

  std::optional<Clustering> given;
  if (!o.labels.empty()) given = load_labels(o.labels);
  if (th.label_dependent() && !given)
    throw usage_error("mode " + o.mode + " builds similarities from cluster labels; pass --labels with an initial clustering");
  const auto S = given ? build_similarity(ds.x, *given, th) : build_similarity(ds.x, th);

  const Index kprime = std::min<Index>(default_candidate_count(o.k), n - 1);
  const auto d = decompose(S, std::min<Index>(n, std::max<Index>(kprime, o.k) + 1));
  const auto sel = o.select ? select_eigenvectors(d, o.k, kprime) : EigSelection::leading(o.k);
  const auto cands = cluster_spectral(S, o.k, d, sel, {o.restarts, *o.seed, false});
  const Clustering& best = cands.best().clustering;

  const auto fa = f_alpha(S, best, d, o.alpha);
  json metrics{{"mncut", fa.mncut}, {"gap", fa.gap}, {"eigengap", fa.eigengap}, {"f_alpha", fa.value}};
  if (o.select) metrics["f_tilde"] = f_tilde(S, best, d, sel, o.alpha).value;
  if (ds.truth) metrics["ce"] = classification_error(best, *ds.truth);
  metrics["candidates"] = cands.size();

  if (!o.out_labels.empty()) save_labels(o.out_labels, best);
  if (!o.report.empty()) {
    json r;
    r["report_version"] = kReportVersion;
    r["command"] = "cluster";
    r["status"] = "ok";
    r["config"] = json{{"input", input_json(o.input)}, {"K", o.k}, {"mode", o.mode}, {"theta", o.theta}, {"labels", o.labels},
                       {"restarts", o.restarts}, {"select", o.select}, {"alpha", o.alpha}, {"seed", *o.seed}};
    r["theta"] = theta_json(th);
    r["selection"] = selection_json(sel);
    r["eigenvalues"] = std::vector<double>(d.eigenvalues.data(), d.eigenvalues.data() + d.size());
    r["labels"] = one_based(best);
    r["metrics"] = metrics;
    r["wall_clock_seconds"] = seconds_since(t0);
    write_json(o.report, r);
  }
  out << metrics.dump() << "\n";
  return kOk;
}

// ---- learn ----

struct LearnOptions {
  InputOptions input;
  LearnConfig cfg;
  std::string mode = "shared";
  std::string theta0 = "1.0";
  std::string labels0;
  bool no_select = false;
  bool check_monotone = false;
  std::optional<std::uint64_t> seed;
  std::string report;
  std::string out_theta;
  std::string out_labels;
};

json trace_json(const std::vector<TraceRecord>& trace) {
  json arr = json::array();
  for (const auto& t : trace) {
    arr.push_back(json{{"iteration", t.iteration},
                       {"objective", objective_json(t.objective)},
                       {"incumbent_mncut", t.incumbent_mncut},
                       {"c_step_eigengap", t.eigengap},
                       {"targets", t.targets},
                       {"incumbent_changed", t.incumbent_changed},
                       {"step_sizes", t.step_sizes},
                       {"probes", t.probes},
                       {"reclustered", t.reclustered},
                       {"line_search_failed", t.line_search_failed},
                       {"near_degenerate", t.near_degenerate},
                       {"p_reclust", t.p_reclust}});
  }
  return arr;
}

int cmd_learn(LearnOptions o, std::ostream& out, std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!o.seed) throw usage_error("--seed is required");
  o.cfg.seed = *o.seed;
  if (o.no_select) o.cfg.use_selection = false;
  const auto mode = parse_param_mode(o.mode);
  const auto ds = load_input(o.input);
  if (o.cfg.K < 1 || o.cfg.K >= ds.x.points()) throw usage_error("--k must be in [1, n - 1]");
  o.cfg.validate();
  const auto th0 = parse_theta(o.theta0, mode, o.cfg.K, ds.x.features());

  const Clustering start = o.labels0.empty() ? bootstrap_clustering(ds.x, th0, o.cfg) : load_labels(o.labels0);
  if (start.clusters() != o.cfg.K || start.size() != static_cast<std::size_t>(ds.x.points()))
    throw data_error("initial labels do not match the data and --k");
  const json before = state_metrics(ds.x, th0, start, o.cfg.alpha, ds.truth);

  const LearnResult res = run(ds.x, o.cfg, th0, start);
  const bool failed = res.status == "numerical_failure";

  json r;
  r["report_version"] = kReportVersion;
  r["command"] = "learn";
  r["status"] = res.status;
  if (!res.message.empty()) r["message"] = res.message;
  r["config"] = config_json(o.cfg);
  r["config"]["input"] = input_json(o.input);
  r["config"]["mode"] = o.mode;
  r["config"]["theta0"] = o.theta0;
  r["config"]["labels0"] = o.labels0;
  r["iterations"] = res.iterations;
  r["trace"] = trace_json(res.trace);
  r["f_history"] = res.f_history;
  r["theta"] = theta_json(res.params);
  r["labels"] = failed && res.clustering.size() == 0 ? json::array() : json(one_based(res.clustering));
  r["metrics"]["before"] = before;
  if (!failed) r["metrics"]["after"] = state_metrics(ds.x, res.params, res.clustering, o.cfg.alpha, ds.truth);

  bool monotone = true;
  for (std::size_t i = 1; i < res.f_history.size(); ++i)
    if (res.f_history[i] > res.f_history[i - 1] + 1e-12) monotone = false;
  r["monotone"] = monotone;
  r["wall_clock_seconds"] = seconds_since(t0);

  if (!o.report.empty()) write_json(o.report, r);
  if (!failed) {
    if (!o.out_theta.empty()) write_json(o.out_theta, theta_json(res.params));
    if (!o.out_labels.empty()) save_labels(o.out_labels, res.clustering);
  }
  out << json{{"status", res.status}, {"iterations", res.iterations}, {"metrics", r["metrics"]}}.dump() << "\n";

  if (failed) {
    err << "learning failed: " << res.message << "\n";
    return kNumericalFailure;
  }
  if (o.check_monotone) {
    if (o.cfg.max_targets != 1) err << "warning: --check-monotone is only guaranteed with --max-targets 1\n";
    if (!monotone) {
      err << "objective trace is not non-increasing\n";
      return kNumericalFailure;
    }
  }
  return kOk;
}

// ---- eval ----

struct EvalOptions {
  std::string pred;
  std::string truth;
};

int cmd_eval(const EvalOptions& o, std::ostream& out) {
  const auto pred = load_labels(o.pred);
  const auto truth = load_labels(o.truth);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", classification_error(pred, truth));
  out << buf << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Unsupervised spectral learning: joint similarity learning and spectral clustering"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* g = app.add_subcommand("gen", "generate the Gaussian-blob benchmark");
  g->add_option("--k", gen.k, "number of clusters")->required();
  g->add_option("--counts", gen.counts, "points per cluster, comma separated")->required();
  g->add_option("--noisy-dims", gen.noisy_dims, "label-independent noise coordinates")->check(CLI::NonNegativeNumber);
  g->add_option("--noise-scale", gen.noise_scale, "standard deviation of each noise coordinate");
  g->add_option("--seed", gen.seed, "random seed (required)");
  g->add_option("--out", gen.out, "output directory")->required();

  ClusterOptions cl;
  auto* c = app.add_subcommand("cluster", "spectral clustering at fixed parameters");
  add_input_options(*c, cl.input);
  c->add_option("--k", cl.k, "number of clusters")->required();
  c->add_option("--theta", cl.theta, "uniform parameter value or parameter JSON file");
  c->add_option("--mode", cl.mode, "shared | cluster-product | cluster-sum | pair");
  c->add_option("--labels", cl.labels, "cluster labels feeding label-dependent similarities");
  c->add_option("--restarts", cl.restarts, "K-means restarts")->check(CLI::PositiveNumber);
  c->add_flag("--select,!--no-select", cl.select, "choose eigenvectors by piecewise-constancy");
  c->add_option("--alpha", cl.alpha, "regularization weight used in the reported objective");
  c->add_option("--seed", cl.seed, "random seed (required)");
  c->add_option("--report", cl.report, "JSON report path");
  c->add_option("--out-labels", cl.out_labels, "labels output path");

  LearnOptions le;
  auto* l = app.add_subcommand("learn", "learn similarity parameters and clustering jointly");
  add_input_options(*l, le.input);
  l->add_option("--k", le.cfg.K, "number of clusters")->required();
  l->add_option("--alpha", le.cfg.alpha, "eigengap regularization weight");
  l->add_option("--mode", le.mode, "shared | cluster-product | cluster-sum | pair");
  l->add_option("--theta0", le.theta0, "initial uniform value or parameter JSON file");
  l->add_option("--labels0", le.labels0, "initial clustering (default: spectral clustering at theta0)");
  l->add_option("--p-reclust", le.cfg.p_reclust, "initial reclustering probability");
  l->add_option("--p-reclust-decay", le.cfg.p_reclust_decay, "factor applied after a stable probe");
  l->add_option("--max-targets", le.cfg.max_targets, "maximum target clusterings");
  l->add_option("--restarts", le.cfg.restarts, "K-means restarts per C-step");
  l->add_option("--probe-restarts", le.cfg.probe_restarts, "K-means restarts per probe (0: restarts / 4)");
  l->add_option("--max-iters", le.cfg.max_iterations, "maximum outer iterations");
  l->add_option("--max-inner-steps", le.cfg.max_inner_steps, "maximum gradient steps per S-step");
  l->add_option("--max-move", le.cfg.armijo.max_relative_move,
                 "cap on the first trial move per coordinate, as a fraction of max theta (0: no cap)");
  l->add_flag("--select", le.cfg.use_selection, "choose eigenvectors by piecewise-constancy");
  l->add_flag("--no-select", le.no_select, "use the leading K eigenvectors (default)");
  l->add_flag("--check-monotone", le.check_monotone, "fail unless the objective trace is non-increasing");
  l->add_option("--seed", le.seed, "random seed (required)");
  l->add_option("--report", le.report, "JSON report path");
  l->add_option("--out-theta", le.out_theta, "learned parameters (JSON)");
  l->add_option("--out-labels", le.out_labels, "learned clustering labels");

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "classification error between two labelings");
  e->add_option("--pred", ev.pred, "predicted labels")->required();
  e->add_option("--truth", ev.truth, "reference labels")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& ex) {
    out << app.help();
    if (!app.get_subcommands().empty()) out << app.get_subcommands().front()->help();
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << ex.what() << "\n" << "run with --help for usage\n";
    return kUsage;
  }

  try {
    if (g->parsed()) return cmd_gen(gen, out);
    if (c->parsed()) return cmd_cluster(cl, out);
    if (l->parsed()) return cmd_learn(le, out, err);
    if (e->parsed()) return cmd_eval(ev, out);
  } catch (const usage_error& ex) {
    err << "usage error: " << ex.what() << "\n";
    return kUsage;
  } catch (const numerical_error& ex) {
    err << "numerical failure: " << ex.what() << "\n";
    return kNumericalFailure;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kDataError;
  }
  return kUsage;
}

}  // namespace usl::cli
