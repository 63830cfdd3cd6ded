#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dhpr/baselines.hpp"
#include "dhpr/bundle.hpp"
#include "dhpr/config.hpp"
#include "dhpr/dual_lhpr.hpp"
#include "dhpr/errors.hpp"
#include "dhpr/libsvm.hpp"
#include "dhpr/simnet.hpp"
#include "dhpr/solver.hpp"

namespace dhpr {

inline std::string instance_label(const ExperimentConfig& cfg) {
  std::string lab = cfg.problem.family + "-N" + std::to_string(cfg.problem.n_agents);
  if (cfg.problem.source == "synthetic")
    lab += "-m" + std::to_string(cfg.problem.m_i) + "-p" + std::to_string(cfg.problem.p);
  else
    lab += "-" + std::filesystem::path(cfg.problem.path).stem().string();
  lab += "-seed" + std::to_string(cfg.problem.seed);
  return lab;
}

/// Builds the problem an experiment runs on. Synthetic families draw fresh
/// data from the problem seed; libsvm sources load the file, scale columns
/// into [-1, 1], and deal samples across agents with the same seed. Labels
/// of a libsvm logistic problem are collapsed to +1/-1 by sign.
inline DistributedProblem materialize_problem(const ExperimentConfig& cfg) {
  cfg.validate();
  WeightedGraph graph = make_graph(cfg.graph.kind, cfg.problem.n_agents,
                                   cfg.graph.connectivity, cfg.graph.seed);
  if (cfg.problem.source == "synthetic") {
    if (cfg.problem.family == "logistic")
      return gen_logistic(cfg.problem.n_agents, cfg.problem.m_i, cfg.problem.p,
                          std::move(graph), cfg.problem.seed);
    const RegularizerKind reg = cfg.problem.family == "group_lasso"
                                    ? RegularizerKind::kSparseGroup
                                    : RegularizerKind::kL1;
    return gen_regression(cfg.problem.n_agents, cfg.problem.m_i, cfg.problem.p,
                          cfg.problem.delta, reg, std::move(graph), cfg.problem.seed);
  }
  Dataset data = load_libsvm(cfg.problem.path);
  scale_columns_to_unit(data);
  LossKind loss = LossKind::kLeastSquares;
  if (cfg.problem.family == "logistic") {
    loss = LossKind::kLogistic;
    for (Eigen::Index r = 0; r < data.labels.size(); ++r)
      data.labels[r] = data.labels[r] > 0.0 ? 1.0 : -1.0;
  }
  return problem_from_dataset(data, loss, cfg.problem.n_agents, std::move(graph),
                              cfg.problem.seed);
}

/// Materializes the problem and writes it as a bundle under
/// <out_dir>/bundle. Nothing is written if materialization fails; the same
/// config always produces byte-identical files.
inline std::string cmd_gen(const ExperimentConfig& cfg) {
  const DistributedProblem prob = materialize_problem(cfg);
  const std::string dir =
      (std::filesystem::path(cfg.out_dir) / "bundle").string();
  save_problem(prob, dir);
  return dir;
}

struct SolverOutcome {
  std::string name;
  Trace trace;
  std::string stop_reason;  // "tol", "k_max", or "diverged"
  std::string error;        // divergence message
  long long iterations = 0;
  double final_eta_re = std::numeric_limits<double>::quiet_NaN();
  double final_eta_kkt = std::numeric_limits<double>::quiet_NaN();
  long long comm_rounds = 0;
  long long scalars_sent = 0;
  double wall_ms = 0.0;
  ExchangeLog exchange_log;
};

namespace detail {

inline SolverOutcome outcome_from_trace(std::string name, Trace trace,
                                        long long iterations,
                                        std::string stop_reason,
                                        double final_eta_re,
                                        ExchangeLog exchange_log) {
  SolverOutcome out;
  out.name = std::move(name);
  out.trace = std::move(trace);
  out.iterations = iterations;
  out.stop_reason = std::move(stop_reason);
  out.final_eta_re = final_eta_re;
  if (!out.trace.rows.empty()) {
    const TraceRow& last = out.trace.rows.back();
    out.final_eta_kkt = last.eta_kkt;
    out.comm_rounds = last.comm_rounds_cum;
    out.scalars_sent = last.scalars_sent_cum;
    out.wall_ms = last.wall_ms;
  }
  out.exchange_log = std::move(exchange_log);
  return out;
}

}  // namespace detail

/// Runs one named solver on the problem. The experiment-level tol and
/// k_max override the per-solver fields so every method chases the same
/// target. Divergence becomes a "diverged" outcome instead of a throw.
inline SolverOutcome run_one_solver(const std::string& name,
                                    const DistributedProblem& prob,
                                    const ExperimentConfig& cfg) {
  try {
    if (name == "dhpr" || name == "dual_lhpr") {
      SolverConfig scfg = cfg.solver;
      scfg.tol_eta_re = cfg.tol;
      scfg.k_max = cfg.k_max;
      RunResult r = name == "dhpr" ? run_dhpr(prob, scfg) : run_dual_lhpr(prob, scfg);
      return detail::outcome_from_trace(name, std::move(r.trace), r.iterations,
                                        std::move(r.stop_reason), r.final_eta_re,
                                        std::move(r.exchange_log));
    }
    if (name == "nids" || name == "pg_extra") {
      BaselineConfig bcfg;
      bcfg.step_size = cfg.baseline_step_size;
      bcfg.tol_eta_re = cfg.tol;
      bcfg.k_max = cfg.k_max;
      bcfg.trace_every = cfg.solver.trace_every;
      bcfg.deterministic_timing = cfg.solver.deterministic_timing;
      bcfg.log_exchanges = cfg.solver.log_exchanges;
      BaselineResult r =
          name == "nids" ? run_nids(prob, bcfg) : run_pg_extra(prob, bcfg);
      return detail::outcome_from_trace(name, std::move(r.trace), r.iterations,
                                        std::move(r.stop_reason), r.final_eta_re,
                                        std::move(r.exchange_log));
    }
    throw std::invalid_argument("config: unknown solver '" + name + "'");
  } catch (const DivergedError& e) {
    SolverOutcome out;
    out.name = name;
    out.stop_reason = "diverged";
    out.error = e.what();
    return out;
  }
}

/// All selected solvers on one problem, concurrently. Divergence is carried
/// in the outcome; any other failure is rethrown after every thread joins.
inline std::vector<SolverOutcome> run_selected_solvers(
    const DistributedProblem& prob, const ExperimentConfig& cfg) {
  const std::size_t n = cfg.solvers.size();
  std::vector<SolverOutcome> outcomes(n);
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    pool.emplace_back([&, i] {
      try {
        outcomes[i] = run_one_solver(cfg.solvers[i], prob, cfg);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (const auto& err : errors)
    if (err) std::rethrow_exception(err);
  return outcomes;
}

inline const std::vector<double>& summary_thresholds() {
  static const std::vector<double> eps{1e-4, 1e-6, 1e-8};
  return eps;
}

inline std::string threshold_key(double eps) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "1e%d", static_cast<int>(std::lround(std::log10(eps))));
  return buf;
}

inline nlohmann::json summary_json(const ExperimentConfig& cfg,
                                   const std::vector<SolverOutcome>& outcomes) {
  nlohmann::json j;
  j["instance"] = instance_label(cfg);
  j["config"] = experiment_to_json(cfg);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& out : outcomes) {
    nlohmann::json r;
    r["solver"] = out.name;
    r["stop_reason"] = out.stop_reason;
    r["iterations"] = out.iterations;
    r["final_eta_re"] = out.final_eta_re;
    r["final_eta_kkt"] = out.final_eta_kkt;
    r["comm_rounds"] = out.comm_rounds;
    r["scalars_sent"] = out.scalars_sent;
    r["wall_ms"] = out.wall_ms;
    if (!out.error.empty()) r["error"] = out.error;
    nlohmann::json to;
    for (double eps : summary_thresholds()) {
      const auto at = out.trace.first_iter_at_or_below(eps);
      if (at)
        to[threshold_key(eps)] = *at;
      else
        to[threshold_key(eps)] = "F";
    }
    r["iters_to"] = std::move(to);
    rows.push_back(std::move(r));
  }
  j["results"] = std::move(rows);
  return j;
}

/// One text row per solver, in the shape of the summary table: instance,
/// solver, iterations to each threshold ("F" when never reached), final
/// eta_re, communication rounds, wall time.
inline std::string summary_table(const ExperimentConfig& cfg,
                                 const std::vector<SolverOutcome>& outcomes) {
  char line[256];
  std::snprintf(line, sizeof line, "%-28s %-10s %8s %8s %8s %12s %10s %10s\n",
                "instance", "solver", "it(1e-4)", "it(1e-6)", "it(1e-8)",
                "eta_re", "rounds", "wall_ms");
  std::string out = line;
  const std::string inst = instance_label(cfg);
  for (const auto& o : outcomes) {
    std::string cell[3];
    int c = 0;
    for (double eps : summary_thresholds()) {
      const auto at = o.trace.first_iter_at_or_below(eps);
      cell[c++] = at ? std::to_string(*at) : "F";
    }
    std::snprintf(line, sizeof line, "%-28s %-10s %8s %8s %8s %12.3e %10lld %10.1f\n",
                  inst.c_str(), o.name.c_str(), cell[0].c_str(), cell[1].c_str(),
                  cell[2].c_str(), o.final_eta_re, o.comm_rounds, o.wall_ms);
    out += line;
  }
  return out;
}

struct RunArtifacts {
  std::vector<SolverOutcome> outcomes;
  nlohmann::json summary;
  bool any_diverged = false;
};

/// Runs the selected solvers and writes trace_<solver>.csv per solver plus
/// summary.json under out_dir. A diverged solver gets a summary row but no
/// trace file.
inline RunArtifacts cmd_run(const ExperimentConfig& cfg,
                            const DistributedProblem& prob) {
  namespace fs = std::filesystem;
  RunArtifacts art;
  art.outcomes = run_selected_solvers(prob, cfg);
  fs::create_directories(cfg.out_dir);
  for (const auto& out : art.outcomes) {
    if (out.stop_reason == "diverged") {
      art.any_diverged = true;
      continue;
    }
    out.trace.write_csv((fs::path(cfg.out_dir) / ("trace_" + out.name + ".csv")).string());
  }
  art.summary = summary_json(cfg, art.outcomes);
  std::ofstream f(fs::path(cfg.out_dir) / "summary.json");
  if (!f) throw std::runtime_error("cmd_run: cannot write summary.json");
  f << art.summary.dump(2) << '\n';
  return art;
}

struct AuditArtifacts {
  nlohmann::json report;
  bool passed = true;
};

/// Reruns the selected solvers with exchange logging on and audits every
/// retained round against the graph's sparsity pattern.
inline AuditArtifacts cmd_audit(const ExperimentConfig& cfg,
                                const DistributedProblem& prob) {
  namespace fs = std::filesystem;
  ExperimentConfig logged = cfg;
  logged.solver.log_exchanges = true;
  AuditArtifacts art;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& out : run_selected_solvers(prob, logged)) {
    const AuditReport rep = locality_audit(prob.graph, out.exchange_log);
    nlohmann::json r;
    r["solver"] = out.name;
    r["stop_reason"] = out.stop_reason;
    r["passed"] = rep.passed;
    r["rounds_checked"] = rep.rounds_checked;
    r["max_deviation"] = rep.max_deviation;
    if (!rep.passed) {
      r["first_bad_round"] = rep.first_bad_round;
      r["first_bad_agent"] = rep.first_bad_agent;
    }
    art.passed = art.passed && rep.passed && out.stop_reason != "diverged";
    rows.push_back(std::move(r));
  }
  art.report["results"] = std::move(rows);
  art.report["passed"] = art.passed;
  fs::create_directories(cfg.out_dir);
  std::ofstream f(fs::path(cfg.out_dir) / "audit.json");
  if (!f) throw std::runtime_error("cmd_audit: cannot write audit.json");
  f << art.report.dump(2) << '\n';
  return art;
}

}  // namespace dhpr
