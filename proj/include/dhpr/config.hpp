#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dhpr/baselines.hpp"
#include "dhpr/graph.hpp"
#include "dhpr/solver.hpp"

namespace dhpr {

// Experiment configs are JSON files with four blocks:
//
//   {
//     "problem": {"family": "lasso", "source": "synthetic", "path": "",
//                 "n_agents": 20, "m_i": 10, "p": 50, "delta": 0.1, "seed": 1},
//     "graph":   {"kind": "random", "connectivity": 0.5, "seed": 1},
//     "solvers": ["dhpr"],
//     "solver":  { ...partial SolverConfig overrides... },
//     "tol": 1e-8, "k_max": 20000, "out_dir": "out"
//   }
//
// Every key is optional and defaults as above; unknown keys are rejected so
// typos fail loudly. "tol" and "k_max" govern all selected solvers; the
// matching SolverConfig fields are overwritten at run time.

struct ProblemSpec {
  std::string family = "lasso";     // lasso | group_lasso | logistic
  std::string source = "synthetic"; // synthetic | libsvm
  std::string path;                 // data file when source == "libsvm"
  int n_agents = 20;
  int m_i = 10;
  int p = 50;
  double delta = 0.1;
  std::uint64_t seed = 1;
};

struct GraphSpec {
  TopologyKind kind = TopologyKind::kRandom;
  double connectivity = 0.5;
  std::uint64_t seed = 1;
};

struct ExperimentConfig {
  ProblemSpec problem;
  GraphSpec graph;
  std::vector<std::string> solvers{"dhpr"};
  SolverConfig solver;
  double baseline_step_size = 0.0;  // 0 = per-method default
  double tol = 1e-8;
  long long k_max = 20000;
  std::string out_dir = "out";

  void validate() const {
    if (problem.family != "lasso" && problem.family != "group_lasso" &&
        problem.family != "logistic")
      throw std::invalid_argument("config: unknown family '" + problem.family + "'");
    if (problem.source != "synthetic" && problem.source != "libsvm")
      throw std::invalid_argument("config: unknown source '" + problem.source + "'");
    if (problem.source == "libsvm" && problem.path.empty())
      throw std::invalid_argument("config: libsvm source needs problem.path");
    if (problem.source == "libsvm" && problem.family == "group_lasso")
      throw std::invalid_argument("config: group_lasso needs a synthetic source");
    if (problem.n_agents < 1)
      throw std::invalid_argument("config: n_agents must be >= 1");
    if (problem.source == "synthetic" && (problem.m_i < 1 || problem.p < 1))
      throw std::invalid_argument("config: m_i and p must be >= 1");
    if (problem.delta < 0.0)
      throw std::invalid_argument("config: delta must be >= 0");
    if (!(graph.connectivity >= 0.0 && graph.connectivity <= 1.0))
      throw std::invalid_argument("config: connectivity must be in [0, 1]");
    if (solvers.empty())
      throw std::invalid_argument("config: empty solver list");
    for (const auto& s : solvers)
      if (s != "dhpr" && s != "dual_lhpr" && s != "nids" && s != "pg_extra")
        throw std::invalid_argument("config: unknown solver '" + s + "'");
    if (baseline_step_size < 0.0)
      throw std::invalid_argument("config: baseline_step_size must be >= 0");
    if (!(tol > 0.0)) throw std::invalid_argument("config: tol must be positive");
    if (k_max < 1) throw std::invalid_argument("config: k_max must be >= 1");
    if (out_dir.empty()) throw std::invalid_argument("config: out_dir must be set");
    solver.validate();
  }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                std::initializer_list<const char*> allowed,
                                const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok)
      throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
  }
}

}  // namespace detail

inline nlohmann::json experiment_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["problem"] = {{"family", c.problem.family}, {"source", c.problem.source},
                  {"path", c.problem.path},     {"n_agents", c.problem.n_agents},
                  {"m_i", c.problem.m_i},       {"p", c.problem.p},
                  {"delta", c.problem.delta},   {"seed", c.problem.seed}};
  j["graph"] = {{"kind", to_string(c.graph.kind)},
                {"connectivity", c.graph.connectivity},
                {"seed", c.graph.seed}};
  j["solvers"] = c.solvers;
  j["solver"] = config_to_json(c.solver);
  j["baseline_step_size"] = c.baseline_step_size;
  j["tol"] = c.tol;
  j["k_max"] = c.k_max;
  j["out_dir"] = c.out_dir;
  return j;
}

/// Applies a (possibly partial) JSON object on top of `base`. Nested solver
/// overrides are merged field by field, so a file may set only
/// {"solver": {"sigma": 0.5}}.
inline ExperimentConfig experiment_from_json(const nlohmann::json& j,
                                             ExperimentConfig base = {}) {
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  detail::reject_unknown_keys(
      j,
      {"problem", "graph", "solvers", "solver", "baseline_step_size", "tol",
       "k_max", "out_dir"},
      "the top level");
  if (j.contains("problem")) {
    const auto& p = j.at("problem");
    detail::reject_unknown_keys(
        p, {"family", "source", "path", "n_agents", "m_i", "p", "delta", "seed"},
        "problem");
    base.problem.family = p.value("family", base.problem.family);
    base.problem.source = p.value("source", base.problem.source);
    base.problem.path = p.value("path", base.problem.path);
    base.problem.n_agents = p.value("n_agents", base.problem.n_agents);
    base.problem.m_i = p.value("m_i", base.problem.m_i);
    base.problem.p = p.value("p", base.problem.p);
    base.problem.delta = p.value("delta", base.problem.delta);
    base.problem.seed = p.value("seed", base.problem.seed);
  }
  if (j.contains("graph")) {
    const auto& g = j.at("graph");
    detail::reject_unknown_keys(g, {"kind", "connectivity", "seed"}, "graph");
    if (g.contains("kind"))
      base.graph.kind = topology_kind_from_string(g.at("kind").get<std::string>());
    base.graph.connectivity = g.value("connectivity", base.graph.connectivity);
    base.graph.seed = g.value("seed", base.graph.seed);
  }
  if (j.contains("solvers"))
    base.solvers = j.at("solvers").get<std::vector<std::string>>();
  if (j.contains("solver")) {
    nlohmann::json merged = config_to_json(base.solver);
    merged.merge_patch(j.at("solver"));
    if (!merged.contains("dual_reference")) merged["dual_reference"] = nullptr;
    base.solver = config_from_json(merged);
  }
  base.baseline_step_size = j.value("baseline_step_size", base.baseline_step_size);
  base.tol = j.value("tol", base.tol);
  base.k_max = j.value("k_max", base.k_max);
  base.out_dir = j.value("out_dir", base.out_dir);
  return base;
}

inline ExperimentConfig load_experiment_config(const std::string& path,
                                               ExperimentConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return experiment_from_json(j, std::move(base));
}

}  // namespace dhpr
