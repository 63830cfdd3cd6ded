#pragma once

// The distributed Halpern Peaceman-Rachford iteration in its executed
// per-agent form, with the restart / sigma-rebalancing policy, trace
// recording, and JSON checkpoints.

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dhpr/errors.hpp"
#include "dhpr/metrics.hpp"
#include "dhpr/problem.hpp"
#include "dhpr/simnet.hpp"
#include "dhpr/trace.hpp"

namespace dhpr {

struct RestartPolicy {
  bool enabled = true;
  double sufficient_decay = 0.2;  // restart when merit <= this * cycle start
  double necessary_decay = 0.8;   // ... or merit >= this * the previous
                                  // checkpoint value (checked every cap/8)
  long long long_run_cap = 1000;  // ... or after this many iterations anyway
};

struct SigmaUpdatePolicy {
  bool enabled = true;
  double clip_lo = 1e-4;  // bounds relative to the initial sigma
  double clip_hi = 1e4;
  double damping = 0.5;
};

struct SolverConfig {
  double sigma = 1.0;
  double lambda_U = 0.0;  // 0 means: derive exactly 1 - lambda_min(W)
  RestartPolicy restart;
  SigmaUpdatePolicy sigma_update;
  double tol_eta_re = 1e-8;
  long long k_max = 20000;
  long long trace_every = 1;
  bool compute_v_each_iter = true;
  bool halpern_enabled = true;
  int threads = 1;
  bool deterministic_timing = false;
  bool log_exchanges = false;
  std::optional<double> dual_reference;  // optimal dual value, fills dual_gap

  void validate() const {
    if (!(sigma > 0.0)) throw std::invalid_argument("config: sigma must be positive");
    if (lambda_U < 0.0) throw std::invalid_argument("config: lambda_U must be >= 0");
    if (!(restart.sufficient_decay > 0.0) ||
        !(restart.sufficient_decay <= restart.necessary_decay) ||
        !(restart.necessary_decay < 1.0))
      throw std::invalid_argument("config: need 0 < sufficient <= necessary < 1");
    if (restart.long_run_cap < 1)
      throw std::invalid_argument("config: long_run_cap must be >= 1");
    if (!(sigma_update.clip_lo > 0.0) || sigma_update.clip_lo > sigma_update.clip_hi)
      throw std::invalid_argument("config: need 0 < clip_lo <= clip_hi");
    if (!(sigma_update.damping > 0.0) || sigma_update.damping > 1.0)
      throw std::invalid_argument("config: damping must lie in (0, 1]");
    if (tol_eta_re < 0.0) throw std::invalid_argument("config: tolerance must be >= 0");
    if (k_max < 1) throw std::invalid_argument("config: k_max must be >= 1");
    if (trace_every < 1) throw std::invalid_argument("config: trace_every must be >= 1");
    if (threads < 1) throw std::invalid_argument("config: threads must be >= 1");
  }
};

inline nlohmann::json config_to_json(const SolverConfig& c) {
  nlohmann::json j;
  j["sigma"] = c.sigma;
  j["lambda_U"] = c.lambda_U;
  j["restart"] = {{"enabled", c.restart.enabled},
                  {"sufficient_decay", c.restart.sufficient_decay},
                  {"necessary_decay", c.restart.necessary_decay},
                  {"long_run_cap", c.restart.long_run_cap}};
  j["sigma_update"] = {{"enabled", c.sigma_update.enabled},
                       {"clip_lo", c.sigma_update.clip_lo},
                       {"clip_hi", c.sigma_update.clip_hi},
                       {"damping", c.sigma_update.damping}};
  j["tol_eta_re"] = c.tol_eta_re;
  j["k_max"] = c.k_max;
  j["trace_every"] = c.trace_every;
  j["compute_v_each_iter"] = c.compute_v_each_iter;
  j["halpern_enabled"] = c.halpern_enabled;
  j["threads"] = c.threads;
  j["deterministic_timing"] = c.deterministic_timing;
  j["log_exchanges"] = c.log_exchanges;
  if (c.dual_reference)
    j["dual_reference"] = *c.dual_reference;
  else
    j["dual_reference"] = nullptr;
  return j;
}

inline SolverConfig config_from_json(const nlohmann::json& j) {
  SolverConfig c;
  c.sigma = j.at("sigma").get<double>();
  c.lambda_U = j.at("lambda_U").get<double>();
  const auto& r = j.at("restart");
  c.restart.enabled = r.at("enabled").get<bool>();
  c.restart.sufficient_decay = r.at("sufficient_decay").get<double>();
  c.restart.necessary_decay = r.at("necessary_decay").get<double>();
  c.restart.long_run_cap = r.at("long_run_cap").get<long long>();
  const auto& s = j.at("sigma_update");
  c.sigma_update.enabled = s.at("enabled").get<bool>();
  c.sigma_update.clip_lo = s.at("clip_lo").get<double>();
  c.sigma_update.clip_hi = s.at("clip_hi").get<double>();
  c.sigma_update.damping = s.at("damping").get<double>();
  c.tol_eta_re = j.at("tol_eta_re").get<double>();
  c.k_max = j.at("k_max").get<long long>();
  c.trace_every = j.at("trace_every").get<long long>();
  c.compute_v_each_iter = j.at("compute_v_each_iter").get<bool>();
  c.halpern_enabled = j.at("halpern_enabled").get<bool>();
  c.threads = j.at("threads").get<int>();
  c.deterministic_timing = j.at("deterministic_timing").get<bool>();
  c.log_exchanges = j.at("log_exchanges").get<bool>();
  if (j.contains("dual_reference") && !j.at("dual_reference").is_null())
    c.dual_reference = j.at("dual_reference").get<double>();
  c.validate();
  return c;
}

/// Per-agent slice of u, its anchor, bar and hat points, and the scratch
/// vectors of one iteration. z blocks are m_i-sized, everything else p.
struct AgentState {
  Eigen::VectorXd z, s, v, x;          // current u
  Eigen::VectorXd z0, s0, v0, x0;      // anchor, reset at restarts
  Eigen::VectorXd z_bar, s_bar, v_bar, x_bar;
  Eigen::VectorXd z_hat, s_hat, v_hat, x_hat;
  Eigen::VectorXd phi, xi, s_half;
};

namespace detail {

inline nlohmann::json vec_to_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Eigen::VectorXd vec_from_json(const nlohmann::json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

}  // namespace detail

inline nlohmann::json agent_state_to_json(const AgentState& a) {
  nlohmann::json j;
  j["z"] = detail::vec_to_json(a.z);
  j["s"] = detail::vec_to_json(a.s);
  j["v"] = detail::vec_to_json(a.v);
  j["x"] = detail::vec_to_json(a.x);
  j["z0"] = detail::vec_to_json(a.z0);
  j["s0"] = detail::vec_to_json(a.s0);
  j["v0"] = detail::vec_to_json(a.v0);
  j["x0"] = detail::vec_to_json(a.x0);
  j["z_bar"] = detail::vec_to_json(a.z_bar);
  j["s_bar"] = detail::vec_to_json(a.s_bar);
  j["v_bar"] = detail::vec_to_json(a.v_bar);
  j["x_bar"] = detail::vec_to_json(a.x_bar);
  j["z_hat"] = detail::vec_to_json(a.z_hat);
  j["s_hat"] = detail::vec_to_json(a.s_hat);
  j["v_hat"] = detail::vec_to_json(a.v_hat);
  j["x_hat"] = detail::vec_to_json(a.x_hat);
  j["phi"] = detail::vec_to_json(a.phi);
  j["xi"] = detail::vec_to_json(a.xi);
  j["s_half"] = detail::vec_to_json(a.s_half);
  return j;
}

inline AgentState agent_state_from_json(const nlohmann::json& j) {
  AgentState a;
  a.z = detail::vec_from_json(j.at("z"));
  a.s = detail::vec_from_json(j.at("s"));
  a.v = detail::vec_from_json(j.at("v"));
  a.x = detail::vec_from_json(j.at("x"));
  a.z0 = detail::vec_from_json(j.at("z0"));
  a.s0 = detail::vec_from_json(j.at("s0"));
  a.v0 = detail::vec_from_json(j.at("v0"));
  a.x0 = detail::vec_from_json(j.at("x0"));
  a.z_bar = detail::vec_from_json(j.at("z_bar"));
  a.s_bar = detail::vec_from_json(j.at("s_bar"));
  a.v_bar = detail::vec_from_json(j.at("v_bar"));
  a.x_bar = detail::vec_from_json(j.at("x_bar"));
  a.z_hat = detail::vec_from_json(j.at("z_hat"));
  a.s_hat = detail::vec_from_json(j.at("s_hat"));
  a.v_hat = detail::vec_from_json(j.at("v_hat"));
  a.x_hat = detail::vec_from_json(j.at("x_hat"));
  a.phi = detail::vec_from_json(j.at("phi"));
  a.xi = detail::vec_from_json(j.at("xi"));
  a.s_half = detail::vec_from_json(j.at("s_half"));
  return a;
}

struct Checkpoint {
  SolverConfig config;
  std::vector<AgentState> states;
  long long iter = 0;
  long long inner = 0;
  double sigma = 1.0;
  double sigma0 = 1.0;
  double sigma_at_phi = 1.0;
  double r_cycle_start = -1.0;
  double r_prev = -1.0;
  long long comm_rounds = 0;
  long long scalars_sent = 0;
  int p = 0;
  std::vector<int> agent_m;
};

class DhprSolver {
 public:
  DhprSolver(const DistributedProblem& prob, SolverConfig cfg)
      : prob_(&prob), cfg_(std::move(cfg)), net_(prob.graph, cfg_.log_exchanges) {
    prob.validate();
    cfg_.validate();
    const double lu_min = 1.0 - min_eigenvalue(prob.graph.weights);
    if (cfg_.lambda_U == 0.0)
      cfg_.lambda_U = lu_min;
    else if (cfg_.lambda_U < lu_min * (1.0 - 1e-12))
      throw std::invalid_argument(
          "config: lambda_U must be at least 1 - lambda_min(W)");
    sigma_ = cfg_.sigma;
    sigma0_ = cfg_.sigma;
    sigma_at_phi_ = cfg_.sigma;
    const int n = prob.n_agents();
    st_.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      AgentState& a = st_[static_cast<std::size_t>(i)];
      const int m = prob.agents[static_cast<std::size_t>(i)].m();
      a.z = a.z0 = a.z_bar = a.z_hat = a.xi = Eigen::VectorXd::Zero(m);
      a.s = a.s0 = a.s_bar = a.s_hat = a.s_half = Eigen::VectorXd::Zero(prob.p);
      a.v = a.v0 = a.v_bar = a.v_hat = Eigen::VectorXd::Zero(prob.p);
      a.x = a.x0 = a.x_bar = a.x_hat = a.phi = Eigen::VectorXd::Zero(prob.p);
    }
  }

  /// One full iteration: local prox steps, the two neighbor exchanges,
  /// the anchored relaxation step, and (when armed) the restart check.
  void step() {
    const int n = prob_->n_agents();
    const double sig = sigma_;
    const double lu = cfg_.lambda_U;
    sigma_at_phi_ = sig;
    std::vector<const char*> bad(static_cast<std::size_t>(n), nullptr);

    std::vector<Eigen::VectorXd> pay(static_cast<std::size_t>(n));
    for_agents(n, [&](int i) {
      AgentState& a = st_[static_cast<std::size_t>(i)];
      const AgentProblem& ag = prob_->agents[static_cast<std::size_t>(i)];
      a.phi = a.x - sig * (ag.A.transpose() * a.z + a.s);
      a.x_bar = prox_regularizer(ag.reg, a.phi, sig);
      if (cfg_.compute_v_each_iter) a.v_bar = (a.phi - a.x_bar) / sig;
      if (!a.phi.allFinite())
        bad[static_cast<std::size_t>(i)] = "phi";
      else if (!a.x_bar.allFinite())
        bad[static_cast<std::size_t>(i)] = "x_bar";
      pay[static_cast<std::size_t>(i)] = 2.0 * a.x_bar - a.x;
    });
    raise_if_diverged(bad);

    const std::vector<Eigen::VectorXd> agg1 = net_.exchange(pay);

    for_agents(n, [&](int i) {
      AgentState& a = st_[static_cast<std::size_t>(i)];
      const AgentProblem& ag = prob_->agents[static_cast<std::size_t>(i)];
      const std::size_t ui = static_cast<std::size_t>(i);
      a.s_half = a.s + (pay[ui] - agg1[ui]) / (sig * lu);
      a.xi = ag.A * (pay[ui] - sig * (a.s_half - a.s)) + (sig * ag.lambda_A) * a.z;
      const Eigen::VectorXd pf = prox_loss(ag.loss, a.xi, sig * ag.lambda_A);
      a.z_bar = (a.xi - pf) / (sig * ag.lambda_A);
      if (!a.s_half.allFinite())
        bad[ui] = "s_half";
      else if (!a.xi.allFinite())
        bad[ui] = "xi";
      else if (!a.z_bar.allFinite())
        bad[ui] = "z_bar";
      pay[ui] = ag.A.transpose() * (a.z - a.z_bar);
    });
    raise_if_diverged(bad);

    const std::vector<Eigen::VectorXd> agg2 = net_.exchange(pay);

    std::vector<double> merit_sq(static_cast<std::size_t>(n), 0.0);
    for_agents(n, [&](int i) {
      AgentState& a = st_[static_cast<std::size_t>(i)];
      const AgentProblem& ag = prob_->agents[static_cast<std::size_t>(i)];
      const std::size_t ui = static_cast<std::size_t>(i);
      a.s_bar = a.s_half + (pay[ui] - agg2[ui]) / lu;
      if (!a.s_bar.allFinite()) bad[ui] = "s_bar";
      // weighted gap between u and its bar point; v is derived, so skipped
      merit_sq[ui] = sig * ag.lambda_A * (a.z - a.z_bar).squaredNorm() +
                     sig * lu * (a.s - a.s_bar).squaredNorm() +
                     (a.x - a.x_bar).squaredNorm() / sig;
    });
    raise_if_diverged(bad);

    double msq = 0.0;
    for (double m : merit_sq) msq += m;
    merit_ = std::sqrt(std::max(0.0, msq));
    if (inner_ == 0) r_cycle_start_ = r_prev_ = merit_;

    bool fire = false;
    if (cfg_.restart.enabled && inner_ >= 1) {
      // stall checks compare against the merit one check window earlier
      const long long window =
          std::max<long long>(1, cfg_.restart.long_run_cap / 8);
      const bool at_check = inner_ % window == 0;
      fire = merit_ <= cfg_.restart.sufficient_decay * r_cycle_start_ ||
             (at_check && r_prev_ >= 0.0 &&
              merit_ >= cfg_.restart.necessary_decay * r_prev_) ||
             inner_ + 1 >= cfg_.restart.long_run_cap;
      if (at_check) r_prev_ = merit_;
    }

    const double c0 = 1.0 / (static_cast<double>(inner_) + 2.0);
    const double c1 = (static_cast<double>(inner_) + 1.0) /
                      (static_cast<double>(inner_) + 2.0);
    for_agents(n, [&](int i) {
      AgentState& a = st_[static_cast<std::size_t>(i)];
      const std::size_t ui = static_cast<std::size_t>(i);
      a.z_hat = 2.0 * a.z_bar - a.z;
      a.s_hat = 2.0 * a.s_bar - a.s;
      a.x_hat = 2.0 * a.x_bar - a.x;
      if (cfg_.compute_v_each_iter) a.v_hat = 2.0 * a.v_bar - a.v;
      if (fire) return;  // the restart replaces u wholesale below
      if (cfg_.halpern_enabled) {
        a.z = c0 * a.z0 + c1 * a.z_hat;
        a.s = c0 * a.s0 + c1 * a.s_hat;
        a.x = c0 * a.x0 + c1 * a.x_hat;
        if (cfg_.compute_v_each_iter) a.v = c0 * a.v0 + c1 * a.v_hat;
      } else {
        a.z = a.z_bar;
        a.s = a.s_bar;
        a.x = a.x_bar;
        if (cfg_.compute_v_each_iter) a.v = a.v_bar;
      }
      if (!(a.z.allFinite() && a.s.allFinite() && a.x.allFinite()))
        bad[ui] = "halpern";
    });
    if (fire)
      do_restart();
    else
      ++inner_;
    raise_if_diverged(bad);
    ++iter_;
    restart_fired_ = fire;
  }

  long long iter() const { return iter_; }
  long long inner_iter() const { return inner_; }
  double sigma() const { return sigma_; }
  double merit() const { return merit_; }
  bool restart_fired() const { return restart_fired_; }
  const SolverConfig& config() const { return cfg_; }  // lambda_U resolved
  const DistributedProblem& problem() const { return *prob_; }
  const std::vector<AgentState>& states() const { return st_; }
  SimNet& net() { return net_; }
  const SimNet& net() const { return net_; }
  long long comm_rounds() const { return base_rounds_ + net_.stats().rounds; }
  long long scalars_sent() const {
    return base_scalars_ + net_.stats().scalars_sent;
  }

  /// Replace u and its anchor with the given blocks and reset counters.
  void set_state(const BlockVec& z, const BlockVec& s, const BlockVec& v,
                 const BlockVec& x) {
    detail::require_z_blocks(*prob_, z, "set_state");
    detail::require_x_blocks(*prob_, s, "set_state", "s");
    detail::require_x_blocks(*prob_, v, "set_state", "v");
    detail::require_x_blocks(*prob_, x, "set_state", "x");
    for (std::size_t i = 0; i < st_.size(); ++i) {
      AgentState& a = st_[i];
      a.z = a.z0 = a.z_bar = a.z_hat = z[i];
      a.s = a.s0 = a.s_bar = a.s_hat = s[i];
      a.v = a.v0 = a.v_bar = a.v_hat = v[i];
      a.x = a.x0 = a.x_bar = a.x_hat = x[i];
    }
    iter_ = 0;
    inner_ = 0;
    merit_ = 0.0;
    r_cycle_start_ = -1.0;
    r_prev_ = -1.0;
    restart_fired_ = false;
  }

  /// v̄ of the latest iteration, recomputed from scratch space when the
  /// lazy setting skipped storing it.
  BlockVec fresh_v_bar() const {
    require_started("fresh_v_bar");
    BlockVec out(st_.size());
    for (std::size_t i = 0; i < st_.size(); ++i)
      out[i] = cfg_.compute_v_each_iter
                   ? st_[i].v_bar
                   : Eigen::VectorXd((st_[i].phi - st_[i].x_bar) / sigma_at_phi_);
    return out;
  }

  ResidualReport bar_residuals() const {
    require_started("bar_residuals");
    return kkt_residual(*prob_, collect(&AgentState::z_bar),
                        collect(&AgentState::s_bar), fresh_v_bar(),
                        collect(&AgentState::x_bar));
  }

  double bar_eta_re() const {
    require_started("bar_eta_re");
    return eta_re(*prob_, collect(&AgentState::x_bar));
  }

  std::optional<double> bar_dual_gap(double reference_optimum) const {
    require_started("bar_dual_gap");
    return dual_objective_error(*prob_, collect(&AgentState::z_bar),
                                fresh_v_bar(), reference_optimum);
  }

  Eigen::VectorXd bar_x_average() const {
    Eigen::VectorXd avg = Eigen::VectorXd::Zero(prob_->p);
    for (const auto& a : st_) avg += a.x_bar;
    return avg / static_cast<double>(st_.size());
  }

  BlockVec collect(Eigen::VectorXd AgentState::*field) const {
    BlockVec out(st_.size());
    for (std::size_t i = 0; i < st_.size(); ++i) out[i] = st_[i].*field;
    return out;
  }

  Checkpoint checkpoint() const {
    Checkpoint c;
    c.config = cfg_;
    c.states = st_;
    c.iter = iter_;
    c.inner = inner_;
    c.sigma = sigma_;
    c.sigma0 = sigma0_;
    c.sigma_at_phi = sigma_at_phi_;
    c.r_cycle_start = r_cycle_start_;
    c.r_prev = r_prev_;
    c.comm_rounds = comm_rounds();
    c.scalars_sent = scalars_sent();
    c.p = prob_->p;
    for (const auto& ag : prob_->agents) c.agent_m.push_back(ag.m());
    return c;
  }

  void restore(const Checkpoint& c) {
    if (c.p != prob_->p || static_cast<int>(c.agent_m.size()) != prob_->n_agents())
      throw std::invalid_argument("restore: checkpoint shape mismatch");
    for (int i = 0; i < prob_->n_agents(); ++i)
      if (c.agent_m[static_cast<std::size_t>(i)] !=
          prob_->agents[static_cast<std::size_t>(i)].m())
        throw std::invalid_argument("restore: checkpoint shape mismatch");
    cfg_ = c.config;
    cfg_.validate();
    st_ = c.states;
    iter_ = c.iter;
    inner_ = c.inner;
    sigma_ = c.sigma;
    sigma0_ = c.sigma0;
    sigma_at_phi_ = c.sigma_at_phi;
    r_cycle_start_ = c.r_cycle_start;
    r_prev_ = c.r_prev;
    base_rounds_ = c.comm_rounds - net_.stats().rounds;
    base_scalars_ = c.scalars_sent - net_.stats().scalars_sent;
    restart_fired_ = false;
  }

 private:
  void require_started(const char* who) const {
    if (iter_ == 0)
      throw std::logic_error(std::string(who) + ": no iterations have run");
  }

  void for_agents(int n, const std::function<void(int)>& fn) const {
    int t = std::min(std::max(1, cfg_.threads), n);
    if (t <= 1) {
      for (int i = 0; i < n; ++i) fn(i);
      return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(t));
    for (int w = 0; w < t; ++w)
      pool.emplace_back([&fn, w, t, n] {
        for (int i = w; i < n; i += t) fn(i);
      });
    for (auto& th : pool) th.join();
  }

  void raise_if_diverged(const std::vector<const char*>& bad) const {
    for (std::size_t i = 0; i < bad.size(); ++i)
      if (bad[i])
        throw DivergedError("dhpr diverged at iteration " +
                                 std::to_string(iter_ + 1) + ": agent " +
                                 std::to_string(i + 1) + ", step " + bad[i] +
                                 ": non-finite value");
  }

  // Replace u and the anchor with the bar point, rebalance sigma from the
  // residual ratio, and start a fresh cycle.
  void do_restart() {
    const int n = prob_->n_agents();
    if (!cfg_.compute_v_each_iter)
      for_agents(n, [&](int i) {
        AgentState& a = st_[static_cast<std::size_t>(i)];
        a.v_bar = (a.phi - a.x_bar) / sigma_at_phi_;
      });
    if (cfg_.sigma_update.enabled) {
      // Rebalance sigma so the two sides of the cycle's closing gap carry
      // equal weight: the x movement (primal side, weight 1/sigma in the
      // merit) against the lambda-weighted dual-block movement scaled by
      // sigma. Whichever side dominates, sigma moves to shrink its share,
      // damped by the exponent and clipped around the starting value.
      std::vector<double> pr(static_cast<std::size_t>(n), 0.0);
      std::vector<double> du(static_cast<std::size_t>(n), 0.0);
      for_agents(n, [&](int i) {
        const AgentState& a = st_[static_cast<std::size_t>(i)];
        const AgentProblem& ag = prob_->agents[static_cast<std::size_t>(i)];
        pr[static_cast<std::size_t>(i)] = (a.x_bar - a.x).squaredNorm();
        du[static_cast<std::size_t>(i)] =
            ag.lambda_A * (a.z - a.z_bar).squaredNorm() +
            cfg_.lambda_U * (a.s - a.s_bar).squaredNorm();
      });
      double prs = 0.0, dus = 0.0;
      for (int i = 0; i < n; ++i) {
        prs += pr[static_cast<std::size_t>(i)];
        dus += du[static_cast<std::size_t>(i)];
      }
      const double primal = std::sqrt(prs);
      const double dual = sigma_ * std::sqrt(dus);
      if (primal > 0.0 && dual > 0.0) {
        const double prop =
            sigma_ * std::pow(primal / dual, cfg_.sigma_update.damping);
        if (std::isfinite(prop))
          sigma_ = std::clamp(prop, cfg_.sigma_update.clip_lo * sigma0_,
                              cfg_.sigma_update.clip_hi * sigma0_);
      }
    }
    for_agents(n, [&](int i) {
      AgentState& a = st_[static_cast<std::size_t>(i)];
      a.z = a.z0 = a.z_bar;
      a.s = a.s0 = a.s_bar;
      a.v = a.v0 = a.v_bar;
      a.x = a.x0 = a.x_bar;
    });
    inner_ = 0;
    r_cycle_start_ = -1.0;
    r_prev_ = -1.0;
  }

  const DistributedProblem* prob_;
  SolverConfig cfg_;
  SimNet net_;
  std::vector<AgentState> st_;
  long long iter_ = 0;
  long long inner_ = 0;
  double sigma_ = 1.0;
  double sigma0_ = 1.0;
  double sigma_at_phi_ = 1.0;
  double merit_ = 0.0;
  double r_cycle_start_ = -1.0;  // negative: not yet observed this cycle
  double r_prev_ = -1.0;
  bool restart_fired_ = false;
  long long base_rounds_ = 0;
  long long base_scalars_ = 0;
};

struct RunResult {
  Trace trace;
  Eigen::VectorXd x_avg;  // average of the agents' bar x
  std::vector<AgentState> states;
  long long iterations = 0;
  std::string stop_reason;  // "tol" or "k_max"
  double final_eta_re = std::numeric_limits<double>::infinity();
  ExchangeLog exchange_log;  // populated when cfg.log_exchanges
};

inline RunResult run_dhpr(const DistributedProblem& prob, const SolverConfig& cfg) {
  DhprSolver solver(prob, cfg);
  const auto t0 = std::chrono::steady_clock::now();
  RunResult res;
  for (long long k = 1; k <= cfg.k_max; ++k) {
    solver.step();
    const double er = solver.bar_eta_re();
    const bool stop = er <= cfg.tol_eta_re || k == cfg.k_max;
    if (k % cfg.trace_every == 0 || stop) {
      const ResidualReport rep = solver.bar_residuals();
      TraceRow row;
      row.iter = k;
      row.eta_re = rep.eta_re;
      row.eta_kkt = rep.eta_kkt;
      row.kkt_norm = rep.kkt_norm();
      if (cfg.dual_reference) row.dual_gap = solver.bar_dual_gap(*cfg.dual_reference);
      row.sigma = solver.sigma();
      row.restart_flag = solver.restart_fired() ? 1 : 0;
      row.comm_rounds_cum = solver.comm_rounds();
      row.scalars_sent_cum = solver.scalars_sent();
      row.wall_ms = cfg.deterministic_timing
                        ? 0.0
                        : std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
      res.trace.rows.push_back(row);
    }
    if (stop) {
      res.iterations = k;
      res.final_eta_re = er;
      res.stop_reason = er <= cfg.tol_eta_re ? "tol" : "k_max";
      break;
    }
  }
  res.x_avg = solver.bar_x_average();
  res.states = solver.states();
  if (cfg.log_exchanges) res.exchange_log = solver.net().log();
  return res;
}

inline nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  nlohmann::json j;
  j["config"] = config_to_json(c.config);
  nlohmann::json states = nlohmann::json::array();
  for (const auto& a : c.states) states.push_back(agent_state_to_json(a));
  j["states"] = std::move(states);
  j["iter"] = c.iter;
  j["inner"] = c.inner;
  j["sigma"] = c.sigma;
  j["sigma0"] = c.sigma0;
  j["sigma_at_phi"] = c.sigma_at_phi;
  j["r_cycle_start"] = c.r_cycle_start;
  j["r_prev"] = c.r_prev;
  j["comm_rounds"] = c.comm_rounds;
  j["scalars_sent"] = c.scalars_sent;
  j["p"] = c.p;
  j["agent_m"] = c.agent_m;
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  Checkpoint c;
  c.config = config_from_json(j.at("config"));
  for (const auto& a : j.at("states")) c.states.push_back(agent_state_from_json(a));
  c.iter = j.at("iter").get<long long>();
  c.inner = j.at("inner").get<long long>();
  c.sigma = j.at("sigma").get<double>();
  c.sigma0 = j.at("sigma0").get<double>();
  c.sigma_at_phi = j.at("sigma_at_phi").get<double>();
  c.r_cycle_start = j.at("r_cycle_start").get<double>();
  c.r_prev = j.at("r_prev").get<double>();
  c.comm_rounds = j.at("comm_rounds").get<long long>();
  c.scalars_sent = j.at("scalars_sent").get<long long>();
  c.p = j.at("p").get<int>();
  c.agent_m = j.at("agent_m").get<std::vector<int>>();
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot write " + path);
  f << checkpoint_to_json(c).dump(2) << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  nlohmann::json j;
  f >> j;
  return checkpoint_from_json(j);
}

}  // namespace dhpr
