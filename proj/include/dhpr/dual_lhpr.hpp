#pragma once

// Dual linearized HPR. One proximal term covers both dual blocks, so every
// iteration needs a single neighbor exchange; the price is a larger
// linearization constant and slower progress per iteration. Kept as the
// comparator the two-exchange solver is measured against.

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dhpr/eigensolve.hpp"
#include "dhpr/errors.hpp"
#include "dhpr/metrics.hpp"
#include "dhpr/problem.hpp"
#include "dhpr/simnet.hpp"
#include "dhpr/solver.hpp"
#include "dhpr/trace.hpp"

namespace dhpr {

/// Inflated power-iteration estimate of the largest eigenvalue of
/// AᵀA + (I−W)⊗I, the linearization constant shared by both dual blocks.
inline double dual_lhpr_lambda(const DistributedProblem& prob) {
  const int n = prob.n_agents();
  const Eigen::Index p = prob.p;
  const Eigen::Index dim = static_cast<Eigen::Index>(n) * p;
  const auto apply = [&prob, n, p, dim](const Eigen::VectorXd& y) {
    BlockVec blocks(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      blocks[static_cast<std::size_t>(i)] =
          y.segment(static_cast<Eigen::Index>(i) * p, p);
    BlockVec out = graph_laplacian_apply(prob.graph, blocks);
    for (int i = 0; i < n; ++i) {
      const AgentProblem& ag = prob.agents[static_cast<std::size_t>(i)];
      if (ag.m() > 0)
        out[static_cast<std::size_t>(i)] +=
            ag.A.transpose() * (ag.A * blocks[static_cast<std::size_t>(i)]);
    }
    Eigen::VectorXd flat(dim);
    for (int i = 0; i < n; ++i)
      flat.segment(static_cast<Eigen::Index>(i) * p, p) =
          out[static_cast<std::size_t>(i)];
    return flat;
  };
  return power_lambda_max(dim, apply);
}

/// Same anchored relaxation, restart, and sigma machinery as DhprSolver,
/// but both dual blocks are linearized with the one constant from
/// dual_lhpr_lambda, collapsing the two exchanges into one. The lambda_U
/// field of the config plays no role here.
class DualLhprSolver {
 public:
  DualLhprSolver(const DistributedProblem& prob, SolverConfig cfg)
      : prob_(&prob), cfg_(std::move(cfg)), net_(prob.graph, cfg_.log_exchanges) {
    prob.validate();
    cfg_.validate();
    lambda_ = dual_lhpr_lambda(prob);
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

  /// One iteration: local prox steps, the single exchange feeding both
  /// dual updates, the anchored relaxation step, and the restart check.
  void step() {
    const int n = prob_->n_agents();
    const double sig = sigma_;
    const double lam = lambda_;
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

    const std::vector<Eigen::VectorXd> agg = net_.exchange(pay);

    std::vector<double> merit_sq(static_cast<std::size_t>(n), 0.0);
    for_agents(n, [&](int i) {
      AgentState& a = st_[static_cast<std::size_t>(i)];
      const AgentProblem& ag = prob_->agents[static_cast<std::size_t>(i)];
      const std::size_t ui = static_cast<std::size_t>(i);
      a.s_bar = a.s + (pay[ui] - agg[ui]) / (sig * lam);
      a.xi = ag.A * pay[ui] + (sig * lam) * a.z;
      const Eigen::VectorXd pf = prox_loss(ag.loss, a.xi, sig * lam);
      a.z_bar = (a.xi - pf) / (sig * lam);
      if (!a.s_bar.allFinite())
        bad[ui] = "s_bar";
      else if (!a.xi.allFinite())
        bad[ui] = "xi";
      else if (!a.z_bar.allFinite())
        bad[ui] = "z_bar";
      merit_sq[ui] = sig * lam * (a.z - a.z_bar).squaredNorm() +
                     sig * lam * (a.s - a.s_bar).squaredNorm() +
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
      if (fire) return;
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
  double lambda() const { return lambda_; }
  double merit() const { return merit_; }
  bool restart_fired() const { return restart_fired_; }
  const SolverConfig& config() const { return cfg_; }
  const DistributedProblem& problem() const { return *prob_; }
  const std::vector<AgentState>& states() const { return st_; }
  SimNet& net() { return net_; }
  const SimNet& net() const { return net_; }
  long long comm_rounds() const { return net_.stats().rounds; }
  long long scalars_sent() const { return net_.stats().scalars_sent; }

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
        throw DivergedError("dual_lhpr diverged at iteration " +
                                 std::to_string(iter_ + 1) + ": agent " +
                                 std::to_string(i + 1) + ", step " + bad[i] +
                                 ": non-finite value");
  }

  void do_restart() {
    const int n = prob_->n_agents();
    if (!cfg_.compute_v_each_iter)
      for_agents(n, [&](int i) {
        AgentState& a = st_[static_cast<std::size_t>(i)];
        a.v_bar = (a.phi - a.x_bar) / sigma_at_phi_;
      });
    if (cfg_.sigma_update.enabled) {
      // same balancing rule as DhprSolver, with the one shared weight
      std::vector<double> pr(static_cast<std::size_t>(n), 0.0);
      std::vector<double> du(static_cast<std::size_t>(n), 0.0);
      for_agents(n, [&](int i) {
        const AgentState& a = st_[static_cast<std::size_t>(i)];
        pr[static_cast<std::size_t>(i)] = (a.x_bar - a.x).squaredNorm();
        du[static_cast<std::size_t>(i)] =
            lambda_ * (a.z - a.z_bar).squaredNorm() +
            lambda_ * (a.s - a.s_bar).squaredNorm();
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
  double lambda_ = 0.0;
  long long iter_ = 0;
  long long inner_ = 0;
  double sigma_ = 1.0;
  double sigma0_ = 1.0;
  double sigma_at_phi_ = 1.0;
  double merit_ = 0.0;
  double r_cycle_start_ = -1.0;
  double r_prev_ = -1.0;
  bool restart_fired_ = false;
};

inline RunResult run_dual_lhpr(const DistributedProblem& prob,
                               const SolverConfig& cfg) {
  DualLhprSolver solver(prob, cfg);
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

}  // namespace dhpr
