#pragma once

// First-order consensus baselines over the same graph, problem, and
// metrics: PG-EXTRA and NIDS in their published recursions, one neighbor
// exchange per iteration. Only the smooth losses are supported; the
// regularizers enter through their prox as usual.

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "dhpr/errors.hpp"
#include "dhpr/metrics.hpp"
#include "dhpr/problem.hpp"
#include "dhpr/prox.hpp"
#include "dhpr/simnet.hpp"
#include "dhpr/trace.hpp"

namespace dhpr {

struct BaselineConfig {
  double step_size = 0.0;  // 0 means: the method default (1.2/L or 1.9/L)
  double tol_eta_re = 1e-8;
  long long k_max = 20000;
  long long trace_every = 1;
  bool deterministic_timing = false;
  bool log_exchanges = false;

  void validate() const {
    if (step_size < 0.0)
      throw std::invalid_argument("baseline: step_size must be >= 0");
    if (tol_eta_re < 0.0)
      throw std::invalid_argument("baseline: tolerance must be >= 0");
    if (k_max < 1) throw std::invalid_argument("baseline: k_max must be >= 1");
    if (trace_every < 1)
      throw std::invalid_argument("baseline: trace_every must be >= 1");
  }
};

struct BaselineResult {
  Trace trace;
  Eigen::VectorXd x_avg;  // average of the final per-agent x
  BlockVec x;
  long long iterations = 0;
  std::string stop_reason;  // "tol" or "k_max"
  double final_eta_re = std::numeric_limits<double>::infinity();
  ExchangeLog exchange_log;  // populated when cfg.log_exchanges
};

namespace detail {

/// Gradient Lipschitz bound L = max_i lambda_max(A_i A_iᵀ) over the agents
/// that carry data. Agents with rows must have a differentiable loss.
inline double baseline_lipschitz(const DistributedProblem& prob) {
  double L = 0.0;
  bool any = false;
  for (const AgentProblem& ag : prob.agents) {
    if (ag.m() == 0) continue;
    if (ag.loss.kind != LossKind::kLeastSquares &&
        ag.loss.kind != LossKind::kLogistic)
      throw std::invalid_argument(
          "baseline: agents with data need a least-squares or logistic loss");
    any = true;
    L = std::max(L, ag.lambda_A);
  }
  if (!any)
    throw std::invalid_argument("baseline: problem has no smooth loss term");
  return L;
}

inline Eigen::VectorXd baseline_smooth_grad(const AgentProblem& ag,
                                            const Eigen::VectorXd& x) {
  if (ag.m() == 0) return Eigen::VectorXd::Zero(x.size());
  return ag.A.transpose() * loss_gradient(ag.loss, ag.A * x);
}

enum class BaselineMethod { kPgExtra, kNids };

inline const char* baseline_name(BaselineMethod m) {
  return m == BaselineMethod::kPgExtra ? "pg_extra" : "nids";
}

inline BaselineResult run_baseline(const DistributedProblem& prob,
                                   const BaselineConfig& cfg,
                                   BaselineMethod method) {
  prob.validate();
  cfg.validate();
  const double L = baseline_lipschitz(prob);
  const double alpha =
      cfg.step_size > 0.0
          ? cfg.step_size
          : (method == BaselineMethod::kPgExtra ? 1.2 / L : 1.9 / L);
  const int n = prob.n_agents();
  const std::size_t un = static_cast<std::size_t>(n);
  SimNet net(prob.graph, cfg.log_exchanges);
  const auto t0 = std::chrono::steady_clock::now();

  BlockVec x(un, Eigen::VectorXd::Zero(prob.p));       // x^k
  BlockVec x_prev = x;                                 // x^{k-1}
  BlockVec g(un), g_prev(un);                          // smooth gradients
  BlockVec z(un);                                      // prox argument
  BlockVec wx_prev;                                    // cached W x^{k-1}
  for (int i = 0; i < n; ++i)
    g_prev[static_cast<std::size_t>(i)] =
        baseline_smooth_grad(prob.agents[static_cast<std::size_t>(i)],
                             x[static_cast<std::size_t>(i)]);
  if (method == BaselineMethod::kPgExtra) {
    wx_prev = net.exchange(x);
    for (std::size_t i = 0; i < un; ++i) z[i] = wx_prev[i] - alpha * g_prev[i];
  } else {
    for (std::size_t i = 0; i < un; ++i) z[i] = x[i] - alpha * g_prev[i];
  }

  const auto raise_bad = [&](std::size_t i, long long k, const char* stage) {
    throw DivergedError(std::string(baseline_name(method)) +
                             " diverged at iteration " + std::to_string(k) +
                             ": agent " + std::to_string(i + 1) + ", step " +
                             stage + ": non-finite value");
  };

  BaselineResult res;
  for (long long k = 1; k <= cfg.k_max; ++k) {
    for (std::size_t i = 0; i < un; ++i) {
      x[i] = prox_regularizer(prob.agents[i].reg, z[i], alpha);
      if (!x[i].allFinite()) raise_bad(i, k, "prox");
      g[i] = baseline_smooth_grad(prob.agents[i], x[i]);
      if (!g[i].allFinite()) raise_bad(i, k, "gradient");
    }

    const double er = eta_re(prob, x);
    const bool stop = er <= cfg.tol_eta_re || k == cfg.k_max;
    if (k % cfg.trace_every == 0 || stop) {
      TraceRow row;
      row.iter = k;
      row.eta_re = er;
      row.eta_kkt = std::numeric_limits<double>::quiet_NaN();
      row.kkt_norm = std::numeric_limits<double>::quiet_NaN();
      row.sigma = std::numeric_limits<double>::quiet_NaN();
      row.restart_flag = 0;
      row.comm_rounds_cum = net.stats().rounds;
      row.scalars_sent_cum = net.stats().scalars_sent;
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

    if (method == BaselineMethod::kPgExtra) {
      const BlockVec wx = net.exchange(x);
      for (std::size_t i = 0; i < un; ++i) {
        z[i] += wx[i] - 0.5 * (x_prev[i] + wx_prev[i]) -
                alpha * (g[i] - g_prev[i]);
        if (!z[i].allFinite()) raise_bad(i, k, "z_update");
      }
      wx_prev = wx;
    } else {
      BlockVec q(un);
      for (std::size_t i = 0; i < un; ++i)
        q[i] = 2.0 * x[i] - x_prev[i] - alpha * (g[i] - g_prev[i]);
      const BlockVec wq = net.exchange(q);
      for (std::size_t i = 0; i < un; ++i) {
        z[i] += 0.5 * (q[i] + wq[i]) - x[i];
        if (!z[i].allFinite()) raise_bad(i, k, "z_update");
      }
    }
    x_prev = x;
    g_prev = g;
  }

  res.x = x;
  res.x_avg = Eigen::VectorXd::Zero(prob.p);
  for (const Eigen::VectorXd& xi : x) res.x_avg += xi;
  res.x_avg /= static_cast<double>(n);
  if (cfg.log_exchanges) res.exchange_log = net.log();
  return res;
}

}  // namespace detail

/// PG-EXTRA with default step 1.2/L: from z¹ = Wx⁰ − α∇s(x⁰),
///   x^k = prox_{αr}(z^k)
///   z^{k+1} = z^k + Wx^k − ½(I+W)x^{k−1} − α(∇s(x^k) − ∇s(x^{k−1})).
/// Caching Wx^{k−1} keeps it to one exchange per iteration.
inline BaselineResult run_pg_extra(const DistributedProblem& prob,
                                   const BaselineConfig& cfg) {
  return detail::run_baseline(prob, cfg, detail::BaselineMethod::kPgExtra);
}

/// NIDS with default step 1.9/L: from z¹ = x⁰ − α∇s(x⁰),
///   x^k = prox_{αr}(z^k)
///   z^{k+1} = z^k − x^k + ½(I+W)(2x^k − x^{k−1} − α(∇s(x^k) − ∇s(x^{k−1}))).
inline BaselineResult run_nids(const DistributedProblem& prob,
                               const BaselineConfig& cfg) {
  return detail::run_baseline(prob, cfg, detail::BaselineMethod::kNids);
}

}  // namespace dhpr
