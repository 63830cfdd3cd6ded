#pragma once

// Residual maps over the full network state, the relative accuracy
// measures used for termination, the dual objective error, and the
// weighted-norm constants that make the O(1/k) complexity bound checkable
// at desk scale.

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dhpr/eigensolve.hpp"
#include "dhpr/problem.hpp"

namespace dhpr {

/// One p- or m_i-sized block per agent.
using BlockVec = std::vector<Eigen::VectorXd>;

inline double stacked_squared_norm(const BlockVec& v) {
  double s = 0.0;
  for (const auto& blk : v) s += blk.squaredNorm();
  return s;
}

inline double stacked_norm(const BlockVec& v) {
  return std::sqrt(stacked_squared_norm(v));
}

/// ((I - W) ⊗ I) x blockwise: out_i = x_i - sum_j a_ij x_j. Touches only
/// each agent's own block and its neighbors'.
inline BlockVec graph_laplacian_apply(const WeightedGraph& g, const BlockVec& x) {
  if (static_cast<int>(x.size()) != g.n_agents)
    throw std::invalid_argument("graph_laplacian_apply: block count mismatch");
  BlockVec out(x.size());
  for (int i = 0; i < g.n_agents; ++i) {
    Eigen::VectorXd acc = g.weights(i, i) * x[static_cast<std::size_t>(i)];
    for (int j : g.neighbors(i)) acc += g.weights(i, j) * x[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] - acc;
  }
  return out;
}

/// xᵀ ((I - W) ⊗ I) x, clamped at zero against rounding noise.
inline double consensus_quadratic(const WeightedGraph& g, const BlockVec& x) {
  const BlockVec lap = graph_laplacian_apply(g, x);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i].dot(lap[i]);
  return std::max(0.0, s);
}

/// ||U x|| with U = sqrt((I - W) ⊗ I), computed through the quadratic form
/// so U itself never has to be materialized.
inline double consensus_norm(const WeightedGraph& g, const BlockVec& x) {
  return std::sqrt(consensus_quadratic(g, x));
}

struct ResidualReport {
  std::array<double, 4> R_vec_norms{};  // prox_f block, Ux, prox_r block, Aᵀz+s+v
  double eta_re = 0.0;
  double eta_kkt = 0.0;
  std::optional<double> dual_gap;
  double consensus_err = 0.0;

  double kkt_norm() const {
    double s = 0.0;
    for (double r : R_vec_norms) s += r * r;
    return std::sqrt(s);
  }
};

/// The network-level regularizer sum_i r_i: weights add across agents and
/// the group partition (when present) must coincide on every agent.
inline RegularizerSpec combined_regularizer(const DistributedProblem& prob) {
  if (prob.agents.empty())
    throw std::invalid_argument("combined_regularizer: no agents");
  RegularizerSpec total = prob.agents.front().reg;
  for (std::size_t i = 1; i < prob.agents.size(); ++i) {
    const RegularizerSpec& r = prob.agents[i].reg;
    if (r.kind != total.kind)
      throw std::invalid_argument("combined_regularizer: mixed regularizer kinds");
    if (r.kind == RegularizerKind::kSparseGroup &&
        (r.groups != total.groups || r.group_weights != total.group_weights))
      throw std::invalid_argument(
          "combined_regularizer: group structure differs across agents");
    total.theta1 += r.theta1;
    total.theta2 += r.theta2;
  }
  return total;
}

namespace detail {

inline void require_x_blocks(const DistributedProblem& prob, const BlockVec& x,
                             const char* who, const char* name) {
  if (static_cast<int>(x.size()) != prob.n_agents())
    throw std::invalid_argument(std::string(who) + ": " + name +
                                " block count mismatch");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i].size() != prob.p)
      throw std::invalid_argument(std::string(who) + ": agent " +
                                  std::to_string(i + 1) + " " + name +
                                  " has wrong dimension");
}

inline void require_z_blocks(const DistributedProblem& prob, const BlockVec& z,
                             const char* who) {
  if (static_cast<int>(z.size()) != prob.n_agents())
    throw std::invalid_argument(std::string(who) + ": z block count mismatch");
  for (std::size_t i = 0; i < z.size(); ++i)
    if (z[i].size() != prob.agents[i].m())
      throw std::invalid_argument(std::string(who) + ": agent " +
                                  std::to_string(i + 1) +
                                  " z has wrong dimension");
}

}  // namespace detail

/// max of the prox-gradient residual at the network average and the
/// normalized consensus error. Requires every local loss to be
/// differentiable, which all supported kinds are.
inline double eta_re(const DistributedProblem& prob, const BlockVec& x) {
  detail::require_x_blocks(prob, x, "eta_re", "x");
  const int n = prob.n_agents();
  Eigen::VectorXd x_avg = Eigen::VectorXd::Zero(prob.p);
  for (const auto& blk : x) x_avg += blk;
  x_avg /= static_cast<double>(n);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(prob.p);
  for (const auto& ag : prob.agents) {
    if (ag.m() == 0) continue;
    grad += ag.A.transpose() * loss_gradient(ag.loss, ag.A * x_avg);
  }
  const RegularizerSpec reg_sum = combined_regularizer(prob);
  const Eigen::VectorXd shifted = prox_regularizer(reg_sum, x_avg - grad, 1.0);
  const double t1 =
      (x_avg - shifted).norm() / (1.0 + x_avg.norm() + grad.norm());
  const double t2 = consensus_norm(prob.graph, x) / (1.0 + stacked_norm(x));
  return std::max(t1, t2);
}

/// The four-block residual of the optimality system at (z, s, v, x),
/// with unit-step proxes, plus both relative measures. dual_gap is left
/// unset; it needs a reference optimum (see dual_objective_error).
inline ResidualReport kkt_residual(const DistributedProblem& prob, const BlockVec& z,
                                   const BlockVec& s, const BlockVec& v,
                                   const BlockVec& x) {
  detail::require_z_blocks(prob, z, "kkt_residual");
  detail::require_x_blocks(prob, s, "kkt_residual", "s");
  detail::require_x_blocks(prob, v, "kkt_residual", "v");
  detail::require_x_blocks(prob, x, "kkt_residual", "x");

  double b1 = 0.0, b3 = 0.0, b4 = 0.0, ax_sq = 0.0;
  for (std::size_t i = 0; i < prob.agents.size(); ++i) {
    const AgentProblem& ag = prob.agents[i];
    const Eigen::VectorXd ax = ag.A * x[i];
    b1 += (prox_loss(ag.loss, z[i] + ax, 1.0) - ax).squaredNorm();
    ax_sq += ax.squaredNorm();
    b3 += (prox_regularizer(ag.reg, v[i] + x[i], 1.0) - x[i]).squaredNorm();
    b4 += (ag.A.transpose() * z[i] + s[i] + v[i]).squaredNorm();
  }
  const double ux = consensus_norm(prob.graph, x);

  ResidualReport rep;
  rep.R_vec_norms = {std::sqrt(b1), ux, std::sqrt(b3), std::sqrt(b4)};
  rep.consensus_err = ux;

  const double zn = stacked_norm(z), sn = stacked_norm(s);
  const double vn = stacked_norm(v), xn = stacked_norm(x);
  rep.eta_kkt = std::max(
      {rep.R_vec_norms[0] / (1.0 + zn + std::sqrt(ax_sq)),
       ux / (1.0 + xn), rep.R_vec_norms[2] / (1.0 + vn + xn),
       rep.R_vec_norms[3] / (1.0 + zn + sn + vn)});
  rep.eta_re = eta_re(prob, x);
  return rep;
}

inline double eta_kkt(const DistributedProblem& prob, const BlockVec& z,
                      const BlockVec& s, const BlockVec& v, const BlockVec& x) {
  return kkt_residual(prob, z, s, v, x).eta_kkt;
}

/// f*(z) + r*(v) minus a reference optimal value. Empty when some
/// conjugate has no implemented closed form; +inf when v falls outside
/// dom r*.
inline std::optional<double> dual_objective_error(const DistributedProblem& prob,
                                                  const BlockVec& z, const BlockVec& v,
                                                  double reference_optimum) {
  detail::require_z_blocks(prob, z, "dual_objective_error");
  detail::require_x_blocks(prob, v, "dual_objective_error", "v");
  double total = 0.0;
  bool infeasible = false;
  for (std::size_t i = 0; i < prob.agents.size(); ++i) {
    const auto fc = loss_conjugate(prob.agents[i].loss, z[i]);
    const auto rc = regularizer_conjugate(prob.agents[i].reg, v[i]);
    if (!fc || !rc) return std::nullopt;
    if (!std::isfinite(*rc)) {
      infeasible = true;
      continue;
    }
    total += *fc + *rc;
  }
  if (infeasible) return std::numeric_limits<double>::infinity();
  return total - reference_optimum;
}

/// A network point in (z, w, v, x) coordinates, w in place of s.
struct WPoint {
  BlockVec z, w, v, x;
};

/// ||(y, v, x)||²_M with y = (z, w), via the closed form
///   ||sqrt(σ) A_U y − x / sqrt(σ)||² + ||y||²_{S+Ŝ},
/// where A_U y = Aᵀz + U w and
///   ||y||²_{S+Ŝ} = σ [ Σ_i z_iᵀ(λ_A^i I − A_i A_iᵀ) z_i
///                      + (1/λ_U)(Aᵀz)ᵀ((I−W)⊗I)(Aᵀz)
///                      + λ_U ||w||² − wᵀ((I−W)⊗I) w ].
/// sqrt_iw must be the symmetric square root of I − W. The v block does
/// not enter the norm.
inline double mnorm_squared(const DistributedProblem& prob, double sigma,
                            double lambda_U, const Eigen::MatrixXd& sqrt_iw,
                            const BlockVec& z, const BlockVec& w, const BlockVec& x) {
  detail::require_z_blocks(prob, z, "mnorm_squared");
  detail::require_x_blocks(prob, w, "mnorm_squared", "w");
  detail::require_x_blocks(prob, x, "mnorm_squared", "x");
  if (!(sigma > 0.0) || !(lambda_U > 0.0))
    throw std::invalid_argument("mnorm_squared: sigma and lambda_U must be positive");
  const int n = prob.n_agents();
  if (sqrt_iw.rows() != n || sqrt_iw.cols() != n)
    throw std::invalid_argument("mnorm_squared: sqrt_iw has wrong shape");

  BlockVec atz(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const std::size_t ui = static_cast<std::size_t>(i);
    atz[ui] = prob.agents[ui].A.transpose() * z[ui];
  }
  const double rs = std::sqrt(sigma);
  double first = 0.0;
  for (int i = 0; i < n; ++i) {
    const std::size_t ui = static_cast<std::size_t>(i);
    Eigen::VectorXd uw = Eigen::VectorXd::Zero(prob.p);
    for (int j = 0; j < n; ++j)
      if (sqrt_iw(i, j) != 0.0) uw += sqrt_iw(i, j) * w[static_cast<std::size_t>(j)];
    first += (rs * (atz[ui] + uw) - x[ui] / rs).squaredNorm();
  }

  double quad = 0.0;
  for (int i = 0; i < n; ++i) {
    const std::size_t ui = static_cast<std::size_t>(i);
    quad += prob.agents[ui].lambda_A * z[ui].squaredNorm() - atz[ui].squaredNorm();
  }
  quad += consensus_quadratic(prob.graph, atz) / lambda_U;
  quad += lambda_U * stacked_squared_norm(w) - consensus_quadratic(prob.graph, w);
  return first + sigma * quad;
}

struct TheoremConstants {
  double R0 = 0.0;
  double A_U_norm = 0.0;
  double sqrtT_norm = 0.0;  // ||sqrt(S+Ŝ)||
  double x_star_norm = 0.0;
  double sigma = 1.0;

  /// Right-hand side of the residual bound for the bar iterate produced by
  /// the iterate-th completed iteration (iterate >= 1).
  double bound_kkt(long long iterate) const {
    if (iterate < 1) throw std::invalid_argument("bound_kkt: iterate must be >= 1");
    return ((sigma * A_U_norm + 1.0) / std::sqrt(sigma) + sqrtT_norm) * R0 /
           static_cast<double>(iterate);
  }
  double bound_dual_upper(long long iterate) const {
    if (iterate < 1)
      throw std::invalid_argument("bound_dual_upper: iterate must be >= 1");
    return (3.0 * R0 + x_star_norm / std::sqrt(sigma)) * R0 /
           static_cast<double>(iterate);
  }
  double bound_dual_lower(long long iterate) const {
    if (iterate < 1)
      throw std::invalid_argument("bound_dual_lower: iterate must be >= 1");
    return -(x_star_norm / std::sqrt(sigma)) * R0 / static_cast<double>(iterate);
  }
};

/// Dense Np x Np Gram of the stacked map x -> (Ax, Ux):
/// blkdiag(A_iᵀA_i) + (I-W) ⊗ I.
inline Eigen::MatrixXd assemble_gram_AU(const DistributedProblem& prob) {
  const int n = prob.n_agents();
  const int dim = n * prob.p;
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(dim, dim);
  const Eigen::MatrixXd iw =
      Eigen::MatrixXd::Identity(n, n) - prob.graph.weights;
  for (int i = 0; i < n; ++i) {
    const auto& a = prob.agents[static_cast<std::size_t>(i)].A;
    if (a.size() != 0)
      g.block(i * prob.p, i * prob.p, prob.p, prob.p) = a.transpose() * a;
    for (int j = 0; j < n; ++j)
      g.block(i * prob.p, j * prob.p, prob.p, prob.p).diagonal().array() +=
          iw(i, j);
  }
  return g;
}

/// Dense (m + Np) x (m + Np) assembly of S + Ŝ over y = (z, w):
///   zz block: σ blkdiag(λ_A^i I − A_iA_iᵀ) + (σ/λ_U)(I−W)_ij A_iA_jᵀ,
///   ww block: σ (λ_U I − (I−W) ⊗ I), zw blocks zero.
inline Eigen::MatrixXd assemble_T(const DistributedProblem& prob, double sigma,
                                  double lambda_U) {
  const int n = prob.n_agents();
  std::vector<int> z_off(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 0; i < n; ++i)
    z_off[static_cast<std::size_t>(i) + 1] =
        z_off[static_cast<std::size_t>(i)] + prob.agents[static_cast<std::size_t>(i)].m();
  const int m_total = z_off[static_cast<std::size_t>(n)];
  const int dim = m_total + n * prob.p;
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(dim, dim);
  const Eigen::MatrixXd iw =
      Eigen::MatrixXd::Identity(n, n) - prob.graph.weights;
  for (int i = 0; i < n; ++i) {
    const AgentProblem& agi = prob.agents[static_cast<std::size_t>(i)];
    if (agi.m() > 0) {
      Eigen::MatrixXd blk = -agi.A * agi.A.transpose();
      blk.diagonal().array() += agi.lambda_A;
      t.block(z_off[static_cast<std::size_t>(i)], z_off[static_cast<std::size_t>(i)],
              agi.m(), agi.m()) = sigma * blk;
    }
    for (int j = 0; j < n; ++j) {
      if (iw(i, j) == 0.0) continue;
      const AgentProblem& agj = prob.agents[static_cast<std::size_t>(j)];
      if (agi.m() > 0 && agj.m() > 0)
        t.block(z_off[static_cast<std::size_t>(i)], z_off[static_cast<std::size_t>(j)],
                agi.m(), agj.m()) +=
            (sigma / lambda_U) * iw(i, j) * (agi.A * agj.A.transpose());
      t.block(m_total + i * prob.p, m_total + j * prob.p, prob.p, prob.p)
          .diagonal()
          .array() -= sigma * iw(i, j);
    }
    t.block(m_total + i * prob.p, m_total + i * prob.p, prob.p, prob.p)
        .diagonal()
        .array() += sigma * lambda_U;
  }
  return t;
}

/// Constants of the O(1/k) complexity bound, evaluated in (z, w, v, x)
/// coordinates: R0 = ||u0 − u*||_M through the closed form, operator
/// norms by power iteration on dense assemblies. Desk scale only.
inline TheoremConstants theorem2_constants(const DistributedProblem& prob,
                                           double sigma, double lambda_U,
                                           const WPoint& u0, const WPoint& u_star) {
  for (const WPoint* pt : {&u0, &u_star}) {
    detail::require_z_blocks(prob, pt->z, "theorem2_constants");
    detail::require_x_blocks(prob, pt->w, "theorem2_constants", "w");
    detail::require_x_blocks(prob, pt->x, "theorem2_constants", "x");
  }
  int m_total = 0;
  for (const auto& ag : prob.agents) m_total += ag.m();
  const int np = prob.n_agents() * prob.p;
  if (m_total + np > 2000)
    throw std::invalid_argument(
        "theorem2_constants: problem too large for dense diagnostics");
  const int n = prob.n_agents();
  const Eigen::MatrixXd sqrt_iw = symmetric_sqrt(
      Eigen::MatrixXd::Identity(n, n) - prob.graph.weights);

  BlockVec dz(static_cast<std::size_t>(n)), dw(static_cast<std::size_t>(n)),
      dx(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
    dz[i] = u0.z[i] - u_star.z[i];
    dw[i] = u0.w[i] - u_star.w[i];
    dx[i] = u0.x[i] - u_star.x[i];
  }

  TheoremConstants c;
  c.sigma = sigma;
  c.R0 = std::sqrt(std::max(
      0.0, mnorm_squared(prob, sigma, lambda_U, sqrt_iw, dz, dw, dx)));
  const Eigen::MatrixXd gram = assemble_gram_AU(prob);
  c.A_U_norm = std::sqrt(power_lambda_max(
      gram.rows(), [&](const Eigen::VectorXd& v) { return gram * v; }));
  const Eigen::MatrixXd t = assemble_T(prob, sigma, lambda_U);
  c.sqrtT_norm = std::sqrt(power_lambda_max(
      t.rows(), [&](const Eigen::VectorXd& v) { return t * v; }));
  c.x_star_norm = stacked_norm(u_star.x);
  return c;
}

}  // namespace dhpr
