#pragma once

// w-coordinate form of the distributed HPR iteration. The consensus
// multiplier w lives in R^{Np} and couples agents through the square
// root of I - W, so this form is materialized only at desk scale; the
// per-agent solver tracks s = U^T w instead and never builds U.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <stdexcept>
#include <utility>
#include <vector>

#include "dhpr/eigensolve.hpp"
#include "dhpr/graph.hpp"
#include "dhpr/problem.hpp"
#include "dhpr/prox.hpp"

namespace dhpr {

struct WFormConfig {
  double sigma = 1.0;
  double lambda_U = 0.0;  // 0 means: derive exactly 1 - lambda_min(W)
  bool halpern_enabled = true;
};

namespace detail {

inline int total_m(const DistributedProblem& prob) {
  int m = 0;
  for (const auto& ag : prob.agents) m += ag.m();
  return m;
}

/// (coef ⊗ I_p) y for a stacked y of N blocks of size p.
inline Eigen::VectorXd apply_block_matrix(const Eigen::MatrixXd& coef,
                                          const Eigen::VectorXd& y, int p) {
  const Eigen::Index n = coef.rows();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n * p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (coef(i, j) != 0.0)
        out.segment(i * p, p) += coef(i, j) * y.segment(j * p, p);
  return out;
}

inline Eigen::VectorXd apply_A_stacked(const DistributedProblem& prob,
                                       const Eigen::VectorXd& x) {
  Eigen::VectorXd out(total_m(prob));
  int row = 0;
  for (int i = 0; i < prob.n_agents(); ++i) {
    const auto& ag = prob.agents[static_cast<std::size_t>(i)];
    if (ag.m() > 0)
      out.segment(row, ag.m()) = ag.A * x.segment(i * prob.p, prob.p);
    row += ag.m();
  }
  return out;
}

inline Eigen::VectorXd apply_AT_stacked(const DistributedProblem& prob,
                                        const Eigen::VectorXd& z) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(
      static_cast<Eigen::Index>(prob.n_agents()) * prob.p);
  int row = 0;
  for (int i = 0; i < prob.n_agents(); ++i) {
    const auto& ag = prob.agents[static_cast<std::size_t>(i)];
    if (ag.m() > 0)
      out.segment(i * prob.p, prob.p) =
          ag.A.transpose() * z.segment(row, ag.m());
    row += ag.m();
  }
  return out;
}

}  // namespace detail

/// sqrt(I - W) of the mixing matrix; blocks of size p act through
/// apply_block_matrix.
inline Eigen::MatrixXd consensus_sqrt_coef(const WeightedGraph& g) {
  const Eigen::MatrixXd iw =
      Eigen::MatrixXd::Identity(g.n_agents, g.n_agents) - g.weights;
  return symmetric_sqrt(iw);
}

/// One symmetric Gauss-Seidel sweep of the (z, w) block: a w half-step
/// holding z, the per-agent z proximal step, then the w correction.
/// Inputs may be arbitrary; nothing here assumes x_bar came from the
/// x-update.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> sgs_sweep(
    const DistributedProblem& prob, const Eigen::MatrixXd& sqrt_iw,
    const Eigen::VectorXd& z, const Eigen::VectorXd& w,
    const Eigen::VectorXd& v_bar, const Eigen::VectorXd& x_bar, double sigma,
    double lambda_U) {
  if (!(sigma > 0.0) || !(lambda_U > 0.0))
    throw std::invalid_argument("sgs_sweep: sigma and lambda_U must be positive");
  const int p = prob.p;
  const Eigen::VectorXd uw = detail::apply_block_matrix(sqrt_iw, w, p);
  const Eigen::VectorXd atz = detail::apply_AT_stacked(prob, z);

  const Eigen::VectorXd r1 = x_bar - sigma * (atz + uw + v_bar);
  const Eigen::VectorXd w_half =
      w + detail::apply_block_matrix(sqrt_iw, r1, p) / (sigma * lambda_U);

  const Eigen::VectorXd s_half =
      detail::apply_block_matrix(sqrt_iw, w_half, p);
  Eigen::VectorXd z_bar(z.size());
  int row = 0;
  for (int i = 0; i < prob.n_agents(); ++i) {
    const auto& ag = prob.agents[static_cast<std::size_t>(i)];
    if (ag.m() > 0) {
      const double t = sigma * ag.lambda_A;
      const Eigen::VectorXd xi =
          t * z.segment(row, ag.m()) +
          ag.A * (x_bar.segment(i * p, p) -
                  sigma * (ag.A.transpose() * z.segment(row, ag.m()) +
                           s_half.segment(i * p, p) + v_bar.segment(i * p, p)));
      z_bar.segment(row, ag.m()) = (xi - prox_loss(ag.loss, xi, t)) / t;
    }
    row += ag.m();
  }

  const Eigen::VectorXd r2 =
      x_bar - sigma * (detail::apply_AT_stacked(prob, z_bar) + uw + v_bar);
  const Eigen::VectorXd w_bar =
      w + detail::apply_block_matrix(sqrt_iw, r2, p) / (sigma * lambda_U);
  return {std::move(z_bar), w_bar};
}

/// The same (z, w) block solved jointly: assemble the normal equations of
/// the proximal subproblem and solve them densely. Least-squares losses
/// only, tiny instances only; the sweep above is the production path.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> sgs_joint_oracle(
    const DistributedProblem& prob, const Eigen::VectorXd& z,
    const Eigen::VectorXd& w, const Eigen::VectorXd& v_bar,
    const Eigen::VectorXd& x_bar, double sigma, double lambda_U) {
  if (!(sigma > 0.0) || !(lambda_U > 0.0))
    throw std::invalid_argument(
        "sgs_joint_oracle: sigma and lambda_U must be positive");
  const int n = prob.n_agents();
  const int p = prob.p;
  const int np = n * p;
  const int m = detail::total_m(prob);
  if (np + m > 300)
    throw std::invalid_argument("sgs_joint_oracle: instance too large");
  for (const auto& ag : prob.agents)
    if (ag.m() > 0 && ag.loss.kind != LossKind::kLeastSquares)
      throw std::invalid_argument(
          "sgs_joint_oracle: needs least-squares losses");

  Eigen::MatrixXd afull = Eigen::MatrixXd::Zero(m, np);
  Eigen::VectorXd b(m);
  int row = 0;
  for (int i = 0; i < n; ++i) {
    const auto& ag = prob.agents[static_cast<std::size_t>(i)];
    if (ag.m() > 0) {
      afull.block(row, i * p, ag.m(), p) = ag.A;
      b.segment(row, ag.m()) = ag.loss.b;
    }
    row += ag.m();
  }
  const Eigen::MatrixXd sqrt_iw = consensus_sqrt_coef(prob.graph);
  Eigen::MatrixXd ufull = Eigen::MatrixXd::Zero(np, np);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      ufull.block(i * p, j * p, p, p) =
          sqrt_iw(i, j) * Eigen::MatrixXd::Identity(p, p);
  const Eigen::MatrixXd usq = ufull * ufull;

  Eigen::MatrixXd t_zz = (sigma / lambda_U) * afull * usq * afull.transpose();
  row = 0;
  for (const auto& ag : prob.agents) {
    if (ag.m() > 0)
      t_zz.block(row, row, ag.m(), ag.m()) +=
          sigma * (ag.lambda_A * Eigen::MatrixXd::Identity(ag.m(), ag.m()) -
                   ag.A * ag.A.transpose());
    row += ag.m();
  }

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m + np, m + np);
  h.topLeftCorner(m, m) = Eigen::MatrixXd::Identity(m, m) +
                          sigma * afull * afull.transpose() + t_zz;
  h.topRightCorner(m, np) = sigma * afull * ufull;
  h.bottomLeftCorner(np, m) = h.topRightCorner(m, np).transpose();
  h.bottomRightCorner(np, np) =
      sigma * lambda_U * Eigen::MatrixXd::Identity(np, np);

  Eigen::VectorXd rhs(m + np);
  rhs.head(m) = afull * x_bar - b - sigma * (afull * v_bar) + t_zz * z;
  rhs.tail(np) =
      ufull * x_bar - sigma * (ufull * v_bar) +
      sigma * (lambda_U * w - usq * w);

  const Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("sgs_joint_oracle: singular system");
  const Eigen::VectorXd y = ldlt.solve(rhs);
  if ((h * y - rhs).norm() > 1e-9 * (1.0 + rhs.norm()))
    throw std::runtime_error("sgs_joint_oracle: singular system");
  return {y.head(m), y.tail(np)};
}

/// Stacked-variable solver in (z, w, v, x); no restarts. Used to compare
/// trajectories against the per-agent solver and to read off w iterates.
class WFormSolver {
 public:
  WFormSolver(const DistributedProblem& prob, WFormConfig cfg)
      : prob_(&prob), cfg_(cfg) {
    prob.validate();
    if (!(cfg_.sigma > 0.0))
      throw std::invalid_argument("wform: sigma must be positive");
    const double lu_min = 1.0 - min_eigenvalue(prob.graph.weights);
    if (cfg_.lambda_U == 0.0)
      cfg_.lambda_U = lu_min;
    else if (cfg_.lambda_U < lu_min * (1.0 - 1e-12))
      throw std::invalid_argument(
          "wform: lambda_U must be at least 1 - lambda_min(W)");
    sqrt_iw_ = consensus_sqrt_coef(prob.graph);
    const int np = prob.n_agents() * prob.p;
    const int m = detail::total_m(prob);
    z_ = z0_ = zb_ = Eigen::VectorXd::Zero(m);
    w_ = w0_ = wb_ = Eigen::VectorXd::Zero(np);
    v_ = v0_ = vb_ = Eigen::VectorXd::Zero(np);
    x_ = x0_ = xb_ = Eigen::VectorXd::Zero(np);
  }

  void step() {
    const double sig = cfg_.sigma;
    const double lu = cfg_.lambda_U;
    const int p = prob_->p;
    const Eigen::VectorXd s = detail::apply_block_matrix(sqrt_iw_, w_, p);
    const Eigen::VectorXd phi =
        x_ - sig * (detail::apply_AT_stacked(*prob_, z_) + s);
    for (int i = 0; i < prob_->n_agents(); ++i)
      xb_.segment(i * p, p) = prox_regularizer(
          prob_->agents[static_cast<std::size_t>(i)].reg,
          phi.segment(i * p, p), sig);
    vb_ = (phi - xb_) / sig;

    // The two w steps in their executed form: the half step absorbs the
    // x-update identity, the correction tracks the z move.
    const Eigen::VectorXd pay = 2.0 * xb_ - x_;
    const Eigen::VectorXd w_half =
        w_ + detail::apply_block_matrix(sqrt_iw_, pay, p) / (sig * lu);
    const Eigen::VectorXd s_half =
        detail::apply_block_matrix(sqrt_iw_, w_half, p);
    int row = 0;
    for (int i = 0; i < prob_->n_agents(); ++i) {
      const auto& ag = prob_->agents[static_cast<std::size_t>(i)];
      if (ag.m() > 0) {
        const double t = sig * ag.lambda_A;
        const Eigen::VectorXd xi =
            ag.A * (pay.segment(i * p, p) -
                    sig * (s_half.segment(i * p, p) - s.segment(i * p, p))) +
            t * z_.segment(row, ag.m());
        zb_.segment(row, ag.m()) = (xi - prox_loss(ag.loss, xi, t)) / t;
      }
      row += ag.m();
    }
    wb_ = w_half + detail::apply_block_matrix(
                       sqrt_iw_, detail::apply_AT_stacked(*prob_, z_ - zb_), p) /
                       lu;

    const double c0 = 1.0 / (static_cast<double>(iter_) + 2.0);
    const double c1 =
        (static_cast<double>(iter_) + 1.0) / (static_cast<double>(iter_) + 2.0);
    if (cfg_.halpern_enabled) {
      z_ = c0 * z0_ + c1 * (2.0 * zb_ - z_);
      w_ = c0 * w0_ + c1 * (2.0 * wb_ - w_);
      v_ = c0 * v0_ + c1 * (2.0 * vb_ - v_);
      x_ = c0 * x0_ + c1 * (2.0 * xb_ - x_);
    } else {
      z_ = zb_;
      w_ = wb_;
      v_ = vb_;
      x_ = xb_;
    }
    ++iter_;
  }

  void set_state(const Eigen::VectorXd& z, const Eigen::VectorXd& w,
                 const Eigen::VectorXd& v, const Eigen::VectorXd& x) {
    if (z.size() != z_.size() || w.size() != w_.size() ||
        v.size() != v_.size() || x.size() != x_.size())
      throw std::invalid_argument("wform set_state: size mismatch");
    z_ = z0_ = zb_ = z;
    w_ = w0_ = wb_ = w;
    v_ = v0_ = vb_ = v;
    x_ = x0_ = xb_ = x;
    iter_ = 0;
  }

  long long iter() const { return iter_; }
  double sigma() const { return cfg_.sigma; }
  double lambda_U() const { return cfg_.lambda_U; }
  const Eigen::MatrixXd& sqrt_iw() const { return sqrt_iw_; }
  const Eigen::VectorXd& z() const { return z_; }
  const Eigen::VectorXd& w() const { return w_; }
  const Eigen::VectorXd& v() const { return v_; }
  const Eigen::VectorXd& x() const { return x_; }
  const Eigen::VectorXd& z_bar() const { return zb_; }
  const Eigen::VectorXd& w_bar() const { return wb_; }
  const Eigen::VectorXd& v_bar() const { return vb_; }
  const Eigen::VectorXd& x_bar() const { return xb_; }
  Eigen::VectorXd s() const {
    return detail::apply_block_matrix(sqrt_iw_, w_, prob_->p);
  }
  Eigen::VectorXd s_bar() const {
    return detail::apply_block_matrix(sqrt_iw_, wb_, prob_->p);
  }

 private:
  const DistributedProblem* prob_;
  WFormConfig cfg_;
  Eigen::MatrixXd sqrt_iw_;
  long long iter_ = 0;
  Eigen::VectorXd z_, w_, v_, x_;
  Eigen::VectorXd z0_, w0_, v0_, x0_;
  Eigen::VectorXd zb_, wb_, vb_, xb_;
};

}  // namespace dhpr
