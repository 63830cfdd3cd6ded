#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dhpr/graph.hpp"
#include "dhpr/prox.hpp"
#include "dhpr/rng.hpp"

namespace dhpr {

/// Largest eigenvalue of A Aᵀ by power iteration on the smaller Gram
/// operator, inflated by a 1e-6 relative margin so callers can rely on
/// lambda >= lambda_max despite iteration error.
inline double lambda_max_AAT(const Eigen::MatrixXd& a) {
  if (a.size() == 0 || a.cwiseAbs().maxCoeff() == 0.0)
    throw std::invalid_argument("lambda_max_AAT: degenerate (zero) matrix");
  const bool use_ata = a.cols() <= a.rows();
  const Eigen::Index n = use_ata ? a.cols() : a.rows();
  CounterRng rng(0x707);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
  v.normalize();
  double lam = 0.0;
  for (int it = 0; it < 5000; ++it) {
    const Eigen::VectorXd w =
        use_ata ? Eigen::VectorXd(a.transpose() * (a * v))
                : Eigen::VectorXd(a * (a.transpose() * v));
    const double lam_new = v.dot(w);
    const double wn = w.norm();
    if (wn == 0.0) {  // started in the null space; re-seed
      for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
      v.normalize();
      continue;
    }
    v = w / wn;
    if (std::abs(lam_new - lam) <= 1e-10 * std::max(std::abs(lam_new), 1e-300)) {
      lam = lam_new;
      break;
    }
    lam = lam_new;
  }
  return lam * (1.0 + 1e-6);
}

/// One agent's slice of the problem: local data A (m_i x p), loss on
/// y = A x, regularizer on x, and lambda_A >= lambda_max(A Aᵀ).
struct AgentProblem {
  Eigen::MatrixXd A;
  LossSpec loss;
  RegularizerSpec reg;
  double lambda_A = 1.0;

  int m() const { return static_cast<int>(A.rows()); }
  int p() const { return static_cast<int>(A.cols()); }

  void validate() const {
    loss.validate(m());
    reg.validate(p());
    if (!(lambda_A > 0.0))
      throw std::invalid_argument("lambda_A must be positive");
  }
};

inline AgentProblem make_agent(Eigen::MatrixXd A, LossSpec loss, RegularizerSpec reg) {
  AgentProblem ag;
  ag.lambda_A = A.size() == 0 || A.cwiseAbs().maxCoeff() == 0.0
                    ? 1.0
                    : lambda_max_AAT(A);
  ag.A = std::move(A);
  ag.loss = std::move(loss);
  ag.reg = std::move(reg);
  ag.validate();
  return ag;
}

struct DistributedProblem {
  std::vector<AgentProblem> agents;
  WeightedGraph graph;
  int p = 0;

  int n_agents() const { return static_cast<int>(agents.size()); }

  void validate() const {
    if (graph.n_agents != n_agents())
      throw std::invalid_argument("graph size does not match agent count");
    for (const auto& ag : agents) {
      if (ag.p() != p) throw std::invalid_argument("agents disagree on dimension p");
      ag.validate();
    }
  }
};

/// theta_i = 0.01 ||A_iᵀ b_i||_inf
inline double default_theta(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  return 0.01 * (a.transpose() * b).lpNorm<Eigen::Infinity>();
}

/// Contiguous random partition of {0..p-1} into g blocks: g-1 cut points
/// drawn uniformly without replacement from {1..p-1}.
inline std::vector<std::vector<int>> random_groups(int p, int g, CounterRng& rng) {
  if (g < 1 || g > p) throw std::invalid_argument("random_groups: need 1 <= g <= p");
  auto picks = rng.partial_shuffle(static_cast<std::size_t>(p - 1),
                                   static_cast<std::size_t>(g - 1));
  std::vector<int> cuts;
  cuts.reserve(static_cast<std::size_t>(g) + 1);
  cuts.push_back(0);
  for (std::size_t v : picks) cuts.push_back(static_cast<int>(v) + 1);
  cuts.push_back(p);
  std::sort(cuts.begin(), cuts.end());
  std::vector<std::vector<int>> groups;
  for (int l = 0; l < g; ++l) {
    std::vector<int> blk;
    for (int i = cuts[static_cast<std::size_t>(l)]; i < cuts[static_cast<std::size_t>(l) + 1]; ++i)
      blk.push_back(i);
    groups.push_back(std::move(blk));
  }
  return groups;
}

/// Synthetic regression: entries of A_i and noise e_i i.i.d. standard
/// normal, b_i = A_i 1_p + delta e_i, theta_i = 0.01||A_iᵀ b_i||_inf.
/// Group lasso uses one shared contiguous random partition into
/// g = max(1, round(p/10)) groups with theta1 = theta2 = theta_i.
inline DistributedProblem gen_regression(int n_agents, int m_i, int p, double delta,
                                         RegularizerKind reg_kind,
                                         WeightedGraph graph, std::uint64_t seed) {
  if (delta < 0.0) throw std::invalid_argument("gen_regression: delta must be >= 0");
  CounterRng rng(seed);
  std::vector<std::vector<int>> groups;
  if (reg_kind == RegularizerKind::kSparseGroup) {
    const int g = std::max(1, static_cast<int>(std::llround(p / 10.0)));
    groups = random_groups(p, g, rng);
  }
  DistributedProblem prob;
  prob.p = p;
  prob.graph = std::move(graph);
  const Eigen::VectorXd x_true = Eigen::VectorXd::Ones(p);
  for (int i = 0; i < n_agents; ++i) {
    Eigen::MatrixXd a(m_i, p);
    for (int r = 0; r < m_i; ++r)
      for (int c = 0; c < p; ++c) a(r, c) = rng.normal();
    Eigen::VectorXd e(m_i);
    for (int r = 0; r < m_i; ++r) e[r] = rng.normal();
    const Eigen::VectorXd b = a * x_true + delta * e;
    const double theta = default_theta(a, b);
    RegularizerSpec reg =
        reg_kind == RegularizerKind::kSparseGroup
            ? RegularizerSpec::sparse_group(theta, theta, groups)
            : RegularizerSpec::l1(theta);
    LossSpec loss;
    loss.kind = LossKind::kLeastSquares;
    loss.b = b;
    prob.agents.push_back(make_agent(std::move(a), std::move(loss), std::move(reg)));
  }
  prob.validate();
  return prob;
}

/// Synthetic binary classification: per agent, ceil(m/2) samples labeled
/// +1 with features ~ N(0.1, 1) and the rest labeled -1 with features
/// ~ N(-0.1, 1); theta_i = 0.01||A_iᵀ b_i||_inf, l1 regularizer.
inline DistributedProblem gen_logistic(int n_agents, int m_i, int p,
                                       WeightedGraph graph, std::uint64_t seed) {
  CounterRng rng(seed);
  DistributedProblem prob;
  prob.p = p;
  prob.graph = std::move(graph);
  for (int i = 0; i < n_agents; ++i) {
    Eigen::MatrixXd a(m_i, p);
    Eigen::VectorXd b(m_i);
    const int pos = (m_i + 1) / 2;
    for (int r = 0; r < m_i; ++r) {
      const double mu = r < pos ? 0.1 : -0.1;
      b[r] = r < pos ? 1.0 : -1.0;
      for (int c = 0; c < p; ++c) a(r, c) = mu + rng.normal();
    }
    const double theta = default_theta(a, b);
    LossSpec loss;
    loss.kind = LossKind::kLogistic;
    loss.b = b;
    prob.agents.push_back(
        make_agent(std::move(a), std::move(loss), RegularizerSpec::l1(theta)));
  }
  prob.validate();
  return prob;
}

// --- dataset partitioning ----------------------------------------------

struct Dataset {
  Eigen::MatrixXd features;
  Eigen::VectorXd labels;

  int size() const { return static_cast<int>(features.rows()); }
};

/// Random even split: a seeded permutation dealt into N parts whose sizes
/// differ by at most one (earlier parts take the remainder).
inline std::vector<Dataset> partition(const Dataset& data, int n_agents,
                                      std::uint64_t seed) {
  const int n = data.size();
  if (n < n_agents)
    throw std::invalid_argument("partition: fewer samples than agents");
  CounterRng rng(seed);
  const auto perm = rng.partial_shuffle(static_cast<std::size_t>(n),
                                        static_cast<std::size_t>(n));
  std::vector<Dataset> parts;
  parts.reserve(static_cast<std::size_t>(n_agents));
  int offset = 0;
  for (int i = 0; i < n_agents; ++i) {
    const int sz = n / n_agents + (i < n % n_agents ? 1 : 0);
    Dataset part;
    part.features.resize(sz, data.features.cols());
    part.labels.resize(sz);
    for (int r = 0; r < sz; ++r) {
      const auto src = static_cast<Eigen::Index>(perm[static_cast<std::size_t>(offset + r)]);
      part.features.row(r) = data.features.row(src);
      part.labels[r] = data.labels[src];
    }
    offset += sz;
    parts.push_back(std::move(part));
  }
  return parts;
}

/// Optional preprocessing for ingested datasets: scale each feature column
/// by its max absolute value into [-1, 1] (all-zero columns untouched).
inline void scale_columns_to_unit(Dataset& data) {
  for (Eigen::Index c = 0; c < data.features.cols(); ++c) {
    const double m = data.features.col(c).cwiseAbs().maxCoeff();
    if (m > 0.0) data.features.col(c) /= m;
  }
}

/// Distributed l1-regularized problem from an ingested dataset.
inline DistributedProblem problem_from_dataset(const Dataset& data, LossKind loss_kind,
                                               int n_agents, WeightedGraph graph,
                                               std::uint64_t seed) {
  const auto parts = partition(data, n_agents, seed);
  DistributedProblem prob;
  prob.p = static_cast<int>(data.features.cols());
  prob.graph = std::move(graph);
  for (const auto& part : parts) {
    LossSpec loss;
    loss.kind = loss_kind;
    loss.b = part.labels;
    const double theta = default_theta(part.features, part.labels);
    prob.agents.push_back(
        make_agent(part.features, std::move(loss), RegularizerSpec::l1(theta)));
  }
  prob.validate();
  return prob;
}

}  // namespace dhpr
