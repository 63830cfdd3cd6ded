#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dhpr {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow.
inline double log1pexp(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// --- regularizers -----------------------------------------------------

enum class RegularizerKind { kL1, kSparseGroup };

inline std::string to_string(RegularizerKind k) {
  return k == RegularizerKind::kL1 ? "l1" : "sparse_group";
}

inline RegularizerKind regularizer_kind_from_string(const std::string& s) {
  if (s == "l1") return RegularizerKind::kL1;
  if (s == "sparse_group") return RegularizerKind::kSparseGroup;
  throw std::invalid_argument("unknown regularizer kind: " + s);
}

/// r(x) = theta1 ||x||_1                              (kL1)
///      = theta1 ||x||_1 + theta2 sum_l w_l ||x_Gl||  (kSparseGroup)
/// Groups must partition the coordinates; w_l defaults to sqrt(|Gl|).
/// The zero regularizer is l1 with theta1 = 0.
struct RegularizerSpec {
  RegularizerKind kind = RegularizerKind::kL1;
  double theta1 = 0.0;
  double theta2 = 0.0;
  std::vector<std::vector<int>> groups;
  std::vector<double> group_weights;

  static RegularizerSpec l1(double theta) {
    RegularizerSpec r;
    r.kind = RegularizerKind::kL1;
    r.theta1 = theta;
    return r;
  }

  static RegularizerSpec sparse_group(double theta1, double theta2,
                                      std::vector<std::vector<int>> groups) {
    RegularizerSpec r;
    r.kind = RegularizerKind::kSparseGroup;
    r.theta1 = theta1;
    r.theta2 = theta2;
    r.group_weights.reserve(groups.size());
    for (const auto& g : groups)
      r.group_weights.push_back(std::sqrt(static_cast<double>(g.size())));
    r.groups = std::move(groups);
    return r;
  }

  void validate(int p) const {
    if (theta1 < 0.0 || theta2 < 0.0)
      throw std::invalid_argument("regularizer weights must be nonnegative");
    if (kind != RegularizerKind::kSparseGroup) return;
    std::vector<char> seen(static_cast<std::size_t>(p), 0);
    for (const auto& g : groups)
      for (int i : g) {
        if (i < 0 || i >= p || seen[static_cast<std::size_t>(i)])
          throw std::invalid_argument("regularizer groups must partition coordinates");
        seen[static_cast<std::size_t>(i)] = 1;
      }
    for (char c : seen)
      if (!c) throw std::invalid_argument("regularizer groups must cover all coordinates");
    if (group_weights.size() != groups.size())
      throw std::invalid_argument("one weight per group required");
    for (double w : group_weights)
      if (!(w > 0.0)) throw std::invalid_argument("group weights must be positive");
  }
};

inline Eigen::VectorXd soft_threshold(const Eigen::VectorXd& xi, double t) {
  return xi.array().sign() * (xi.array().abs() - t).max(0.0);
}

inline Eigen::VectorXd prox_l1(const Eigen::VectorXd& xi, double t, double theta) {
  return soft_threshold(xi, t * theta);
}

/// Two-stage prox for r = theta1||.||_1 + theta2 sum_l w_l ||._Gl||:
/// soft threshold, then group-wise shrinkage. The composition is exact
/// for this pair of norms.
inline Eigen::VectorXd prox_sparse_group(const Eigen::VectorXd& xi, double t,
                                         const RegularizerSpec& spec) {
  Eigen::VectorXd y = soft_threshold(xi, t * spec.theta1);
  for (std::size_t l = 0; l < spec.groups.size(); ++l) {
    double nrm = 0.0;
    for (int i : spec.groups[l]) nrm += y[i] * y[i];
    nrm = std::sqrt(nrm);
    const double cut = t * spec.theta2 * spec.group_weights[l];
    const double scale = nrm > cut ? 1.0 - cut / nrm : 0.0;
    for (int i : spec.groups[l]) y[i] *= scale;
  }
  return y;
}

inline Eigen::VectorXd prox_regularizer(const RegularizerSpec& spec,
                                        const Eigen::VectorXd& xi, double t) {
  if (spec.kind == RegularizerKind::kL1) return prox_l1(xi, t, spec.theta1);
  return prox_sparse_group(xi, t, spec);
}

inline double regularizer_value(const RegularizerSpec& spec, const Eigen::VectorXd& x) {
  double v = spec.theta1 * x.lpNorm<1>();
  if (spec.kind == RegularizerKind::kSparseGroup) {
    for (std::size_t l = 0; l < spec.groups.size(); ++l) {
      double nrm = 0.0;
      for (int i : spec.groups[l]) nrm += x[i] * x[i];
      v += spec.theta2 * spec.group_weights[l] * std::sqrt(nrm);
    }
  }
  return v;
}

// --- losses -----------------------------------------------------------

enum class LossKind { kLeastSquares, kLogistic, kZero };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::kLeastSquares: return "least_squares";
    case LossKind::kLogistic: return "logistic";
    case LossKind::kZero: return "zero";
  }
  return "?";
}

inline LossKind loss_kind_from_string(const std::string& s) {
  if (s == "least_squares") return LossKind::kLeastSquares;
  if (s == "logistic") return LossKind::kLogistic;
  if (s == "zero") return LossKind::kZero;
  throw std::invalid_argument("unknown loss kind: " + s);
}

/// f(y) = 1/2 ||y - b||^2                (kLeastSquares)
///      = sum_j log(1 + exp(-b_j y_j))   (kLogistic, b_j in {-1,+1})
///      = 0 on R^0                       (kZero, empty y)
/// The loss acts on the local residual vector y = A_i x.
struct LossSpec {
  LossKind kind = LossKind::kLeastSquares;
  Eigen::VectorXd b;

  void validate(int m) const {
    if (kind == LossKind::kZero) {
      if (m != 0) throw std::invalid_argument("zero loss requires an empty data block");
      return;
    }
    if (b.size() != m) throw std::invalid_argument("loss label/offset size mismatch");
    if (kind == LossKind::kLogistic)
      for (int j = 0; j < m; ++j)
        if (b[j] != 1.0 && b[j] != -1.0)
          throw std::invalid_argument("logistic labels must be +1/-1");
  }
};

inline Eigen::VectorXd prox_least_squares(const Eigen::VectorXd& xi, double t,
                                          const Eigen::VectorXd& b) {
  if (xi.size() != b.size())
    throw std::invalid_argument("prox_least_squares: dimension mismatch");
  return (xi + t * b) / (1.0 + t);
}

/// Componentwise prox of log(1 + exp(-b y)): solves
/// y = xi + t b sigmoid(-b y) by Newton on the bracket [xi - t, xi + t],
/// falling back to bisection whenever a step fails to halve the residual
/// (on the flat sigmoid tails Newton alone ping-pongs across the root).
/// Reaches 1e-12 or the rounding floor of t * eps.
inline double prox_logistic_scalar(double xi, double t, double b) {
  double lo = xi - t, hi = xi + t;
  double y = xi + t * b * sigmoid(-b * xi);  // one fixed-point step
  double g = y - xi - t * b * sigmoid(-b * y);
  for (int it = 0; it < 200; ++it) {
    if (std::abs(g) <= 1e-12) break;
    if (g > 0.0) hi = y; else lo = y;
    const double s = sigmoid(-b * y);
    const double dg = 1.0 + t * s * (1.0 - s);  // b^2 = 1
    double next = y - g / dg;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    double gn = next - xi - t * b * sigmoid(-b * next);
    if (std::abs(gn) > 0.5 * std::abs(g)) {
      const double mid = 0.5 * (lo + hi);
      if (mid != next) {
        next = mid;
        gn = next - xi - t * b * sigmoid(-b * next);
      }
    }
    if (next == y) break;  // bracket exhausted at double precision
    y = next;
    g = gn;
  }
  return y;
}

inline Eigen::VectorXd prox_logistic(const Eigen::VectorXd& xi, double t,
                                     const Eigen::VectorXd& b) {
  if (xi.size() != b.size())
    throw std::invalid_argument("prox_logistic: dimension mismatch");
  Eigen::VectorXd y(xi.size());
  for (Eigen::Index j = 0; j < xi.size(); ++j) {
    if (b[j] != 1.0 && b[j] != -1.0)
      throw std::invalid_argument("prox_logistic: labels must be +1/-1");
    y[j] = prox_logistic_scalar(xi[j], t, b[j]);
  }
  return y;
}

inline Eigen::VectorXd prox_loss(const LossSpec& spec, const Eigen::VectorXd& xi,
                                 double t) {
  switch (spec.kind) {
    case LossKind::kLeastSquares: return prox_least_squares(xi, t, spec.b);
    case LossKind::kLogistic: return prox_logistic(xi, t, spec.b);
    case LossKind::kZero: return xi;  // empty
  }
  return xi;
}

inline double loss_value(const LossSpec& spec, const Eigen::VectorXd& y) {
  switch (spec.kind) {
    case LossKind::kLeastSquares:
      return 0.5 * (y - spec.b).squaredNorm();
    case LossKind::kLogistic: {
      double v = 0.0;
      for (Eigen::Index j = 0; j < y.size(); ++j) v += log1pexp(-spec.b[j] * y[j]);
      return v;
    }
    case LossKind::kZero:
      return 0.0;
  }
  return 0.0;
}

inline Eigen::VectorXd loss_gradient(const LossSpec& spec, const Eigen::VectorXd& y) {
  switch (spec.kind) {
    case LossKind::kLeastSquares:
      return y - spec.b;
    case LossKind::kLogistic: {
      Eigen::VectorXd g(y.size());
      for (Eigen::Index j = 0; j < y.size(); ++j)
        g[j] = -spec.b[j] * sigmoid(-spec.b[j] * y[j]);
      return g;
    }
    case LossKind::kZero:
      return Eigen::VectorXd::Zero(0);
  }
  return Eigen::VectorXd::Zero(y.size());
}

// --- conjugate values -------------------------------------------------
// Implemented where the expression is exact: least squares and l1 (plus
// the vacuous zero loss). Anything else reports "unavailable" and the
// dual objective diagnostic stays blank.

inline std::optional<double> loss_conjugate(const LossSpec& spec,
                                            const Eigen::VectorXd& z) {
  switch (spec.kind) {
    case LossKind::kLeastSquares:
      return 0.5 * z.squaredNorm() + z.dot(spec.b);
    case LossKind::kZero:
      return 0.0;
    case LossKind::kLogistic:
      return std::nullopt;
  }
  return std::nullopt;
}

/// r*(v) for l1: 0 if ||v||_inf <= theta1 (1 + feas_tol), +inf outside.
inline std::optional<double> regularizer_conjugate(const RegularizerSpec& spec,
                                                   const Eigen::VectorXd& v,
                                                   double feas_tol = 1e-9) {
  if (spec.kind != RegularizerKind::kL1) return std::nullopt;
  if (v.size() == 0 || v.lpNorm<Eigen::Infinity>() <= spec.theta1 * (1.0 + feas_tol))
    return 0.0;
  return std::numeric_limits<double>::infinity();
}

// --- json -------------------------------------------------------------

inline nlohmann::json regularizer_to_json(const RegularizerSpec& r) {
  nlohmann::json j;
  j["kind"] = to_string(r.kind);
  j["theta1"] = r.theta1;
  j["theta2"] = r.theta2;
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : r.groups) {
    nlohmann::json grp = nlohmann::json::array();
    for (int i : g) grp.push_back(i + 1);  // 1-based on disk
    groups.push_back(std::move(grp));
  }
  j["groups"] = std::move(groups);
  j["group_weights"] = r.group_weights;
  return j;
}

inline RegularizerSpec regularizer_from_json(const nlohmann::json& j) {
  RegularizerSpec r;
  r.kind = regularizer_kind_from_string(j.at("kind").get<std::string>());
  r.theta1 = j.at("theta1").get<double>();
  r.theta2 = j.at("theta2").get<double>();
  for (const auto& grp : j.at("groups")) {
    std::vector<int> g;
    for (const auto& i : grp) g.push_back(i.get<int>() - 1);
    r.groups.push_back(std::move(g));
  }
  r.group_weights = j.at("group_weights").get<std::vector<double>>();
  return r;
}

}  // namespace dhpr
