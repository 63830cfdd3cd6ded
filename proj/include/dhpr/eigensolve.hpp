#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>

#include "dhpr/rng.hpp"

namespace dhpr {

struct EigenSystem {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // column i pairs with values[i]
};

inline void require_symmetric(const Eigen::MatrixXd& a, double tol = 1e-12) {
  if (a.rows() != a.cols())
    throw std::invalid_argument("matrix is not square");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > tol * scale)
    throw std::invalid_argument("matrix is not symmetric");
}

// Cyclic Jacobi rotations for dense symmetric matrices. Deterministic,
// accurate to machine precision, adequate for the few-hundred-row
// matrices this project works with.
inline EigenSystem jacobi_eigensystem(Eigen::MatrixXd a) {
  require_symmetric(a);
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd q = Eigen::MatrixXd::Identity(n, n);

  auto off_norm = [&]() {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
    return std::sqrt(2.0 * s);
  };

  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  const double tol = 1e-15 * scale * static_cast<double>(n);
  for (int sweep = 0; sweep < 64 && off_norm() > tol; ++sweep) {
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index r = p + 1; r < n; ++r) {
        const double apr = a(p, r);
        if (std::abs(apr) <= 1e-300) continue;
        const double theta = (a(r, r) - a(p, p)) / (2.0 * apr);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akr = a(k, r);
          a(k, p) = c * akp - s * akr;
          a(k, r) = s * akp + c * akr;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), ark = a(r, k);
          a(p, k) = c * apk - s * ark;
          a(r, k) = s * apk + c * ark;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double qkp = q(k, p), qkr = q(k, r);
          q(k, p) = c * qkp - s * qkr;
          q(k, r) = s * qkp + c * qkr;
        }
      }
    }
  }

  EigenSystem sys;
  sys.values = a.diagonal();
  sys.vectors = q;
  // Sort ascending, carrying eigenvectors along.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
    return sys.values[i] < sys.values[j];
  });
  Eigen::VectorXd vals(n);
  Eigen::MatrixXd vecs(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    vals[i] = sys.values[order[static_cast<std::size_t>(i)]];
    vecs.col(i) = sys.vectors.col(order[static_cast<std::size_t>(i)]);
  }
  sys.values = std::move(vals);
  sys.vectors = std::move(vecs);
  return sys;
}

/// Largest eigenvalue of a symmetric positive semidefinite operator given
/// as a matvec, by power iteration, inflated by a 1e-6 relative margin so
/// callers can rely on the result as an upper bound.
inline double power_lambda_max(
    Eigen::Index dim,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply,
    std::uint64_t seed = 0x707) {
  if (dim <= 0) throw std::invalid_argument("power_lambda_max: empty operator");
  CounterRng rng(seed);
  Eigen::VectorXd v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = rng.normal();
  v.normalize();
  double lam = 0.0;
  int reseeds = 0;
  for (int it = 0; it < 5000; ++it) {
    const Eigen::VectorXd w = apply(v);
    if (w.size() != dim)
      throw std::invalid_argument("power_lambda_max: operator changed dimension");
    const double lam_new = v.dot(w);
    const double wn = w.norm();
    if (wn == 0.0) {  // started in the null space; re-seed
      if (++reseeds > 8)
        throw std::invalid_argument("power_lambda_max: zero operator");
      for (Eigen::Index i = 0; i < dim; ++i) v[i] = rng.normal();
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

/// Principal square root of a symmetric positive semidefinite matrix.
/// Eigenvalues below zero (rounding noise) are clamped to zero.
inline Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& a) {
  const EigenSystem sys = jacobi_eigensystem(a);
  Eigen::VectorXd root = sys.values;
  for (Eigen::Index i = 0; i < root.size(); ++i)
    root[i] = std::sqrt(std::max(0.0, root[i]));
  Eigen::MatrixXd out =
      sys.vectors * root.asDiagonal() * sys.vectors.transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace dhpr
