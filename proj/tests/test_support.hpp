#pragma once

#include "krnet/autodiff.hpp"
#include "krnet/krnet_model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>

namespace krnet::testing {

inline Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = n(rng);
  return m;
}

/// Perturbs every parameter so that no layer sits at its identity point.
inline void randomize(KRnetModel& model, std::uint64_t seed, double sd = 0.1) {
  model.initialize(seed);
  std::mt19937_64 rng(seed + 17);
  std::normal_distribution<double> n(0.0, sd);
  auto v = model.params().values();
  for (auto& x : v) x += n(rng);
}

/// Central-difference Jacobian of the value-only forward map at one point.
inline Matrix fd_jacobian(const KRnetModel& model, const Eigen::RowVectorXd& x, double h) {
  const auto d = x.size();
  Matrix jac(d, d);
  Vector ld;
  for (Eigen::Index k = 0; k < d; ++k) {
    Matrix xp = x, xm = x;
    xp(0, k) += h;
    xm(0, k) -= h;
    jac.col(k) = (model.forward_values(xp, ld) - model.forward_values(xm, ld)).row(0).transpose() / (2.0 * h);
  }
  return jac;
}

/// Central-difference check of an analytic parameter gradient. `loss`
/// evaluates the model at its current parameters; they are restored after.
inline double fd_parameter_check(KRnetModel& model, const std::function<double()>& loss,
                                 std::span<const double> analytic, double h = 1e-5) {
  auto theta = model.params().values();
  const std::vector<double> saved(theta.begin(), theta.end());
  auto f = [&](std::span<const double> x) {
    std::copy(x.begin(), x.end(), theta.begin());
    return loss();
  };
  const double err = ad::fd_check(f, saved, analytic, h);
  std::copy(saved.begin(), saved.end(), theta.begin());
  return err;
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-12); }

}  // namespace krnet::testing
