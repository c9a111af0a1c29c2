#include "krnet/errors.hpp"
#include "krnet/problems.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace krnet;

namespace {

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

/// Hessian and gradient of p = exp(log p) from the dual log-density, by
/// polarization of directional second derivatives.
void dense_derivatives(const ad::DualFunction& logp, std::span<const double> x, double& p, Vector& grad, Matrix& hess) {
  const int d = static_cast<int>(x.size());
  grad.resize(d);
  hess.resize(d, d);
  Matrix lh(d, d);
  Vector lg(d);
  double l = 0.0;
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      const auto r = ad::spatial_derivs(logp, x, i, j);
      l = r.value;
      lh(i, j) = lh(j, i) = r.second;
      if (i == j) lg(i) = r.first;
    }
  }
  p = std::exp(l);
  grad = p * lg;
  hess = p * (lh + lg * lg.transpose());
}

}  // namespace

TEST_SUITE("problems") {

TEST_CASE("Lyapunov solve on the tabulated OU system") {
  const Matrix a = mat2(1.37096037, -0.48306187, -0.48306187, 1.62903963);
  const Matrix d = mat2(22.52429192, -6.55821381, -6.55821381, 12.68972);
  const Matrix s = lyapunov_solve(a, d);
  CHECK((a * s + s * a.transpose() - 2.0 * d).norm() <= 1e-8);
  CHECK((s - s.transpose()).norm() == 0.0);
  // The tabulated covariance solves A S + S A^T = D, i.e. half of ours.
  const Matrix tabulated = mat2(8.12186142, -0.26372569, -0.26372569, 3.81664391);
  CHECK((a * tabulated + tabulated * a.transpose() - d).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK((0.5 * s - tabulated).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("Lyapunov solve on identity and random stable systems") {
  CHECK((lyapunov_solve(Matrix::Identity(2, 2), Matrix::Identity(2, 2)) - Matrix::Identity(2, 2)).norm() < 1e-14);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix b = testing::random_matrix(3, 3, rng);
    const Matrix a = b * b.transpose() + 0.5 * Matrix::Identity(3, 3) + 0.3 * testing::random_matrix(3, 3, rng);
    Matrix g = testing::random_matrix(3, 3, rng);
    const Matrix d = g * g.transpose() + 0.1 * Matrix::Identity(3, 3);
    const Matrix s = lyapunov_solve(a, d);
    CHECK((a * s + s * a.transpose() - 2.0 * d).norm() <= 1e-10 * (1.0 + d.norm()));
  }
}

TEST_CASE("Lyapunov solve detects resonant spectra") {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 1.0;
  a(1, 1) = -1.0;
  CHECK_THROWS_AS(lyapunov_solve(a, Matrix::Identity(2, 2)), SingularError);
}

TEST_CASE("closed-form log densities") {
  CHECK(one_d_exact(0.0) == doctest::Approx(std::log(1.0 / std::sqrt(std::numbers::pi))));
  const auto& e = catalog_entry("ou1d");
  std::vector<ad::DualScalar> x{ad::DualScalar{0.7}};
  CHECK(e.problem.exact_log_pdf(x).value == doctest::Approx(one_d_exact(0.7)).epsilon(1e-14));
  const Gaussian g(Vector::Zero(3), 2.0 * Matrix::Identity(3, 3));
  const std::vector<double> zero(3, 0.0);
  CHECK(g.log_pdf(zero) == doctest::Approx(-1.5 * std::log(2 * std::numbers::pi) - 0.5 * std::log(8.0)));
}

TEST_CASE("2D mixture integrates to one on a tensor grid") {
  const auto& p = catalog_entry("mix2d").problem;
  const double lo = -16, hi = 16;
  const int n = 801;
  const double h = (hi - lo) / (n - 1);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      std::vector<ad::DualScalar> x{ad::DualScalar{lo + i * h}, ad::DualScalar{lo + j * h}};
      const double w = (i == 0 || i == n - 1 ? 0.5 : 1.0) * (j == 0 || j == n - 1 ? 0.5 : 1.0);
      total += w * std::exp(p.exact_log_pdf(x).value);
    }
  }
  CHECK(total * h * h == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("mixture drift is the Gaussian score for one component and vanishes at a symmetric midpoint") {
  Matrix cov = mat2(2.0, 0.3, 0.3, 1.0);
  Vector mean(2);
  mean << 0.5, -1.0;
  GaussianMixture one;
  one.weights = {1.0};
  one.components.emplace_back(mean, cov);
  const std::vector<double> x{1.2, 0.4};
  const auto s = one.score(x);
  const Vector expected = -cov.inverse() * (Eigen::Map<const Vector>(x.data(), 2) - mean);
  CHECK((s.mu - expected).norm() < 1e-12);
  CHECK(s.divergence == doctest::Approx(-cov.inverse().trace()));

  GaussianMixture sym;
  sym.weights = {0.5, 0.5};
  sym.components.emplace_back(Vector::Constant(2, 1.0), cov);
  sym.components.emplace_back(Vector::Constant(2, -1.0), cov);
  const std::vector<double> mid{0.0, 0.0};
  CHECK(sym.score(mid).mu.norm() < 1e-14);
}

TEST_CASE("analytic solutions annihilate the residual operator") {
  for (const auto& [name, entry] : problem_catalog()) {
    CAPTURE(name);
    const ResidualOperator op(entry.problem, 100.0);
    std::mt19937_64 rng(8);
    TrainConfig box;
    box.box = {{-4.0, 4.0}};
    const Matrix x = uniform_points(200, box, entry.problem.dim, rng);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const std::vector<double> row(x.row(i).data(), x.row(i).data() + x.cols());
      std::vector<double> xr(static_cast<std::size_t>(x.cols()));
      for (Eigen::Index k = 0; k < x.cols(); ++k) xr[static_cast<std::size_t>(k)] = x(i, k);
      worst = std::max(worst, std::abs(op.residual(entry.problem.exact_log_pdf, xr)) / op.scale());
    }
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("eigenbasis residual agrees with the dense Hessian form") {
  const auto& entry = catalog_entry("ou2d");
  const ResidualOperator op(entry.problem, 1.0);
  // Perturbed density: the residual is nonzero, so both forms are exercised.
  ad::DualFunction logp = [](std::span<const ad::DualScalar> x) {
    return -0.3 * x[0] * x[0] - 0.2 * x[1] * x[1] + 0.1 * x[0] * x[1] + sin(x[0]);
  };
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const Matrix pt = testing::random_matrix(1, 2, rng);
    const std::vector<double> x{pt(0, 0), pt(0, 1)};
    double p;
    Vector g;
    Matrix h;
    dense_derivatives(logp, x, p, g, h);
    const double dense = op.residual_dense(p, g, h, x);
    CHECK(op.residual(logp, x) == doctest::Approx(dense).epsilon(1e-12));
  }
}

TEST_CASE("scaled residual is proportional to the unscaled one") {
  const auto& entry = catalog_entry("mix2d");
  const ResidualOperator unit(entry.problem, 1.0);
  const ResidualOperator scaled(entry.problem, 100.0);
  ad::DualFunction logp = [](std::span<const ad::DualScalar> x) { return -0.5 * (x[0] * x[0] + x[1] * x[1]); };
  const std::vector<double> x{0.3, -0.8};
  CHECK(scaled.residual(logp, x) == doctest::Approx(100.0 * unit.residual(logp, x)).epsilon(1e-15));
}

TEST_CASE("catalog constants") {
  const auto& mix2d = catalog_entry("mix2d");
  std::vector<ad::DualScalar> x{ad::DualScalar{0.0}, ad::DualScalar{0.0}};
  (void)x;
  CHECK(mix2d.train.epochs == 200);
  CHECK(mix2d.train.adaptive_steps == 5);
  CHECK(mix2d.train.learning_rate == 1e-4);
  CHECK(catalog_entry("ou2d").train.collocation == 60000);
  CHECK(catalog_entry("mix4d").flow.width == 120);
  CHECK(catalog_entry("mix8d").flow.depth == 10);
  CHECK_THROWS_AS(catalog_entry("nope"), ConfigError);
}

TEST_CASE("logistic-hole sampler honours the constraints") {
  LogisticHoleDataset data(8, 3.0, 7.6, 2.0);
  std::mt19937_64 rng(12);
  const auto batch = data.sample(2000, rng);
  REQUIRE(batch.x.rows() == 2000);
  for (Eigen::Index i = 0; i < batch.x.rows(); ++i) {
    const std::vector<double> row(batch.x.row(i).data(), batch.x.row(i).data() + 0);
    std::vector<double> xr(8);
    for (int k = 0; k < 8; ++k) xr[static_cast<std::size_t>(k)] = batch.x(i, k);
    REQUIRE(data.inside(xr));
  }
  std::vector<double> zero_pair(8, 10.0);
  zero_pair[3] = zero_pair[4] = 0.0;
  CHECK_FALSE(data.inside(zero_pair));

  LogisticHoleDataset open(8, 3.0, 0.0, 2.0);
  CHECK(open.estimate_acceptance(1000, rng) == 1.0);
}

TEST_CASE("logistic-hole acceptance and entropy are stable across sample sizes") {
  LogisticHoleDataset a(8, 3.0, 7.6, 2.0), b(8, 3.0, 7.6, 2.0);
  std::mt19937_64 r1(1), r2(2);
  const double pa = a.estimate_acceptance(100000, r1);
  const double pb = b.estimate_acceptance(1000000, r2);
  CHECK(std::abs(pa - pb) / pb <= 0.01 + 3.0 * std::sqrt(pa * (1 - pa) / 1e5) / pb);
  const auto s1 = a.sample(20000, r1);
  const auto s2 = b.sample(20000, r2);
  const double h1 = a.ref_entropy(s1.x), h2 = b.ref_entropy(s2.x);
  CHECK(std::abs(h1 - h2) / std::abs(h2) <= 0.01);
  std::vector<double> outside(8, 0.0);
  CHECK_FALSE(a.ref_log_pdf(outside).inside);
  // Inside B the density is the unconstrained product divided by E[I_B].
  std::vector<double> in(s1.x.row(0).size());
  for (std::size_t k = 0; k < in.size(); ++k) in[k] = s1.x(0, static_cast<Eigen::Index>(k));
  double prod = 0.0;
  for (double v : in) prod += a.log_logistic(v);
  CHECK(a.ref_log_pdf(in).value == doctest::Approx(prod - std::log(a.acceptance())));
}

}
