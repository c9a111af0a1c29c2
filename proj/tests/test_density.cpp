#include "krnet/density.hpp"
#include "krnet/errors.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace krnet;

namespace {

FlowConfig flow(int dim, int partitions) {
  FlowConfig c;
  c.dim = dim;
  c.num_partitions = partitions;
  c.depth = 2;
  c.width = 8;
  c.nonlinear_elements = 8;
  c.nonlinear_half_width = 8.0;
  c.use_rotation = dim > 1;
  return c;
}

}  // namespace

TEST_SUITE("density") {

TEST_CASE("identity-initialized flow reproduces the standard Gaussian") {
  KRnetModel model(flow(2, 2));
  model.initialize(0);
  const Matrix origin = Matrix::Zero(1, 2);
  CHECK(log_pdf(model, origin)(0) == doctest::Approx(-std::log(2 * std::numbers::pi)).epsilon(1e-12));
  Matrix x(1, 2);
  x << 0.3, -1.1;
  CHECK(log_pdf(model, x)(0) == doctest::Approx(GaussianPrior::log_pdf(x)(0)).epsilon(1e-12));
}

TEST_CASE("prior sampler moments") {
  std::mt19937_64 rng(3);
  const Matrix z = GaussianPrior::sample(100000, 3, rng);
  const Eigen::RowVectorXd mean = z.colwise().mean();
  const Matrix centered = z.rowwise() - mean;
  const Matrix cov = centered.transpose() * centered / (z.rows() - 1.0);
  CHECK(mean.cwiseAbs().maxCoeff() < 4.0 / std::sqrt(1e5));
  CHECK((cov - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("randomized 2D flow integrates to one") {
  KRnetModel model(flow(2, 2));
  testing::randomize(model, 5, 0.2);
  const double lo = -12, hi = 12;
  const int n = 601;
  const double h = (hi - lo) / (n - 1);
  Matrix grid(static_cast<Eigen::Index>(n) * n, 2);
  Vector w(grid.rows());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Eigen::Index r = static_cast<Eigen::Index>(i) * n + j;
      grid(r, 0) = lo + i * h;
      grid(r, 1) = lo + j * h;
      w(r) = (i == 0 || i == n - 1 ? 0.5 : 1.0) * (j == 0 || j == n - 1 ? 0.5 : 1.0);
    }
  }
  const double mass = w.dot(log_pdf(model, grid).array().exp().matrix()) * h * h;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("Monte Carlo KL agrees with quadrature in 1D") {
  KRnetModel model(flow(1, 1));
  testing::randomize(model, 8, 0.2);
  auto ref = [](double x) { return -x * x - 0.5 * std::log(std::numbers::pi); };
  const int n = 20001;
  const double lo = -8, hi = 8, h = (hi - lo) / (n - 1);
  Matrix grid(n, 1);
  for (int i = 0; i < n; ++i) grid(i, 0) = lo + i * h;
  const Vector lp = log_pdf(model, grid);
  double kl = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = ref(grid(i, 0));
    kl += (i == 0 || i == n - 1 ? 0.5 : 1.0) * std::exp(r) * (r - lp(i));
  }
  kl *= h;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
  Matrix v(200000, 1);
  Vector rv(v.rows());
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    v(i, 0) = nd(rng);
    rv(i) = ref(v(i, 0));
  }
  const Metrics m = kl_divergence_mc(rv, model, v);
  CHECK(std::abs(m.kl - kl) <= 4.0 * m.kl_stderr + 1e-9);
  CHECK(m.ref_entropy == doctest::Approx(0.5 * std::log(std::numbers::pi * std::numbers::e)).epsilon(1e-2));
  CHECK(m.delta == doctest::Approx(m.kl / m.ref_entropy));
}

TEST_CASE("model samples follow the model density") {
  KRnetModel model(flow(1, 1));
  testing::randomize(model, 12, 0.2);
  std::mt19937_64 rng(2);
  const auto s = sample(model, 100000, rng);
  CHECK(s.redrawn == 0);
  const int n = 20001;
  const double lo = -12, hi = 12, h = (hi - lo) / (n - 1);
  Matrix grid(n, 1);
  for (int i = 0; i < n; ++i) grid(i, 0) = lo + i * h;
  const Eigen::ArrayXd p = log_pdf(model, grid).array().exp();
  const double mean = (p * grid.col(0).array()).sum() * h;
  const double var = (p * (grid.col(0).array() - mean).square()).sum() * h;
  CHECK(std::abs(s.x.col(0).mean() - mean) < 4.0 * std::sqrt(var / 1e5));
}

TEST_CASE("cross-entropy gradient matches central differences") {
  for (int dim : {1, 2, 3}) {
    CAPTURE(dim);
    KRnetModel model(flow(dim, dim == 1 ? 1 : 2));
    testing::randomize(model, 30 + dim);
    std::mt19937_64 rng(dim);
    const Matrix batch = 1.5 * testing::random_matrix(30, dim, rng);
    const auto lg = cross_entropy_gradient(model, batch);
    CHECK(lg.value == doctest::Approx(cross_entropy_loss(model, batch)).epsilon(1e-12));
    CHECK(testing::fd_parameter_check(model, [&] { return cross_entropy_loss(model, batch); }, lg.gradient) <=
          1e-4);
  }
}

TEST_CASE("density training lowers the cross entropy") {
  KRnetModel model(flow(2, 2));
  model.initialize(3);
  std::mt19937_64 rng(4);
  Matrix data = testing::random_matrix(2000, 2, rng);
  data.col(0) = 2.0 * data.col(0).array() + 1.0;
  data.col(1) = 0.5 * data.col(1) + 0.3 * data.col(0);
  const double before = cross_entropy_loss(model, data);
  Adam adam(model.count_parameters(), AdamConfig{5e-3});
  DensityTrainConfig c;
  c.epochs = 20;
  c.batch_size = 200;
  int calls = 0;
  train_density(model, data, c, adam, [&](int, double) { ++calls; });
  CHECK(calls == 20);
  CHECK(cross_entropy_loss(model, data) < before - 0.1);
}

TEST_CASE("relative error needs a positive entropy") {
  CHECK(relative_error(0.1, 2.0) == 0.05);
  CHECK_THROWS_AS(relative_error(0.1, -1.0), ConfigError);
}

}
