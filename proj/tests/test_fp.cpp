#include "krnet/errors.hpp"
#include "krnet/fp_solver.hpp"
#include "krnet/parallel.hpp"
#include "krnet/problems.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace krnet;

namespace {

FlowConfig small_flow(int dim) {
  FlowConfig c;
  c.dim = dim;
  c.num_partitions = dim == 1 ? 1 : 2;
  c.depth = 2;
  c.width = 6;
  c.nonlinear_elements = 6;
  c.nonlinear_half_width = 6.0;
  c.use_rotation = dim > 1;
  c.use_nonlinear = true;
  return c;
}

/// Residual of the model from central differences of p = exp(log p_X).
double fd_residual(const KRnetModel& model, const ResidualOperator& op, const Eigen::RowVectorXd& x, double h) {
  const auto d = x.size();
  auto p = [&](const Eigen::RowVectorXd& y) { return std::exp(log_pdf(model, Matrix(y))(0)); };
  const double p0 = p(x);
  Vector g(d);
  Matrix hess(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(d);
    e(i) = h;
    g(i) = (p(x + e) - p(x - e)) / (2 * h);
    hess(i, i) = (p(x + e) - 2 * p0 + p(x - e)) / (h * h);
    for (Eigen::Index j = i + 1; j < d; ++j) {
      Eigen::RowVectorXd f = Eigen::RowVectorXd::Zero(d);
      f(j) = h;
      hess(i, j) = hess(j, i) = (p(x + e + f) - p(x + e - f) - p(x - e + f) + p(x - e - f)) / (4 * h * h);
    }
  }
  std::vector<double> xr(x.data(), x.data() + d);
  return op.residual_dense(p0, g, hess, xr);
}

}  // namespace

TEST_SUITE("fp") {

TEST_CASE("Adam first step moves each coordinate by the learning rate") {
  Adam adam(2, AdamConfig{1e-3});
  std::vector<double> theta{0.0, 0.0};
  const std::vector<double> g{4.0, -2.0};
  adam.step(theta, g);
  CHECK(theta[0] == doctest::Approx(-1e-3).epsilon(1e-6));
  CHECK(theta[1] == doctest::Approx(1e-3).epsilon(1e-6));
  CHECK(adam.steps() == 1);
  Adam idle(2, AdamConfig{1e-3});
  std::vector<double> same{0.5, -0.5};
  idle.step(same, std::vector<double>{0.0, 0.0});
  CHECK(same[0] == 0.5);
  CHECK(same[1] == -0.5);
}

TEST_CASE("Adam minimizes a quadratic") {
  Adam adam(1, AdamConfig{0.05});
  std::vector<double> x{3.0};
  for (int i = 0; i < 2000; ++i) adam.step(x, std::vector<double>{2.0 * (x[0] - 1.0)});
  CHECK(std::abs(x[0] - 1.0) < 1e-3);
}

TEST_CASE("model residual matches a finite-difference residual") {
  for (const char* name : {"ou2d", "mix2d", "ou1d"}) {
    CAPTURE(name);
    const auto& entry = catalog_entry(name);
    KRnetModel model(small_flow(entry.problem.dim));
    testing::randomize(model, 3);
    const ResidualOperator op(entry.problem, 1.0);
    std::mt19937_64 rng(5);
    const Matrix x = testing::random_matrix(6, entry.problem.dim, rng);
    const Vector r = residual_values(model, op, x);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double fd = fd_residual(model, op, x.row(i), 1e-4);
      CHECK(std::abs(r(i) - fd) <= 1e-5 * (1.0 + std::abs(fd)));
    }
  }
}

TEST_CASE("residual scale is a constant factor") {
  const auto& entry = catalog_entry("ou2d");
  KRnetModel model(small_flow(2));
  testing::randomize(model, 9);
  const ResidualOperator unit(entry.problem, 1.0), scaled(entry.problem, 100.0);
  std::mt19937_64 rng(1);
  const Matrix x = testing::random_matrix(10, 2, rng);
  CHECK((residual_values(model, scaled, x) - 100.0 * residual_values(model, unit, x)).norm() <=
        1e-12 * residual_values(model, scaled, x).norm());
}

TEST_CASE("residual loss gradient matches central differences") {
  for (const char* name : {"ou1d", "ou2d", "mix2d"}) {
    CAPTURE(name);
    const auto& entry = catalog_entry(name);
    KRnetModel model(small_flow(entry.problem.dim));
    testing::randomize(model, 21);
    const ResidualOperator op(entry.problem, 10.0);
    std::mt19937_64 rng(7);
    const CollocationSet set = make_collocation(2.0 * testing::random_matrix(40, entry.problem.dim, rng), op, 0);
    const auto lg = residual_loss_gradient(model, op, set.points, set.coef);
    CHECK(lg.value == doctest::Approx(residual_loss(model, op, set)).epsilon(1e-12));
    const double err =
        testing::fd_parameter_check(model, [&] { return residual_loss(model, op, set); }, lg.gradient);
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("training configuration is validated") {
  TrainConfig c;
  c.collocation = 1000;
  c.batch_size = 300;
  CHECK_THROWS_AS(c.validate(1), ConfigError);
  c.batch_size = 250;
  CHECK_NOTHROW(c.validate(1));
  c.box = {{1.0, -1.0}};
  CHECK_THROWS_AS(c.validate(1), ConfigError);
}

TEST_CASE("uniform collocation stays inside the box") {
  TrainConfig c;
  c.box = {{-1.0, 2.0}, {3.0, 4.0}};
  std::mt19937_64 rng(0);
  const Matrix x = uniform_points(5000, c, 2, rng);
  CHECK(x.col(0).minCoeff() >= -1.0);
  CHECK(x.col(0).maxCoeff() <= 2.0);
  CHECK(x.col(1).minCoeff() >= 3.0);
  CHECK(x.col(1).maxCoeff() <= 4.0);
}

TEST_CASE("ADDA is reproducible and independent of the thread count") {
  const auto& entry = catalog_entry("mix2d");
  TrainConfig c;
  c.collocation = 200;
  c.batch_size = 50;
  c.epochs = 2;
  c.adaptive_steps = 2;
  c.learning_rate = 1e-3;
  c.validation_size = 500;
  c.seed = 11;
  auto run = [&](int threads) {
    set_num_threads(threads);
    KRnetModel model(small_flow(2));
    model.initialize(4);
    const auto result = adda(model, entry.problem, c);
    const auto v = model.params().values();
    return std::make_pair(std::vector<double>(v.begin(), v.end()), result);
  };
  const auto [a, ra] = run(1);
  const auto [b, rb] = run(1);
  const auto [t, rt] = run(3);
  set_num_threads(1);
  CHECK(a == b);
  CHECK(a == t);
  REQUIRE(ra.steps.size() == 2);
  CHECK(ra.epochs.size() == 4);
  CHECK(ra.steps[1].metrics.kl == rt.steps[1].metrics.kl);
}

TEST_CASE("zero epochs leave the parameters unchanged") {
  const auto& entry = catalog_entry("ou1d");
  TrainConfig c;
  c.collocation = 100;
  c.batch_size = 50;
  c.epochs = 0;
  c.validation_size = 100;
  KRnetModel model(small_flow(1));
  testing::randomize(model, 2);
  const auto before = std::vector<double>(model.params().values().begin(), model.params().values().end());
  adda(model, entry.problem, c);
  const auto after = model.params().values();
  CHECK(std::equal(before.begin(), before.end(), after.begin()));
}

TEST_CASE("each adaptivity step starts from the previous optimum") {
  const auto& entry = catalog_entry("ou1d");
  TrainConfig c;
  c.collocation = 100;
  c.batch_size = 50;
  c.epochs = 1;
  c.adaptive_steps = 2;
  c.validation_size = 100;
  KRnetModel model(small_flow(1));
  model.initialize(1);
  std::vector<std::vector<double>> at_step;
  AddaHooks hooks;
  hooks.on_step = [&](const StepRecord&, const KRnetModel& m) {
    at_step.emplace_back(m.params().values().begin(), m.params().values().end());
  };
  std::vector<double> losses;
  hooks.on_epoch = [&](const EpochRecord& e) { losses.push_back(e.loss); };
  adda(model, entry.problem, c, hooks);
  REQUIRE(at_step.size() == 2);
  CHECK(at_step[0] != at_step[1]);
  CHECK(losses.size() == 2);
}

TEST_CASE("short 1D training reduces the residual loss and the KL divergence") {
  const auto& entry = catalog_entry("ou1d");
  TrainConfig c = entry.train;
  c.collocation = 1000;
  c.batch_size = 100;
  c.epochs = 30;
  c.learning_rate = 2e-3;
  c.validation_size = 5000;
  c.eval_every = 30;
  FlowConfig f = entry.flow;
  f.depth = 2;
  f.width = 16;
  KRnetModel model(f);
  model.initialize(0);
  const auto validation = make_validation(entry.problem, 5000, 1);
  const double kl0 = kl_divergence_mc(validation.ref_log_pdf, model, validation.points).kl;
  const auto result = adda(model, entry.problem, c);
  CHECK(result.epochs.back().loss < result.epochs.front().loss);
  CHECK(result.steps.back().metrics.kl < kl0);
}

}
