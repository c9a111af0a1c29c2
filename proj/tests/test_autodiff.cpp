#include "krnet/autodiff.hpp"
#include "krnet/dual.hpp"
#include "krnet/elementwise.hpp"
#include "krnet/errors.hpp"
#include "krnet/tape.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace krnet;
using namespace krnet::ad;

TEST_SUITE("autodiff") {

TEST_CASE("dual scalar propagates first and second derivatives") {
  auto f = [](DualScalar x) { return exp(sin(x) * x) / (1.0 + x * x) + log(x) * tanh(x) - sqrt(x); };
  auto fv = [&](double x) { return f(DualScalar::variable(x, 1.0)).value; };
  for (double x : {0.3, 1.1, 2.7}) {
    const auto r = f(DualScalar::variable(x, 1.0));
    const double h = 1e-4;
    const double d1 = (fv(x + 1e-5) - fv(x - 1e-5)) / 2e-5;
    const double d2 = (fv(x + h) - 2 * fv(x) + fv(x - h)) / (h * h);
    CHECK(r.first == doctest::Approx(d1).epsilon(1e-8));
    CHECK(r.second == doctest::Approx(d2).epsilon(1e-5));
  }
}

TEST_CASE("mixed partials by polarization match finite differences") {
  DualFunction f = [](std::span<const DualScalar> x) { return exp(x[0] * x[1]) + sin(x[0]) * x[2] * x[2]; };
  const std::vector<double> x{0.4, -0.7, 1.3};
  const auto r = spatial_derivs(f, x, 0, 2);
  // d/dx0 = x1 e^{x0 x1} + cos(x0) x2^2 ; d2/dx0dx2 = 2 cos(x0) x2
  CHECK(r.first == doctest::Approx(x[1] * std::exp(x[0] * x[1]) + std::cos(x[0]) * x[2] * x[2]));
  CHECK(r.second == doctest::Approx(2.0 * std::cos(x[0]) * x[2]));
  const auto s = spatial_derivs(f, x, 1, 1);
  CHECK(s.second == doctest::Approx(x[0] * x[0] * std::exp(x[0] * x[1])));
}

/// A small expression touching every primitive, as a function of inputs and
/// a 3x2 parameter block.
Var expression(Tape& t, const ParameterStore& store, Var x) {
  const Var w = t.param(store, 0);
  const Var b = t.param(store, 1);
  Var h = add(matmul(x, w), b);
  h = tanh(h) * exp(scale(h, 0.3)) + square(cols(h, 0, 2));
  Var y = hcat({log(add_scalar(square(h), 1.0)), relu(h)});
  return rowsum(y);
}

TEST_CASE("tape jets match finite differences in x") {
  ParameterStore store;
  store.add("w", 3, 2);
  store.add("b", 1, 2);
  std::mt19937_64 rng(3);
  store.assign(std::vector<double>{0.3, -0.2, 0.5, 0.7, 0.1, -0.4, 0.05, 0.2});
  const Matrix x = testing::random_matrix(4, 3, rng);
  Matrix dirs = testing::random_matrix(3, 2, rng);
  Tape t(false);
  const Var out = expression(t, store, t.input(x, dirs));
  auto value = [&](const Matrix& xx) {
    Tape tt(false);
    return Matrix(expression(tt, store, tt.input(xx, Matrix(3, 0))).value());
  };
  const double h = 1e-4;
  for (int k = 0; k < 2; ++k) {
    Matrix step = Matrix::Zero(4, 3);
    step.rowwise() = dirs.col(k).transpose();
    const Matrix fp = value(x + h * step), f0 = value(x), fm = value(x - h * step);
    const Matrix d1 = (fp - fm) / (2 * h);
    const Matrix d2 = (fp - 2 * f0 + fm) / (h * h);
    for (int r = 0; r < 4; ++r) {
      CHECK(out.channel(1 + 2 * k)(r, 0) == doctest::Approx(d1(r, 0)).epsilon(1e-6));
      CHECK(out.channel(2 + 2 * k)(r, 0) == doctest::Approx(d2(r, 0)).epsilon(1e-4));
    }
  }
}

TEST_CASE("tape parameter gradient of a derivative-dependent loss matches finite differences") {
  ParameterStore store;
  store.add("w", 3, 2);
  store.add("b", 1, 2);
  std::mt19937_64 rng(5);
  std::vector<double> theta{0.3, -0.2, 0.5, 0.7, 0.1, -0.4, 0.05, 0.2};
  store.assign(theta);
  const Matrix x = testing::random_matrix(5, 3, rng);
  const Matrix dirs = testing::random_matrix(3, 2, rng);
  Matrix coef = testing::random_matrix(5, 5, rng);
  auto loss = [&](Tape& t) {
    const Var e = expression(t, store, t.input(x, dirs));
    return sum_value(square(combine_channels(e, coef)));
  };
  const auto lg = grad_params(loss, store);
  auto f = [&](std::span<const double> th) {
    store.assign(th);
    Tape t(false);
    const double v = loss(t).scalar();
    store.assign(theta);
    return v;
  };
  CHECK(fd_check(f, theta, lg.gradient, 1e-6) < 1e-6);
}

TEST_CASE("non-finite values raise a numeric error carrying the layer") {
  Tape t;
  t.set_layer(4);
  const Var x = t.input(Matrix::Constant(1, 1, -1.0), Matrix(1, 0));
  bool caught = false;
  try {
    (void)log(x);
  } catch (const NumericError& e) {
    caught = true;
    CHECK(e.layer() == 4);
  }
  CHECK(caught);
}

TEST_CASE("vectorized tanh agrees with std::tanh") {
  Eigen::ArrayXXd x = Eigen::ArrayXd::LinSpaced(20001, -25.0, 25.0);
  x(0) = 1e-300;
  x(1) = -3e-9;
  x(2) = 0.0199999;
  x(3) = 0.02;
  const Eigen::ArrayXXd t = fast_tanh(x);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double ref = std::tanh(x(i));
    worst = std::max(worst, std::abs(t(i) - ref) / std::max(std::abs(ref), 1e-300));
  }
  CHECK(worst < 1e-14);
  CHECK(fast_tanh(Eigen::ArrayXXd::Constant(1, 1, 0.0))(0) == 0.0);
}

}
