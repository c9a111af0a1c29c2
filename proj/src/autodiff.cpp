#include "krnet/autodiff.hpp"

#include "krnet/errors.hpp"
#include "krnet/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace krnet::ad {

LossAndGradient grad_params(const std::function<Var(Tape&)>& loss, const ParameterStore& store) {
  Tape tape;
  Var l = loss(tape);
  tape.backward(l);
  LossAndGradient out;
  out.value = l.scalar();
  out.gradient.assign(store.size(), 0.0);
  tape.accumulate_param_gradient(out.gradient);
  for (std::size_t k = 0; k < out.gradient.size(); ++k) {
    if (!std::isfinite(out.gradient[k])) {
      int layer = -1;
      for (const auto& b : store.blocks()) {
        if (k >= b.offset && k < b.offset + b.size()) layer = b.layer;
      }
      throw NumericError("non-finite gradient entry " + std::to_string(k), layer);
    }
  }
  return out;
}

LossAndGradient grad_params_chunked(const std::function<Var(Tape&, std::size_t, std::size_t)>& partial,
                                    const ParameterStore& store, std::size_t rows, std::size_t chunk) {
  if (chunk == 0) throw ConfigError("chunk size must be positive");
  const std::size_t n = (rows + chunk - 1) / chunk;
  std::vector<LossAndGradient> parts(n);
  parallel_for(n, [&](std::size_t c) {
    const std::size_t begin = c * chunk;
    const std::size_t len = std::min(chunk, rows - begin);
    parts[c] = grad_params([&](Tape& t) { return partial(t, begin, len); }, store);
  });
  LossAndGradient out;
  out.gradient.assign(store.size(), 0.0);
  for (const auto& p : parts) {
    out.value += p.value;
    for (std::size_t k = 0; k < out.gradient.size(); ++k) out.gradient[k] += p.gradient[k];
  }
  return out;
}

namespace {

void check_axes(std::size_t d, int i, int j) {
  if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= d || static_cast<std::size_t>(j) >= d) {
    throw ConfigError("spatial derivative axis out of range");
  }
}

DualScalar along(const DualFunction& f, std::span<const double> x, const std::vector<double>& dir) {
  std::vector<DualScalar> xs(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) xs[k] = DualScalar::variable(x[k], dir[k]);
  DualScalar r = f(xs);
  if (!isfinite(r)) throw NumericError("non-finite derivative propagation");
  return r;
}

}  // namespace

SpatialDerivs spatial_derivs(const DualFunction& f, std::span<const double> x, int i, int j) {
  check_axes(x.size(), i, j);
  std::vector<double> ei(x.size(), 0.0);
  ei[static_cast<std::size_t>(i)] = 1.0;
  const DualScalar ri = along(f, x, ei);
  if (i == j) return {ri.value, ri.first, ri.second};
  std::vector<double> ej(x.size(), 0.0);
  ej[static_cast<std::size_t>(j)] = 1.0;
  std::vector<double> eij = ei;
  eij[static_cast<std::size_t>(j)] = 1.0;
  const DualScalar rj = along(f, x, ej);
  const DualScalar rij = along(f, x, eij);
  // (e_i + e_j)^T H (e_i + e_j) = H_ii + 2 H_ij + H_jj
  return {ri.value, ri.first, 0.5 * (rij.second - (ri.second + rj.second))};
}

Matrix polarization_directions(int d, int i, int j) {
  check_axes(static_cast<std::size_t>(d), i, j);
  if (i == j) {
    Matrix v = Matrix::Zero(d, 1);
    v(i, 0) = 1.0;
    return v;
  }
  Matrix v = Matrix::Zero(d, 3);
  v(i, 0) = 1.0;
  v(j, 1) = 1.0;
  v(i, 2) = 1.0;
  v(j, 2) = 1.0;
  return v;
}

Var polarize(Var jet, bool same_axis) {
  const int b = jet.batch();
  const int ch = jet.channels();
  if ((same_axis && jet.dirs() != 1) || (!same_axis && jet.dirs() != 3)) {
    throw ConfigError("jet was not evaluated along polarization directions");
  }
  Matrix cv = Matrix::Zero(b, ch), c1 = Matrix::Zero(b, ch), c2 = Matrix::Zero(b, ch);
  cv.col(0).setOnes();
  c1.col(1).setOnes();
  if (same_axis) {
    c2.col(2).setOnes();
  } else {
    c2.col(6).setConstant(0.5);
    c2.col(2).setConstant(-0.5);
    c2.col(4).setConstant(-0.5);
  }
  return hcat({combine_channels(jet, cv), combine_channels(jet, c1), combine_channels(jet, c2)});
}

SpatialDerivs spatial_derivs(const TapeFunction& f, std::span<const double> x, int i, int j) {
  const int d = static_cast<int>(x.size());
  Tape tape(false);
  Matrix pt(1, d);
  for (int k = 0; k < d; ++k) pt(0, k) = x[static_cast<std::size_t>(k)];
  Var in = tape.input(pt, polarization_directions(d, i, j));
  Var out = polarize(f(tape, in), i == j);
  const Matrix& v = out.value();
  return {v(0, 0), v(0, 1), v(0, 2)};
}

std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                std::span<const double> x, double h) {
  if (!(h > 0.0)) throw ConfigError("finite-difference step must be positive");
  std::vector<double> xp(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double x0 = xp[k];
    xp[k] = x0 + h;
    const double fp = f(xp);
    xp[k] = x0 - h;
    const double fm = f(xp);
    xp[k] = x0;
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double max_relative_error(std::span<const double> value, std::span<const double> reference) {
  if (value.size() != reference.size()) throw ConfigError("relative error of vectors with different sizes");
  double worst = 0.0;
  for (std::size_t k = 0; k < value.size(); ++k) {
    const double denom = std::max(std::abs(reference[k]), 1e-12);
    worst = std::max(worst, std::abs(value[k] - reference[k]) / denom);
  }
  return worst;
}

double fd_check(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                std::span<const double> analytic, double h) {
  const auto fd = fd_gradient(f, x, h);
  return max_relative_error(fd, analytic);
}

}  // namespace krnet::ad
