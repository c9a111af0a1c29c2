#include "krnet/layers.hpp"

#include "krnet/elementwise.hpp"
#include "krnet/errors.hpp"
#include "krnet/nonlinear_map.hpp"

#include <cmath>
#include <memory>

namespace krnet {

using ad::Tape;
using ad::Var;

namespace {

constexpr double kSingularPivot = 1e-300;

/// Writes `active_part` over the leading columns of x, keeping the rest.
Var replace_active(Var x, Var active_part) {
  if (active_part.cols() == x.cols()) return active_part;
  return ad::hcat({active_part, ad::cols(x, active_part.cols(), x.cols() - active_part.cols())});
}

void check_pivots(const Eigen::Ref<const Matrix>& packed, int layer) {
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    if (!(std::abs(packed(i, i)) > kSingularPivot)) {
      throw SingularError("rotation layer " + std::to_string(layer) + " has a vanishing pivot U(" +
                          std::to_string(i) + "," + std::to_string(i) + ")");
    }
  }
}

Matrix unit_lower(const Eigen::Ref<const Matrix>& packed) {
  Matrix l = packed.triangularView<Eigen::StrictlyLower>();
  l.diagonal().setOnes();
  return l;
}

/// (L U)^T as a recorded node of the packed factors.
Var rotation_transpose(Var packed) {
  auto& t = packed.tape();
  const Matrix& p = packed.value();
  const Matrix l = unit_lower(p);
  const Matrix u = p.triangularView<Eigen::Upper>();
  Matrix out = (l * u).transpose();
  const int pi = packed.id();
  return t.push(
      std::move(out), static_cast<int>(p.rows()), 0, t.node(pi).requires_grad,
      [pi](Tape& tp, int self) {
        const Matrix& pv = tp.node(pi).value;
        const Matrix lf = unit_lower(pv);
        const Matrix uf = pv.triangularView<Eigen::Upper>();
        const Matrix g = tp.adjoint(self).transpose();  // d/d(LU)
        Matrix gl = g * uf.transpose();
        Matrix gu = lf.transpose() * g;
        Matrix& ap = tp.adjoint(pi);
        ap += Matrix(gl.triangularView<Eigen::StrictlyLower>());
        ap += Matrix(gu.triangularView<Eigen::Upper>());
      },
      "rotation");
}

Var sum_log_abs_diagonal(Var packed) {
  auto& t = packed.tape();
  const Matrix& p = packed.value();
  Matrix out(1, 1);
  out(0, 0) = p.diagonal().array().abs().log().sum();
  const int pi = packed.id();
  return t.push(
      std::move(out), 1, 0, t.node(pi).requires_grad,
      [pi](Tape& tp, int self) {
        const double a = tp.adjoint(self)(0, 0);
        Matrix& ap = tp.adjoint(pi);
        const Matrix& pv = tp.node(pi).value;
        for (Eigen::Index i = 0; i < pv.rows(); ++i) ap(i, i) += a / pv(i, i);
      },
      "rotation_logdet");
}

void glorot(Eigen::Map<Matrix> w, std::mt19937_64& rng) {
  const double fan = static_cast<double>(w.rows() + w.cols());
  if (fan <= 0.0) return;
  std::normal_distribution<double> n(0.0, std::sqrt(2.0 / fan));
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = n(rng);
  }
}

Var activate(Var h, Activation a) { return a == Activation::tanh ? ad::tanh(h) : ad::relu(h); }

}  // namespace

void Layer::forward_values(const ParameterStore& params, Matrix& x, Vector& logdet) const {
  Tape t(false);
  const Var in = t.input(x, Matrix(x.cols(), 0));
  Var ld = t.constant(Matrix::Zero(x.rows(), 1), static_cast<int>(x.rows()), 0);
  const Var y = forward(t, params, in, ld);
  x = y.value();
  logdet += ld.value().col(0);
}

// ---------------------------------------------------------------------------

ScaleBiasLayer::ScaleBiasLayer(int index, int active, ParameterStore& params, const std::string& prefix)
    : Layer(index, active),
      a_(params.add(prefix + "/a", 1, active, index)),
      b_(params.add(prefix + "/b", 1, active, index)) {}

Var ScaleBiasLayer::forward(Tape& t, const ParameterStore& params, Var x, Var& logdet) const {
  t.set_layer(index());
  const Var a = t.param(params, a_);
  const Var b = t.param(params, b_);
  const Var xa = ad::cols(x, 0, active());
  const Var y = ad::add(ad::mul_row(xa, a), b);
  logdet = ad::add(logdet, ad::sum_log_abs(a));
  return replace_active(x, y);
}

void ScaleBiasLayer::inverse(const ParameterStore& params, Matrix& x) const {
  const auto a = params.block(a_);
  const auto b = params.block(b_);
  auto xa = x.leftCols(active());
  xa.rowwise() -= b.row(0);
  xa.array().rowwise() /= a.row(0).array();
}

void ScaleBiasLayer::initialize(ParameterStore& params, std::mt19937_64&) const {
  params.block(a_).setOnes();
  params.block(b_).setZero();
}

// ---------------------------------------------------------------------------

RotationLayer::RotationLayer(int index, int active, ParameterStore& params, const std::string& prefix)
    : Layer(index, active), lu_(params.add(prefix + "/lu", active, active, index)) {}

Matrix RotationLayer::dense(const Eigen::Ref<const Matrix>& packed) {
  return unit_lower(packed) * Matrix(packed.triangularView<Eigen::Upper>());
}

Var RotationLayer::forward(Tape& t, const ParameterStore& params, Var x, Var& logdet) const {
  t.set_layer(index());
  check_pivots(params.block(lu_), index());
  const Var packed = t.param(params, lu_);
  const Var y = ad::matmul(ad::cols(x, 0, active()), rotation_transpose(packed));
  logdet = ad::add(logdet, sum_log_abs_diagonal(packed));
  return replace_active(x, y);
}

void RotationLayer::inverse(const ParameterStore& params, Matrix& x) const {
  const auto p = params.block(lu_);
  check_pivots(p, index());
  // Rows satisfy y = z (L U)^T, so z^T = U^{-1} L^{-1} y^T.
  Matrix zt = x.leftCols(active()).transpose();
  p.triangularView<Eigen::UnitLower>().solveInPlace(zt);
  p.triangularView<Eigen::Upper>().solveInPlace(zt);
  x.leftCols(active()) = zt.transpose();
}

void RotationLayer::initialize(ParameterStore& params, std::mt19937_64&) const {
  params.block(lu_).setIdentity();
}

// ---------------------------------------------------------------------------

AffineCouplingLayer::AffineCouplingLayer(int index, int active, int frozen_begin, int frozen_count,
                                         int updated_begin, int updated_count, int width, NetLayout layout,
                                         Activation activation, double alpha, ParameterStore& params,
                                         const std::string& prefix)
    : Layer(index, active),
      frozen_begin_(frozen_begin),
      frozen_count_(frozen_count),
      updated_begin_(updated_begin),
      updated_count_(updated_count),
      alpha_(alpha),
      activation_(activation) {
  std::vector<std::pair<int, bool>> shape;  // (out, activated)
  if (layout == NetLayout::two_layer) {
    shape = {{width, true}, {width, true}};
  } else {
    const int h = std::max(width / 2, 1);
    shape = {{width, true}, {h, true}, {h, true}, {width, false}};
  }
  int in = frozen_count;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    const std::string name = prefix + "/dense" + std::to_string(i);
    DenseBlock blk;
    blk.weight = params.add(name + "/W", in, shape[i].first, index);
    blk.bias = params.add(name + "/b", 1, shape[i].first, index);
    blk.activated = shape[i].second;
    dense_.push_back(blk);
    in = shape[i].first;
  }
  head_.weight = params.add(prefix + "/head/W", in, 2 * updated_count, index);
  head_.bias = params.add(prefix + "/head/b", 1, 2 * updated_count, index);
  head_.activated = false;
  beta_ = params.add(prefix + "/beta", 1, updated_count, index);
}

Var AffineCouplingLayer::forward(Tape& t, const ParameterStore& params, Var x, Var& logdet) const {
  t.set_layer(index());
  Var h = ad::cols(x, frozen_begin_, frozen_count_);
  for (const auto& blk : dense_) {
    h = ad::affine(h, t.param(params, blk.weight), t.param(params, blk.bias));
    if (blk.activated) h = activate(h, activation_);
  }
  const Var out = ad::affine(h, t.param(params, head_.weight), t.param(params, head_.bias));
  const int u = updated_count_;
  const Var s = ad::cols(out, 0, u);
  const Var sh = ad::cols(out, u, u);
  const Var factor = ad::add_scalar(alpha_ * ad::tanh(s), 1.0);
  const Var x2 = ad::cols(x, updated_begin_, u);
  const Var y2 = ad::add(ad::mul(x2, factor), ad::mul_row(ad::tanh(sh), ad::exp(t.param(params, beta_))));
  logdet = ad::add(logdet, ad::rowsum(ad::log(factor)));

  std::vector<Var> parts;
  if (updated_begin_ < frozen_begin_) {
    parts = {y2, ad::cols(x, frozen_begin_, x.cols() - frozen_begin_)};
  } else {
    if (updated_begin_ > 0) parts.push_back(ad::cols(x, 0, updated_begin_));
    parts.push_back(y2);
    const int rest = x.cols() - updated_begin_ - u;
    if (rest > 0) parts.push_back(ad::cols(x, updated_begin_ + u, rest));
  }
  return parts.size() == 1 ? parts.front() : ad::hcat(parts);
}

std::pair<Matrix, Matrix> AffineCouplingLayer::scale_shift(const ParameterStore& params, const Matrix& frozen) const {
  Matrix h = frozen;
  for (const auto& blk : dense_) {
    Matrix next = h * params.block(blk.weight);
    next.rowwise() += params.block(blk.bias).row(0);
    if (blk.activated) {
      if (activation_ == Activation::tanh) {
        next = fast_tanh(next.array()).matrix();
      } else {
        next = next.array().max(0.0).matrix();
      }
    }
    h = std::move(next);
  }
  Matrix out = h * params.block(head_.weight);
  out.rowwise() += params.block(head_.bias).row(0);
  return {out.leftCols(updated_count_), out.rightCols(updated_count_)};
}

void AffineCouplingLayer::inverse(const ParameterStore& params, Matrix& x) const {
  const Matrix frozen = x.middleCols(frozen_begin_, frozen_count_);
  const auto [s, sh] = scale_shift(params, frozen);
  const Eigen::ArrayXXd factor = 1.0 + alpha_ * fast_tanh(s.array());
  const Eigen::RowVectorXd eb = params.block(beta_).row(0).array().exp();
  auto x2 = x.middleCols(updated_begin_, updated_count_);
  x2 = ((x2.array() - (fast_tanh(sh.array()).rowwise() * eb.array())) / factor).matrix();
}

void AffineCouplingLayer::initialize(ParameterStore& params, std::mt19937_64& rng) const {
  for (const auto& blk : dense_) {
    glorot(params.block(blk.weight), rng);
    params.block(blk.bias).setZero();
  }
  params.block(head_.weight).setZero();
  params.block(head_.bias).setZero();
  params.block(beta_).setZero();
}

// ---------------------------------------------------------------------------

NonlinearLayer::NonlinearLayer(int index, int active, int interior_knots, double half_width,
                               ParameterStore& params, const std::string& prefix)
    : Layer(index, active),
      mesh_(nonlinear::graded_mesh(interior_knots)),
      half_width_(half_width),
      raw_(params.add(prefix + "/raw", interior_knots, active, index)) {}

namespace {

struct NonlinearCache {
  std::vector<nonlinear::Density> densities;
  std::vector<nonlinear::Evaluation> evals;  ///< sample-major: evals[b * d + c]
};

}  // namespace

Var NonlinearLayer::forward(Tape& t, const ParameterStore& params, Var x, Var& logdet) const {
  t.set_layer(index());
  const Var raw = t.param(params, raw_);
  const int d = active();
  const int b = x.batch();
  const int p = x.dirs();
  const double a = half_width_;
  auto cache = std::make_shared<NonlinearCache>();
  const Matrix& rv = raw.value();
  for (int c = 0; c < d; ++c) {
    cache->densities.push_back(
        nonlinear::realize(std::span<const double>(rv.col(c).data(), static_cast<std::size_t>(rv.rows())), mesh_));
  }
  const Matrix& xv = x.value();
  cache->evals.resize(static_cast<std::size_t>(b) * static_cast<std::size_t>(d));
  // Columns [0, d): y = H(x); columns [d, 2d): H'(x). Both carry jets.
  Matrix out(xv.rows(), 2 * d);
  for (int c = 0; c < d; ++c) {
    const auto& den = cache->densities[static_cast<std::size_t>(c)];
    for (int r = 0; r < b; ++r) {
      const auto e = nonlinear::evaluate(xv(r, c), den, mesh_, a);
      cache->evals[static_cast<std::size_t>(r) * d + c] = e;
      out(r, c) = e.y;
      out(r, d + c) = e.dy;
      for (int k = 0; k < p; ++k) {
        const Eigen::Index r1 = static_cast<Eigen::Index>(1 + 2 * k) * b + r;
        const Eigen::Index r2 = r1 + b;
        const double x1 = xv(r1, c);
        const double x2 = xv(r2, c);
        out(r1, c) = e.dy * x1;
        out(r2, c) = e.d2y * x1 * x1 + e.dy * x2;
        out(r1, d + c) = e.d2y * x1;
        out(r2, d + c) = e.d2y * x2;
      }
    }
  }
  const int xi = x.id();
  const int ri = raw.id();
  const bool rx = t.node(xi).requires_grad;
  const bool rr = t.node(ri).requires_grad;
  const std::vector<double>* mesh = &mesh_;
  const Var both = t.push(
      std::move(out), b, p, rx || rr,
      [=](Tape& tp, int self) {
        const Matrix& adj = tp.adjoint(self);
        const Matrix& xval = tp.node(xi).value;
        const int m = static_cast<int>(mesh->size()) - 2;
        Matrix* ax = rx ? &tp.adjoint(xi) : nullptr;
        std::vector<double> dw, dcum;
        Matrix draw = Matrix::Zero(m, d);
        for (int c = 0; c < d; ++c) {
          dw.assign(static_cast<std::size_t>(m) + 2, 0.0);
          dcum.assign(static_cast<std::size_t>(m) + 2, 0.0);
          double dbeta = 0.0;
          for (int r = 0; r < b; ++r) {
            const auto& e = cache->evals[static_cast<std::size_t>(r) * d + c];
            const double ay0 = adj(r, c);
            const double as0 = adj(r, d + c);
            double g0 = ay0;
            double g1 = as0;
            double g2 = 0.0;
            double ax0 = ay0 * e.dy + as0 * e.d2y;
            for (int k = 0; k < p; ++k) {
              const Eigen::Index r1 = static_cast<Eigen::Index>(1 + 2 * k) * b + r;
              const Eigen::Index r2 = r1 + b;
              const double x1 = xval(r1, c);
              const double x2 = xval(r2, c);
              const double ay1 = adj(r1, c), ay2 = adj(r2, c);
              const double as1 = adj(r1, d + c), as2 = adj(r2, d + c);
              g1 += ay1 * x1 + ay2 * x2;
              g2 += ay2 * x1 * x1 + as1 * x1 + as2 * x2;
              ax0 += ay1 * e.d2y * x1 + ay2 * e.d2y * x2;
              if (ax != nullptr) {
                (*ax)(r1, c) += ay1 * e.dy + 2.0 * ay2 * e.d2y * x1 + as1 * e.d2y;
                (*ax)(r2, c) += ay2 * e.dy + as2 * e.d2y;
              }
            }
            if (ax != nullptr) (*ax)(r, c) += ax0;
            if (rr) nonlinear::accumulate_adjoint(e, xval(r, c), *mesh, a, g0, g1, g2, dw, dcum, dbeta);
          }
          if (rr) {
            nonlinear::finish_knot_adjoints(*mesh, dcum, dw);
            nonlinear::raw_adjoint(cache->densities[static_cast<std::size_t>(c)], *mesh, dw, dbeta,
                                   std::span<double>(draw.col(c).data(), static_cast<std::size_t>(m)));
          }
        }
        if (rr) tp.adjoint(ri) += draw;
      },
      "nonlinear");
  logdet = ad::add(logdet, ad::rowsum(ad::log(ad::cols(both, d, d))));
  return replace_active(x, ad::cols(both, 0, d));
}

void NonlinearLayer::inverse(const ParameterStore& params, Matrix& x) const {
  const auto rv = params.block(raw_);
  for (int c = 0; c < active(); ++c) {
    const auto den =
        nonlinear::realize(std::span<const double>(rv.col(c).data(), static_cast<std::size_t>(rv.rows())), mesh_);
    for (Eigen::Index r = 0; r < x.rows(); ++r) x(r, c) = nonlinear::invert(x(r, c), den, mesh_, half_width_);
  }
}

void NonlinearLayer::initialize(ParameterStore& params, std::mt19937_64&) const {
  auto rv = params.block(raw_);
  rv.setZero();
  rv.row(rv.rows() - 1).setConstant(nonlinear::identity_boundary_raw(mesh_));
}

}  // namespace krnet
