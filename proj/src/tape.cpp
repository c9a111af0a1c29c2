#include "krnet/tape.hpp"

#include "krnet/elementwise.hpp"
#include "krnet/errors.hpp"

#include <cmath>
#include <memory>

namespace krnet::ad {

namespace {

using Array = Eigen::ArrayXXd;

auto rows_of(Matrix& m, int c, int b) { return m.middleRows(static_cast<Eigen::Index>(c) * b, b); }
auto rows_of(const Matrix& m, int c, int b) { return m.middleRows(static_cast<Eigen::Index>(c) * b, b); }

void require_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ConfigError("operands recorded on different tapes");
}

std::string shape_of(Var v) {
  return "(batch " + std::to_string(v.batch()) + ", dirs " + std::to_string(v.dirs()) + ", cols " +
         std::to_string(v.cols()) + ")";
}

/// Value-only node lifted to `dirs` directions with zero derivative channels.
Var promote(Var x, int dirs) {
  if (x.dirs() == dirs) return x;
  if (x.dirs() != 0) throw ConfigError("cannot promote jet " + shape_of(x));
  auto& t = x.tape();
  const int b = x.batch();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(1 + 2 * dirs) * b, x.cols());
  out.topRows(b) = x.value();
  const int xi = x.id();
  return t.push(std::move(out), b, dirs, t.node(xi).requires_grad,
                [xi, b](Tape& tp, int self) { tp.accumulate(xi, tp.adjoint(self).topRows(b)); }, "promote");
}

struct ElementDerivs {
  Array g0, g1, g2, g3;
};

template <class F>
Var unary(Var x, F&& f, const char* op) {
  auto& t = x.tape();
  const int b = x.batch();
  const int p = x.dirs();
  const Matrix& xv = x.value();
  auto d = std::make_shared<ElementDerivs>(f(xv.topRows(b).array()));
  Matrix out(xv.rows(), xv.cols());
  out.topRows(b) = d->g0.matrix();
  for (int k = 0; k < p; ++k) {
    const auto x1 = rows_of(xv, 1 + 2 * k, b).array();
    const auto x2 = rows_of(xv, 2 + 2 * k, b).array();
    rows_of(out, 1 + 2 * k, b).array() = d->g1 * x1;
    rows_of(out, 2 + 2 * k, b).array() = d->g2 * x1.square() + d->g1 * x2;
  }
  const int xi = x.id();
  return t.push(
      std::move(out), b, p, t.node(xi).requires_grad,
      [xi, b, p, d](Tape& tp, int self) {
        const Matrix& a = tp.adjoint(self);
        const Matrix& xval = tp.node(xi).value;
        Matrix& ax = tp.adjoint(xi);
        auto av = ax.topRows(b).array();
        av += a.topRows(b).array() * d->g1;
        for (int k = 0; k < p; ++k) {
          const auto x1 = rows_of(xval, 1 + 2 * k, b).array();
          const auto x2 = rows_of(xval, 2 + 2 * k, b).array();
          const auto a1 = rows_of(a, 1 + 2 * k, b).array();
          const auto a2 = rows_of(a, 2 + 2 * k, b).array();
          av += a1 * d->g2 * x1 + a2 * (d->g3 * x1.square() + d->g2 * x2);
          rows_of(ax, 1 + 2 * k, b).array() += a1 * d->g1 + 2.0 * a2 * d->g2 * x1;
          rows_of(ax, 2 + 2 * k, b).array() += a2 * d->g1;
        }
      },
      op);
}

}  // namespace

// ---------------------------------------------------------------------------

const Matrix& Var::value() const { return tape_->node(id_).value; }
int Var::batch() const { return tape_->node(id_).batch; }
int Var::dirs() const { return tape_->node(id_).dirs; }
int Var::cols() const { return static_cast<int>(tape_->node(id_).value.cols()); }
Eigen::Block<const Matrix> Var::channel(int c) const { return rows_of(value(), c, batch()); }
double Var::scalar() const {
  const auto& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw ConfigError("scalar() on non-scalar node " + shape_of(*this));
  return v(0, 0);
}

Var Tape::push(Matrix value, int batch, int dirs, bool requires_grad, Backward backward, const char* op) {
  // A finite sum almost always means finite entries; confirm only on failure.
  if (!std::isfinite(value.sum()) && !value.allFinite()) throw NumericError(std::string("non-finite value produced by ") + op, layer_);
  Node n;
  n.value = std::move(value);
  n.batch = batch;
  n.dirs = dirs;
  n.layer = layer_;
  n.requires_grad = record_ && requires_grad;
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Matrix value, int batch, int dirs) {
  if (value.rows() != static_cast<Eigen::Index>(1 + 2 * dirs) * batch) {
    throw ConfigError("constant rows do not match batch and dirs");
  }
  return push(std::move(value), batch, dirs, false, nullptr, "constant");
}

Var Tape::input(const Matrix& x, const Matrix& directions) {
  const int b = static_cast<int>(x.rows());
  const int p = static_cast<int>(directions.cols());
  if (p > 0 && directions.rows() != x.cols()) throw ConfigError("direction length does not match input width");
  Matrix v = Matrix::Zero(static_cast<Eigen::Index>(1 + 2 * p) * b, x.cols());
  v.topRows(b) = x;
  for (int k = 0; k < p; ++k) {
    rows_of(v, 1 + 2 * k, b).rowwise() = directions.col(k).transpose();
  }
  return push(std::move(v), b, p, false, nullptr, "input");
}

Var Tape::param(const ParameterStore& store, int block) {
  if (store_ != nullptr && store_ != &store) throw ConfigError("tape already bound to another parameter store");
  store_ = &store;
  if (param_leaf_.size() < static_cast<std::size_t>(store.num_blocks())) {
    param_leaf_.resize(static_cast<std::size_t>(store.num_blocks()), -1);
  }
  int& leaf = param_leaf_[static_cast<std::size_t>(block)];
  if (leaf >= 0) return {this, leaf};
  const auto& info = store.info(block);
  Var v = push(Matrix(store.block(block)), info.rows, 0, true, [](Tape&, int) {}, "param");
  node(v.id()).param_block = block;
  leaf = v.id();
  return v;
}

Matrix& Tape::adjoint(int id) {
  Node& n = node(id);
  if (n.adjoint.size() == 0) n.adjoint = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.adjoint;
}

void Tape::backward(Var loss) {
  if (!record_) throw ConfigError("backward() on a tape that does not record");
  if (&loss.tape() != this) throw ConfigError("loss recorded on another tape");
  const auto& lv = node(loss.id()).value;
  if (lv.rows() != 1 || lv.cols() != 1) throw ConfigError("backward() needs a 1x1 loss");
  for (auto& n : nodes_) n.adjoint.resize(0, 0);
  adjoint(loss.id())(0, 0) = 1.0;
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = node(i);
    if (!n.requires_grad || n.adjoint.size() == 0 || !n.backward) continue;
    n.backward(*this, i);
  }
}

void Tape::accumulate_param_gradient(std::span<double> grad) const {
  if (store_ == nullptr) return;
  if (grad.size() != store_->size()) throw ConfigError("gradient buffer size mismatch");
  for (std::size_t b = 0; b < param_leaf_.size(); ++b) {
    const int leaf = param_leaf_[b];
    if (leaf < 0) continue;
    const Node& n = node(leaf);
    if (n.adjoint.size() == 0) continue;
    const auto& info = store_->info(static_cast<int>(b));
    Eigen::Map<Matrix> g(grad.data() + info.offset, info.rows, info.cols);
    g += n.adjoint;
  }
}

std::vector<double> Tape::param_gradient() const {
  std::vector<double> g(store_ ? store_->size() : 0, 0.0);
  accumulate_param_gradient(g);
  return g;
}

// ---------------------------------------------------------------------------

Var matmul(Var x, Var w) {
  require_same_tape(x, w);
  if (w.dirs() != 0) throw ConfigError("matmul right operand must be constant in x");
  if (x.cols() != w.value().rows()) throw ConfigError("matmul shape mismatch " + shape_of(x));
  auto& t = x.tape();
  Matrix out = x.value() * w.value();
  const int xi = x.id();
  const int wi = w.id();
  const bool rx = t.node(xi).requires_grad;
  const bool rw = t.node(wi).requires_grad;
  return t.push(
      std::move(out), x.batch(), x.dirs(), rx || rw,
      [xi, wi, rx, rw](Tape& tp, int self) {
        const Matrix& a = tp.adjoint(self);
        if (rx) tp.accumulate(xi, a * tp.node(wi).value.transpose());
        if (rw) tp.accumulate(wi, tp.node(xi).value.transpose() * a);
      },
      "matmul");
}

Var affine(Var x, Var w, Var bias) {
  require_same_tape(x, w);
  require_same_tape(x, bias);
  if (w.dirs() != 0) throw ConfigError("affine weight must be constant in x");
  if (x.cols() != w.value().rows()) throw ConfigError("affine shape mismatch " + shape_of(x));
  if (bias.batch() != 1 || bias.dirs() != 0 || bias.cols() != w.cols()) {
    throw ConfigError("affine bias must be a 1 x cols row, got " + shape_of(bias));
  }
  auto& t = x.tape();
  const int b = x.batch();
  Matrix out(x.value().rows(), w.cols());
  out.noalias() = x.value() * w.value();
  out.topRows(b).rowwise() += bias.value().row(0);
  const int xi = x.id();
  const int wi = w.id();
  const int bi = bias.id();
  const bool rx = t.node(xi).requires_grad;
  const bool rw = t.node(wi).requires_grad;
  const bool rb = t.node(bi).requires_grad;
  return t.push(
      std::move(out), b, x.dirs(), rx || rw || rb,
      [xi, wi, bi, rx, rw, rb, b](Tape& tp, int self) {
        const Matrix& a = tp.adjoint(self);
        if (rx) tp.accumulate(xi, a * tp.node(wi).value.transpose());
        if (rw) tp.accumulate(wi, tp.node(xi).value.transpose() * a);
        if (rb) tp.accumulate(bi, a.topRows(b).colwise().sum());
      },
      "affine");
}

Var add(Var x, Var y) {
  require_same_tape(x, y);
  auto& t = x.tape();
  if (x.cols() != y.cols()) throw ConfigError("add column mismatch " + shape_of(x) + " vs " + shape_of(y));
  // Canonical order: x carries at least as much structure as y.
  if (y.batch() > x.batch() || (y.batch() == x.batch() && y.dirs() > x.dirs())) std::swap(x, y);
  const int b = x.batch();
  const int xi = x.id();
  const int yi = y.id();
  const bool rx = t.node(xi).requires_grad;
  const bool ry = t.node(yi).requires_grad;
  if (y.batch() == b && y.dirs() == x.dirs()) {
    Matrix out = x.value() + y.value();
    return t.push(
        std::move(out), b, x.dirs(), rx || ry,
        [xi, yi, rx, ry](Tape& tp, int self) {
          const Matrix& a = tp.adjoint(self);
          if (rx) tp.accumulate(xi, a);
          if (ry) tp.accumulate(yi, a);
        },
        "add");
  }
  Matrix out = x.value();
  if (y.batch() == b && y.dirs() == 0) {
    out.topRows(b) += y.value();
    return t.push(
        std::move(out), b, x.dirs(), rx || ry,
        [xi, yi, rx, ry, b](Tape& tp, int self) {
          const Matrix& a = tp.adjoint(self);
          if (rx) tp.accumulate(xi, a);
          if (ry) tp.accumulate(yi, a.topRows(b));
        },
        "add");
  }
  if (y.batch() == 1 && y.dirs() == 0) {
    out.topRows(b).rowwise() += y.value().row(0);
    return t.push(
        std::move(out), b, x.dirs(), rx || ry,
        [xi, yi, rx, ry, b](Tape& tp, int self) {
          const Matrix& a = tp.adjoint(self);
          if (rx) tp.accumulate(xi, a);
          if (ry) tp.accumulate(yi, a.topRows(b).colwise().sum());
        },
        "add");
  }
  throw ConfigError("add cannot broadcast " + shape_of(y) + " onto " + shape_of(x));
}

Var sub(Var x, Var y) { return add(x, scale(y, -1.0)); }

Var mul(Var x, Var y) {
  require_same_tape(x, y);
  if (x.batch() != y.batch() || x.cols() != y.cols()) {
    throw ConfigError("mul shape mismatch " + shape_of(x) + " vs " + shape_of(y));
  }
  const int p = std::max(x.dirs(), y.dirs());
  x = promote(x, p);
  y = promote(y, p);
  auto& t = x.tape();
  const int b = x.batch();
  const Matrix& xv = x.value();
  const Matrix& yv = y.value();
  Matrix out(xv.rows(), xv.cols());
  const auto x0 = xv.topRows(b).array();
  const auto y0 = yv.topRows(b).array();
  out.topRows(b).array() = x0 * y0;
  for (int k = 0; k < p; ++k) {
    const auto x1 = rows_of(xv, 1 + 2 * k, b).array();
    const auto x2 = rows_of(xv, 2 + 2 * k, b).array();
    const auto y1 = rows_of(yv, 1 + 2 * k, b).array();
    const auto y2 = rows_of(yv, 2 + 2 * k, b).array();
    rows_of(out, 1 + 2 * k, b).array() = x1 * y0 + x0 * y1;
    rows_of(out, 2 + 2 * k, b).array() = x2 * y0 + 2.0 * x1 * y1 + x0 * y2;
  }
  const int xi = x.id();
  const int yi = y.id();
  const bool rx = t.node(xi).requires_grad;
  const bool ry = t.node(yi).requires_grad;
  return t.push(
      std::move(out), b, p, rx || ry,
      [xi, yi, rx, ry, b, p](Tape& tp, int self) {
        const Matrix& a = tp.adjoint(self);
        const Matrix& xv2 = tp.node(xi).value;
        const Matrix& yv2 = tp.node(yi).value;
        const auto av = a.topRows(b).array();
        const auto x0a = xv2.topRows(b).array();
        const auto y0a = yv2.topRows(b).array();
        if (rx) {
          Matrix& ax = tp.adjoint(xi);
          auto ax0 = ax.topRows(b).array();
          ax0 += av * y0a;
          for (int k = 0; k < p; ++k) {
            const auto a1 = rows_of(a, 1 + 2 * k, b).array(), a2 = rows_of(a, 2 + 2 * k, b).array();
            const auto y1 = rows_of(yv2, 1 + 2 * k, b).array(), y2 = rows_of(yv2, 2 + 2 * k, b).array();
            ax0 += a1 * y1 + a2 * y2;
            rows_of(ax, 1 + 2 * k, b).array() += a1 * y0a + 2.0 * a2 * y1;
            rows_of(ax, 2 + 2 * k, b).array() += a2 * y0a;
          }
        }
        if (ry) {
          Matrix& ay = tp.adjoint(yi);
          auto ay0 = ay.topRows(b).array();
          ay0 += av * x0a;
          for (int k = 0; k < p; ++k) {
            const auto a1 = rows_of(a, 1 + 2 * k, b).array(), a2 = rows_of(a, 2 + 2 * k, b).array();
            const auto x1 = rows_of(xv2, 1 + 2 * k, b).array(), x2 = rows_of(xv2, 2 + 2 * k, b).array();
            ay0 += a1 * x1 + a2 * x2;
            rows_of(ay, 1 + 2 * k, b).array() += a1 * x0a + 2.0 * a2 * x1;
            rows_of(ay, 2 + 2 * k, b).array() += a2 * x0a;
          }
        }
      },
      "mul");
}

Var mul_row(Var x, Var row) {
  require_same_tape(x, row);
  if (row.batch() != 1 || row.dirs() != 0 || row.cols() != x.cols()) {
    throw ConfigError("mul_row needs a 1 x cols row, got " + shape_of(row));
  }
  auto& t = x.tape();
  Matrix out = (x.value().array().rowwise() * row.value().row(0).array()).matrix();
  const int xi = x.id();
  const int ri = row.id();
  const bool rx = t.node(xi).requires_grad;
  const bool rr = t.node(ri).requires_grad;
  return t.push(
      std::move(out), x.batch(), x.dirs(), rx || rr,
      [xi, ri, rx, rr](Tape& tp, int self) {
        const Matrix& a = tp.adjoint(self);
        if (rx) tp.adjoint(xi).array() += a.array().rowwise() * tp.node(ri).value.row(0).array();
        if (rr) tp.adjoint(ri) += (a.array() * tp.node(xi).value.array()).colwise().sum().matrix();
      },
      "mul_row");
}

Var scale(Var x, double c) {
  auto& t = x.tape();
  const int xi = x.id();
  return t.push(
      c * x.value(), x.batch(), x.dirs(), t.node(xi).requires_grad,
      [xi, c](Tape& tp, int self) { tp.accumulate(xi, c * tp.adjoint(self)); }, "scale");
}

Var add_scalar(Var x, double c) {
  auto& t = x.tape();
  const int xi = x.id();
  Matrix out = x.value();
  out.topRows(x.batch()).array() += c;
  return t.push(
      std::move(out), x.batch(), x.dirs(), t.node(xi).requires_grad,
      [xi](Tape& tp, int self) { tp.accumulate(xi, tp.adjoint(self)); }, "add_scalar");
}

Var tanh(Var x) {
  return unary(
      x,
      [](const Array& v) {
        ElementDerivs d;
        d.g0 = fast_tanh(v);
        d.g1 = 1.0 - d.g0.square();
        d.g2 = -2.0 * d.g0 * d.g1;
        d.g3 = -2.0 * d.g1.square() + 4.0 * d.g0.square() * d.g1;
        return d;
      },
      "tanh");
}

Var exp(Var x) {
  return unary(
      x,
      [](const Array& v) {
        ElementDerivs d;
        d.g0 = v.exp();
        d.g1 = d.g0;
        d.g2 = d.g0;
        d.g3 = d.g0;
        return d;
      },
      "exp");
}

Var log(Var x) {
  return unary(
      x,
      [](const Array& v) {
        ElementDerivs d;
        d.g0 = v.log();
        d.g1 = v.inverse();
        d.g2 = -d.g1.square();
        d.g3 = 2.0 * d.g1.cube();
        return d;
      },
      "log");
}

Var square(Var x) {
  return unary(
      x,
      [](const Array& v) {
        ElementDerivs d;
        d.g0 = v.square();
        d.g1 = 2.0 * v;
        d.g2 = Array::Constant(v.rows(), v.cols(), 2.0);
        d.g3 = Array::Zero(v.rows(), v.cols());
        return d;
      },
      "square");
}

Var relu(Var x) {
  return unary(
      x,
      [](const Array& v) {
        ElementDerivs d;
        d.g0 = v.max(0.0);
        d.g1 = (v > 0.0).cast<double>();
        d.g2 = Array::Zero(v.rows(), v.cols());
        d.g3 = d.g2;
        return d;
      },
      "relu");
}

Var cols(Var x, int start, int count) {
  if (start < 0 || count < 0 || start + count > x.cols()) throw ConfigError("column slice out of range");
  auto& t = x.tape();
  const int xi = x.id();
  return t.push(
      x.value().middleCols(start, count), x.batch(), x.dirs(), t.node(xi).requires_grad,
      [xi, start, count](Tape& tp, int self) { tp.adjoint(xi).middleCols(start, count) += tp.adjoint(self); },
      "cols");
}

Var hcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ConfigError("hcat of nothing");
  auto& t = parts.front().tape();
  const int b = parts.front().batch();
  int p = 0;
  int total = 0;
  for (const auto& v : parts) {
    if (v.batch() != b) throw ConfigError("hcat batch mismatch");
    p = std::max(p, v.dirs());
    total += v.cols();
  }
  std::vector<int> ids;
  std::vector<int> offsets;
  Matrix out(static_cast<Eigen::Index>(1 + 2 * p) * b, total);
  bool rg = false;
  int off = 0;
  for (auto v : parts) {
    v = promote(v, p);
    out.middleCols(off, v.cols()) = v.value();
    ids.push_back(v.id());
    offsets.push_back(off);
    rg = rg || t.node(v.id()).requires_grad;
    off += v.cols();
  }
  return t.push(
      std::move(out), b, p, rg,
      [ids, offsets](Tape& tp, int self) {
        const Matrix& a = tp.adjoint(self);
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (!tp.node(ids[i]).requires_grad) continue;
          Matrix& ai = tp.adjoint(ids[i]);
          ai += a.middleCols(offsets[i], ai.cols());
        }
      },
      "hcat");
}

Var rowsum(Var x) {
  auto& t = x.tape();
  const int xi = x.id();
  return t.push(
      x.value().rowwise().sum(), x.batch(), x.dirs(), t.node(xi).requires_grad,
      [xi](Tape& tp, int self) {
        Matrix& ax = tp.adjoint(xi);
        ax.colwise() += tp.adjoint(self).col(0);
      },
      "rowsum");
}

Var sum_value(Var x) {
  auto& t = x.tape();
  const int xi = x.id();
  const int b = x.batch();
  Matrix out(1, 1);
  out(0, 0) = x.value().topRows(b).sum();
  return t.push(
      std::move(out), 1, 0, t.node(xi).requires_grad,
      [xi, b](Tape& tp, int self) { tp.adjoint(xi).topRows(b).array() += tp.adjoint(self)(0, 0); },
      "sum_value");
}

Var combine_channels(Var x, const Matrix& coef) {
  const int b = x.batch();
  const int ch = x.channels();
  if (x.cols() != 1 || coef.rows() != b || coef.cols() != ch) throw ConfigError("combine_channels shape mismatch");
  auto& t = x.tape();
  Matrix out = Matrix::Zero(b, 1);
  for (int c = 0; c < ch; ++c) out.col(0).array() += coef.col(c).array() * x.channel(c).col(0).array();
  const int xi = x.id();
  return t.push(
      std::move(out), b, 0, t.node(xi).requires_grad,
      [xi, b, ch, coef](Tape& tp, int self) {
        const Matrix& a = tp.adjoint(self);
        Matrix& ax = tp.adjoint(xi);
        for (int c = 0; c < ch; ++c) rows_of(ax, c, b).col(0).array() += coef.col(c).array() * a.col(0).array();
      },
      "combine_channels");
}

Var sum_log_abs(Var r) {
  if (r.dirs() != 0) throw ConfigError("sum_log_abs expects a value-only node");
  auto& t = r.tape();
  Matrix out(1, 1);
  out(0, 0) = r.value().array().abs().log().sum();
  const int ri = r.id();
  return t.push(
      std::move(out), 1, 0, t.node(ri).requires_grad,
      [ri](Tape& tp, int self) {
        tp.adjoint(ri).array() += tp.adjoint(self)(0, 0) * tp.node(ri).value.array().inverse();
      },
      "sum_log_abs");
}

}  // namespace krnet::ad
