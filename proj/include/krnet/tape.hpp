#pragma once

#include "krnet/parameter_store.hpp"

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

/// Reverse-mode tape over batched second-order jets.
///
/// Every node holds a (channels * batch) x cols matrix. Channel 0 is the
/// value; for each of `dirs` spatial directions v_k there follow two channels,
/// the first directional derivative v_k.grad and the second directional
/// derivative v_k^T H v_k. Each row of a channel block is one sample, so a
/// node is a batch of DualScalar payloads stored channel-major. A node with
/// dirs == 0 carries values only (parameters, losses, constants).
///
/// Recording the forward-mode jets on the reverse tape makes gradients of
/// expressions that contain spatial derivatives exact.
namespace krnet::ad {

class Tape;

class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }

  const Matrix& value() const;
  int batch() const;
  int dirs() const;
  int cols() const;
  int channels() const { return 1 + 2 * dirs(); }
  /// Rows [c * batch, (c + 1) * batch) of the value.
  Eigen::Block<const Matrix> channel(int c) const;
  /// Value of a 1x1 node.
  double scalar() const;

 private:
  friend class Tape;
  Var(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  struct Node {
    Matrix value;
    Matrix adjoint;  ///< empty until something flows into it
    int batch = 0;
    int dirs = 0;
    bool requires_grad = false;
    int param_block = -1;
    int layer = -1;
    Backward backward;
  };

  /// With record == false no backward closures are stored (evaluation only).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  /// Node that carries no gradient.
  Var constant(Matrix value, int batch, int dirs = 0);
  /// Batch of points (rows of x) seeded along the columns of `directions`
  /// (n x P). Pass an n x 0 matrix for value-only evaluation.
  Var input(const Matrix& x, const Matrix& directions);
  /// Leaf for one parameter block. Repeated calls return the same node.
  Var param(const ParameterStore& store, int block);

  /// Appends a node computed by a custom op. `backward` reads adjoint(self)
  /// and accumulates into its parents.
  Var push(Matrix value, int batch, int dirs, bool requires_grad, Backward backward,
           const char* op = "op");

  /// Reverse sweep from a 1x1 node seeded with adjoint 1.
  void backward(Var loss);
  /// Adds d(loss)/d(theta) into `grad`, laid out like the parameter store.
  void accumulate_param_gradient(std::span<double> grad) const;
  std::vector<double> param_gradient() const;

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  /// Adjoint storage of `id`, zero-allocated on first use.
  Matrix& adjoint(int id);
  bool has_adjoint(int id) const { return node(id).adjoint.size() > 0; }
  /// adjoint(id) += g, assigning instead when nothing has flowed in yet.
  template <class E>
  void accumulate(int id, const Eigen::MatrixBase<E>& g) {
    Matrix& a = node(id).adjoint;
    if (a.size() == 0) {
      a.noalias() = g;
    } else {
      a.noalias() += g;
    }
  }

  /// Layer index attached to subsequently pushed nodes (for error reports).
  void set_layer(int layer) { layer_ = layer; }
  int layer() const { return layer_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::deque<Node> nodes_;
  std::vector<int> param_leaf_;
  const ParameterStore* store_ = nullptr;
  bool record_;
  int layer_ = -1;
};

// ---------------------------------------------------------------------------
// Primitive ops. Shapes: a "jet" has batch B and dirs P; a "row" has batch 1,
// dirs 0 and broadcasts across samples.

/// X (any) times constant-in-x matrix W (dirs 0): every channel maps linearly.
Var matmul(Var x, Var w);
/// matmul(x, w) plus a 1 x cols bias row on the value channel, as one node.
Var affine(Var x, Var w, Var bias);
/// Elementwise sum. `y` may be a same-shape jet, a value-only batch
/// (derivative channels zero) or a row broadcast over the batch.
Var add(Var x, Var y);
Var sub(Var x, Var y);
/// Elementwise product of same-shaped jets (either may be value-only).
Var mul(Var x, Var y);
/// Product with a row broadcast over samples and channels.
Var mul_row(Var x, Var row);
Var scale(Var x, double c);
Var add_scalar(Var x, double c);

Var tanh(Var x);
Var exp(Var x);
Var log(Var x);
Var square(Var x);
Var relu(Var x);

Var cols(Var x, int start, int count);
Var hcat(const std::vector<Var>& parts);
/// Sum across columns, per channel: (ch*B) x 1.
Var rowsum(Var x);
/// Sum of every entry of the value channel: 1x1.
Var sum_value(Var x);
/// out_b = sum_c coef(b, c) * x.channel(c)(b): contracts a one-column jet
/// into a value-only B x 1 node.
Var combine_channels(Var x, const Matrix& coef);
/// Sum of log|r| over every entry of a value-only node: 1x1.
Var sum_log_abs(Var r);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }

}  // namespace krnet::ad
