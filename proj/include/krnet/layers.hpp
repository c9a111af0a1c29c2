#pragma once

#include "krnet/flow_config.hpp"
#include "krnet/parameter_store.hpp"
#include "krnet/tape.hpp"

#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace krnet {

/// One bijection of the flow. Layers act on the leading `active` columns of a
/// full-width batch and copy the rest through unchanged.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string_view kind() const = 0;
  int index() const { return index_; }
  int active() const { return active_; }

  /// Records y = layer(x); adds this layer's log|det J| to `logdet` (B x 1).
  virtual ad::Var forward(ad::Tape& tape, const ParameterStore& params, ad::Var x, ad::Var& logdet) const = 0;
  /// In-place inverse on a batch (rows are samples).
  virtual void inverse(const ParameterStore& params, Matrix& x) const = 0;
  /// Identity initialization; `rng` feeds Glorot-Gaussian weights.
  virtual void initialize(ParameterStore& params, std::mt19937_64& rng) const = 0;

  /// Evaluation-only forward: x in place, per-row log-det added to `logdet`.
  void forward_values(const ParameterStore& params, Matrix& x, Vector& logdet) const;

 protected:
  Layer(int index, int active) : index_(index), active_(active) {}

 private:
  int index_;
  int active_;
};

/// x_hat = a * x + b on the active dims.
class ScaleBiasLayer final : public Layer {
 public:
  ScaleBiasLayer(int index, int active, ParameterStore& params, const std::string& prefix);
  std::string_view kind() const override { return "scale_bias"; }
  ad::Var forward(ad::Tape&, const ParameterStore&, ad::Var x, ad::Var& logdet) const override;
  void inverse(const ParameterStore&, Matrix& x) const override;
  void initialize(ParameterStore&, std::mt19937_64&) const override;
  int scale_block() const { return a_; }
  int bias_block() const { return b_; }

 private:
  int a_;
  int b_;
};

/// x_hat = (L U) x on the active block. One packed n x n block stores the
/// strictly lower part of the unit lower factor L and the upper factor U.
class RotationLayer final : public Layer {
 public:
  RotationLayer(int index, int active, ParameterStore& params, const std::string& prefix);
  std::string_view kind() const override { return "rotation"; }
  ad::Var forward(ad::Tape&, const ParameterStore&, ad::Var x, ad::Var& logdet) const override;
  void inverse(const ParameterStore&, Matrix& x) const override;
  void initialize(ParameterStore&, std::mt19937_64&) const override;
  int lu_block() const { return lu_; }

  /// Dense L * U from packed storage.
  static Matrix dense(const Eigen::Ref<const Matrix>& packed);

 private:
  int lu_;
};

/// Marks the end of an outer stage; the trailing `squeezed` active dims are
/// frozen from here on. Carries no parameters and no volume change.
class SqueezeLayer final : public Layer {
 public:
  SqueezeLayer(int index, int active, int squeezed) : Layer(index, active), squeezed_(squeezed) {}
  std::string_view kind() const override { return "squeeze"; }
  ad::Var forward(ad::Tape&, const ParameterStore&, ad::Var x, ad::Var&) const override { return x; }
  void inverse(const ParameterStore&, Matrix&) const override {}
  void initialize(ParameterStore&, std::mt19937_64&) const override {}
  int squeezed() const { return squeezed_; }
  int remaining() const { return active() - squeezed_; }

 private:
  int squeezed_;
};

/// Dense map of a coupling network.
struct DenseBlock {
  int weight = -1;  ///< in x out
  int bias = -1;    ///< 1 x out
  bool activated = true;
};

/// Updated part: y2 = x2 * (1 + alpha tanh(s(x1))) + e^beta * tanh(t(x1)).
class AffineCouplingLayer final : public Layer {
 public:
  AffineCouplingLayer(int index, int active, int frozen_begin, int frozen_count, int updated_begin,
                      int updated_count, int width, NetLayout layout, Activation activation, double alpha,
                      ParameterStore& params, const std::string& prefix);
  std::string_view kind() const override { return "affine_coupling"; }
  ad::Var forward(ad::Tape&, const ParameterStore&, ad::Var x, ad::Var& logdet) const override;
  void inverse(const ParameterStore&, Matrix& x) const override;
  void initialize(ParameterStore&, std::mt19937_64&) const override;

  int frozen_begin() const { return frozen_begin_; }
  int frozen_count() const { return frozen_count_; }
  int updated_begin() const { return updated_begin_; }
  int updated_count() const { return updated_count_; }
  double alpha() const { return alpha_; }
  const std::vector<DenseBlock>& dense() const { return dense_; }
  int head_weight() const { return head_.weight; }
  int head_bias() const { return head_.bias; }
  int beta_block() const { return beta_; }

  /// Plain evaluation of (s, t) on the frozen inputs; each B x updated.
  std::pair<Matrix, Matrix> scale_shift(const ParameterStore& params, const Matrix& frozen) const;

 private:
  int frozen_begin_, frozen_count_, updated_begin_, updated_count_;
  double alpha_;
  Activation activation_;
  std::vector<DenseBlock> dense_;
  DenseBlock head_;
  int beta_;
};

/// Component-wise monotone map on every dimension (see nonlinear_map.hpp).
class NonlinearLayer final : public Layer {
 public:
  NonlinearLayer(int index, int active, int interior_knots, double half_width, ParameterStore& params,
                 const std::string& prefix);
  std::string_view kind() const override { return "nonlinear"; }
  ad::Var forward(ad::Tape&, const ParameterStore&, ad::Var x, ad::Var& logdet) const override;
  void inverse(const ParameterStore&, Matrix& x) const override;
  void initialize(ParameterStore&, std::mt19937_64&) const override;

  const std::vector<double>& mesh() const { return mesh_; }
  double half_width() const { return half_width_; }
  int raw_block() const { return raw_; }

 private:
  std::vector<double> mesh_;
  double half_width_;
  int raw_;
};

}  // namespace krnet
