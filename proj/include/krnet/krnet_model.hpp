#pragma once

#include "krnet/flow_config.hpp"
#include "krnet/layers.hpp"
#include "krnet/parameter_store.hpp"
#include "krnet/tape.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

namespace krnet {

struct FlowOutput {
  ad::Var z;
  ad::Var logdet;  ///< B x 1 jet of log|det df/dx|
};

/// The invertible map z = f(x): outer stages of rotation, scale-and-bias and
/// affine coupling layers with a squeeze after each stage, followed by the
/// component-wise nonlinear layer.
class KRnetModel {
 public:
  explicit KRnetModel(FlowConfig config);
  KRnetModel(KRnetModel&&) = default;
  KRnetModel& operator=(KRnetModel&&) = default;
  KRnetModel(const KRnetModel&) = delete;
  KRnetModel& operator=(const KRnetModel&) = delete;

  const FlowConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }

  /// Identity map with Glorot-Gaussian hidden weights drawn from `seed`.
  void initialize(std::uint64_t seed);

  FlowOutput forward(ad::Tape& tape, ad::Var x) const;
  /// Value-only forward on rows of x. Returns z; `logdet` gets one entry per row.
  Matrix forward_values(const Matrix& x, Vector& logdet) const;
  Matrix inverse(const Matrix& z) const;

  std::size_t count_parameters() const { return params_.size(); }

  void save(const std::filesystem::path& path) const;
  static KRnetModel load(const std::filesystem::path& path);

 private:
  FlowConfig config_;
  ParameterStore params_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// Closed-form parameter count
///   m d + sum_k (N_NN,k L + d_k^2 + 2 d_k L)
/// where N_NN,k is the per-coupling network size of stage k, d_k its active
/// dimension, m the nonlinear interior knots. Terms of disabled layers drop.
std::size_t dof_formula(const FlowConfig& config);

}  // namespace krnet
