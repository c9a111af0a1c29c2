#pragma once

#include "krnet/adam.hpp"
#include "krnet/autodiff.hpp"
#include "krnet/density.hpp"
#include "krnet/krnet_model.hpp"

#include <functional>
#include <random>
#include <string>
#include <vector>

namespace krnet {

struct DriftEval {
  Vector mu;
  double divergence = 0.0;
};

/// Steady Fokker-Planck problem with drift mu(x), constant diffusion D:
///   -div(p mu) + sum_ij D_ij d2p/dx_i dx_j = 0.
struct FPProblem {
  std::string name;
  int dim = 1;
  Matrix diffusion;
  std::function<DriftEval(std::span<const double>)> drift;
  /// Optional stationary solution (log-density) and a sampler for it.
  ad::DualFunction exact_log_pdf;
  std::function<Matrix(std::size_t, std::mt19937_64&)> sample_exact;

  bool has_exact() const { return static_cast<bool>(exact_log_pdf); }
  Vector exact_log_pdf_values(const Matrix& x) const;
  /// Throws ConfigError unless D is d x d, symmetric and positive semidefinite.
  void validate() const;
};

struct TrainConfig {
  std::size_t collocation = 3000;  ///< N
  std::size_t batch_size = 500;    ///< m
  int epochs = 300;                ///< N_e per adaptivity step
  int adaptive_steps = 1;          ///< N_adaptive
  double learning_rate = 2e-4;
  double residual_scale = 100.0;   ///< C_s
  /// Box of the uniform initial collocation set, one (lo, hi) per dimension
  /// or a single pair applied to all.
  std::vector<std::pair<double, double>> box{{-5.0, 5.0}};
  std::uint64_t seed = 0;
  std::size_t validation_size = 20000;
  /// Epoch interval of KL evaluations inside a step; 0 evaluates only at the
  /// end of each adaptivity step.
  int eval_every = 0;

  void validate(int dim) const;
  std::pair<double, double> bounds(int axis) const;
};

/// Residual r = C_s [ -grad p . mu - p div mu + tr(D H_p) ], contracted in the
/// eigenbasis D = sum_k lambda_k v_k v_k^T so that only d directional jets are
/// needed: tr(D H_p) = sum_k lambda_k v_k^T H_p v_k and
/// grad p . mu = sum_k (v_k . grad p)(v_k . mu).
class ResidualOperator {
 public:
  ResidualOperator(const FPProblem& problem, double residual_scale);

  const FPProblem& problem() const { return *problem_; }
  double scale() const { return scale_; }
  /// d x d matrix with the eigenvectors of D as columns.
  const Matrix& directions() const { return directions_; }
  const Vector& eigenvalues() const { return eigenvalues_; }

  /// Per-point contraction weights over the channels of a p-jet: B x (1 + 2d).
  Matrix coefficients(const Matrix& x) const;

  /// Residual of an arbitrary log-density written over DualScalar.
  double residual(const ad::DualFunction& log_p, std::span<const double> x) const;
  /// Same, from an explicit gradient and Hessian of p (independent check).
  double residual_dense(double p, const Vector& grad_p, const Matrix& hess_p, std::span<const double> x) const;

 private:
  const FPProblem* problem_;
  double scale_;
  Matrix directions_;
  Vector eigenvalues_;
};

/// Collocation points with their precomputed residual coefficients.
struct CollocationSet {
  Matrix points;
  Matrix coef;
  int origin = 0;  ///< 0: uniform box, k: sampled from the model after step k
};

CollocationSet make_collocation(Matrix points, const ResidualOperator& op, int origin);
Matrix uniform_points(std::size_t n, const TrainConfig& config, int dim, std::mt19937_64& rng);

/// Recorded B x 1 model residual at rows of x with coefficients `coef`.
ad::Var residual(ad::Tape& tape, const KRnetModel& model, const ResidualOperator& op, const Matrix& x,
                 const Matrix& coef);
Vector residual_values(const KRnetModel& model, const ResidualOperator& op, const Matrix& x);

/// (1/B) sum r^2 over rows, and its parameter gradient.
double residual_loss(const KRnetModel& model, const ResidualOperator& op, const CollocationSet& set);
ad::LossAndGradient residual_loss_gradient(const KRnetModel& model, const ResidualOperator& op, const Matrix& x,
                                           const Matrix& coef);

struct EpochRecord {
  int iteration = 0;  ///< adaptivity step k, 1-based
  int epoch = 0;      ///< 1-based within the step
  double loss = 0.0;  ///< mean minibatch loss
  bool has_metrics = false;
  Metrics metrics;
  double wall_seconds = 0.0;
};

struct StepRecord {
  int iteration = 0;
  bool has_metrics = false;
  Metrics metrics;
  std::size_t redrawn = 0;  ///< non-finite samples redrawn for the next set
  double final_loss = 0.0;
};

struct AddaHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  /// After training step k, before resampling.
  std::function<void(const StepRecord&, const KRnetModel&)> on_step;
};

struct AddaResult {
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;
};

/// Reference validation set drawn from the exact solution, with log p_ref.
struct Validation {
  Matrix points;
  Vector ref_log_pdf;
  bool empty() const { return points.rows() == 0; }
};
Validation make_validation(const FPProblem& problem, std::size_t n, std::uint64_t seed);

/// N_e epochs of n_b = N/m minibatch Adam steps, reshuffling every epoch.
/// On a non-finite loss or gradient the parameters are restored to the last
/// finite state and the NumericError is rethrown.
void train_epochs(KRnetModel& model, const ResidualOperator& op, const CollocationSet& set, const TrainConfig& config,
                  Adam& adam, std::mt19937_64& rng, int iteration, const Validation& validation, AddaResult& log,
                  const AddaHooks& hooks);

/// Adaptive loop: train on C_{k-1}, then replace the whole set by N samples of
/// the current model; Adam state carries over between steps.
AddaResult adda(KRnetModel& model, const FPProblem& problem, const TrainConfig& config, const AddaHooks& hooks = {});

}  // namespace krnet
