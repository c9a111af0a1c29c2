#pragma once

#include "krnet/adam.hpp"
#include "krnet/autodiff.hpp"
#include "krnet/krnet_model.hpp"

#include <functional>
#include <random>

namespace krnet {

/// Standard Gaussian prior on the latent space.
struct GaussianPrior {
  static double log_pdf(const Eigen::Ref<const Eigen::RowVectorXd>& z);
  static Vector log_pdf(const Matrix& z);
  /// Recorded B x 1 jet of the log-density of a jet z.
  static ad::Var log_pdf(ad::Var z);
  static Matrix sample(std::size_t n, int d, std::mt19937_64& rng);
};

/// log p_X(x) = log p_Z(f(x)) + log|det df/dx| as a B x 1 jet.
ad::Var log_pdf(ad::Tape& tape, const KRnetModel& model, ad::Var x);
Vector log_pdf(const KRnetModel& model, const Matrix& x);

struct SampleResult {
  Matrix x;
  std::size_t redrawn = 0;  ///< rows rejected as non-finite and drawn again
};

/// x = f^{-1}(z), z from the prior. Non-finite rows are redrawn.
SampleResult sample(const KRnetModel& model, std::size_t n, std::mt19937_64& rng);

/// -(1/N) sum log p_X(x_i).
double cross_entropy_loss(const KRnetModel& model, const Matrix& batch);
ad::LossAndGradient cross_entropy_gradient(const KRnetModel& model, const Matrix& batch);

struct Metrics {
  double kl = 0.0;
  double kl_stderr = 0.0;  ///< sample sigma / sqrt(N)
  double cross_entropy = 0.0;
  double ref_entropy = 0.0;
  double delta = 0.0;
  std::size_t samples = 0;
};

/// Monte Carlo KL(p_ref || p_model) over reference-distributed rows of
/// `validation`, given log p_ref at those rows.
Metrics kl_divergence_mc(const Vector& ref_log_pdf, const KRnetModel& model, const Matrix& validation);

/// kl / ref_entropy; throws when the entropy is not positive.
double relative_error(double kl, double ref_entropy);

struct DensityTrainConfig {
  int epochs = 100;
  std::size_t batch_size = 2000;
  std::uint64_t seed = 0;
};

/// Minibatch Adam on the cross entropy; `on_epoch(epoch, mean batch loss)`, 1-based,
/// runs after every epoch.
void train_density(KRnetModel& model, const Matrix& data, const DensityTrainConfig& config, Adam& adam,
                   const std::function<void(int, double)>& on_epoch = {});

}  // namespace krnet
