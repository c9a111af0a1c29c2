#pragma once

#include "krnet/flow_config.hpp"
#include "krnet/fp_solver.hpp"

#include <map>
#include <random>
#include <string>
#include <vector>

namespace krnet {

/// Solves A S + S A^T = 2 D by a dense Kronecker-form solve. Throws
/// SingularError when lambda_i(A) + lambda_j(A) = 0 for some i, j.
Matrix lyapunov_solve(const Matrix& a, const Matrix& d);

/// log N(x; mean, cov) over DualScalar.
struct Gaussian {
  Vector mean;
  Matrix cov;
  Matrix precision;
  Matrix chol;  ///< lower Cholesky factor of cov
  double log_norm = 0.0;

  Gaussian(Vector mean, Matrix cov);
  double log_pdf(std::span<const double> x) const;
  ad::DualScalar log_pdf(std::span<const ad::DualScalar> x) const;
  Matrix sample(std::size_t n, std::mt19937_64& rng) const;
};

struct GaussianMixture {
  std::vector<double> weights;
  std::vector<Gaussian> components;

  double log_pdf(std::span<const double> x) const;
  /// log-sum-exp over components in dual arithmetic.
  ad::DualScalar log_pdf(std::span<const ad::DualScalar> x) const;
  Matrix sample(std::size_t n, std::mt19937_64& rng) const;
  /// grad log p and its divergence (Laplacian of log p), by forward AD.
  DriftEval score(std::span<const double> x) const;
};

/// mu(x) = -A x with D; stationary law N(0, Sigma) with A Sigma + Sigma A^T = 2 D.
struct OUProblem {
  Matrix a;
  Matrix d;
  Matrix sigma;
};

OUProblem make_ou(const Matrix& a, const Matrix& d);
FPProblem ou_fp_problem(const OUProblem& ou, std::string name);
/// Drift = grad log of the mixture, D = I: the mixture itself is stationary.
FPProblem mixture_fp_problem(GaussianMixture mixture, std::string name);

/// log p(x) = -x^2 - log(sqrt(pi)), the stationary law of dX = -X dt + dW.
double one_d_exact(double x);

/// Standard problem with its default flow and solver settings.
struct CatalogEntry {
  FPProblem problem;
  FlowConfig flow;
  TrainConfig train;
  std::string description;
};

/// ou1d, ou2d, mix2d, mix4d, mix8d.
const std::map<std::string, CatalogEntry>& problem_catalog();
const CatalogEntry& catalog_entry(const std::string& name);

// ---------------------------------------------------------------------------

/// I.i.d. Logistic(0, s) components restricted to the set B where every
/// adjacent pair satisfies ||R_{gamma, theta_j} [x_j, x_{j+1}]||_2 >= C.
class LogisticHoleDataset {
 public:
  static constexpr double kOutsideLogPdf = -1e300;

  struct Batch {
    Matrix x;
    std::size_t draws = 0;
    double acceptance_rate() const { return draws == 0 ? 0.0 : static_cast<double>(x.rows()) / draws; }
  };

  struct RefLogPdf {
    double value = kOutsideLogPdf;
    bool inside = false;
  };

  LogisticHoleDataset(int dim = 8, double gamma = 3.0, double c = 7.6, double scale = 2.0);

  int dim() const { return dim_; }
  double gamma() const { return gamma_; }
  double hole() const { return c_; }
  double scale() const { return s_; }

  bool inside(std::span<const double> x) const;
  /// Rejection sampling of n accepted points.
  Batch sample(std::size_t n, std::mt19937_64& rng) const;
  /// Estimates E[I_B] from `draws` unconstrained draws and stores it.
  double estimate_acceptance(std::size_t draws, std::mt19937_64& rng);
  void set_acceptance(double p);
  double acceptance() const { return acceptance_; }

  double log_logistic(double x) const;
  /// sum log rho(x_i) - log E[I_B] inside B, sentinel with flag outside.
  RefLogPdf ref_log_pdf(std::span<const double> x) const;
  Vector ref_log_pdf(const Matrix& x) const;
  /// -E[log p_ref] estimated over accepted samples.
  double ref_entropy(const Matrix& accepted) const;

 private:
  int dim_;
  double gamma_;
  double c_;
  double s_;
  double acceptance_ = 0.0;
  std::vector<Eigen::Matrix2d> r_;
};

}  // namespace krnet
