#pragma once

#include <span>
#include <vector>

/// Component-wise monotone map built from a piecewise-linear density on
/// [0, 1] (quadratic CDF F) stretched to [-a, a], with linear tails of slope
/// beta_s outside.
namespace krnet::nonlinear {

/// Knots 0 = s_0 < ... < s_{m+1} = 1, graded by a cosine profile so that
/// elements are finest around s = 1/2.
std::vector<double> graded_mesh(int interior_knots);

/// Raw parameters per component: m - 1 free logits followed by one raw
/// boundary value. The last interior weight has a pinned logit of 0, which
/// removes the scale redundancy of the normalization.
struct Density {
  std::vector<double> w;    ///< knot densities w_0..w_{m+1}; w_0 = w_{m+1} = beta_s
  std::vector<double> cum;  ///< F(s_i)
  std::vector<double> v;    ///< unnormalized interior weights v_1..v_m (v[0] unused)
  double beta_s = 1.0;
  double sigma = 0.5;   ///< logistic(raw boundary)
  double scale = 1.0;   ///< c with w_i = c * v_i
  double mass = 1.0;    ///< S = sum_i v_i g_i
};

/// Upper bound of beta_s that keeps the interior scale positive.
double max_boundary_density(const std::vector<double>& mesh);
/// Raw boundary value giving beta_s = 1 (with zero logits: identity map).
double identity_boundary_raw(const std::vector<double>& mesh);

Density realize(std::span<const double> raw, const std::vector<double>& mesh);

/// Trapezoid integral of the realized density (== 1 up to rounding).
double trapezoid_mass(const Density& density, const std::vector<double>& mesh);

struct Evaluation {
  double y = 0.0;
  double dy = 0.0;   ///< H'(x)
  double d2y = 0.0;  ///< H''(x)
  int region = 0;    ///< -1 left tail, 0 interior, +1 right tail
  int element = 0;
  double tau = 0.0;  ///< offset of s inside its element
};

Evaluation evaluate(double x, const Density& density, const std::vector<double>& mesh, double half_width);
double invert(double y, const Density& density, const std::vector<double>& mesh, double half_width);

/// Accumulates, for one evaluation, d/dw of g0*H + g1*H' + g2*H'' into
/// knot adjoints `dw` (size m + 2) and the tail part into `dbeta`. The part
/// that flows through the cumulative sums is collected per element in
/// `dcum` (size m + 2) and resolved by `finish_knot_adjoints`.
void accumulate_adjoint(const Evaluation& e, double x, const std::vector<double>& mesh, double half_width,
                        double g0, double g1, double g2, std::vector<double>& dw, std::vector<double>& dcum,
                        double& dbeta);

/// Folds the cumulative-sum adjoints into the knot adjoints.
void finish_knot_adjoints(const std::vector<double>& mesh, const std::vector<double>& dcum, std::vector<double>& dw);

/// Chains knot adjoints (plus a direct beta_s adjoint) to the raw parameters.
void raw_adjoint(const Density& density, const std::vector<double>& mesh, const std::vector<double>& dw,
                 double dbeta, std::span<double> draw);

}  // namespace krnet::nonlinear
