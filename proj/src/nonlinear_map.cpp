#include "krnet/nonlinear_map.hpp"

#include "krnet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace krnet::nonlinear {

namespace {

constexpr double kGrading = 0.5;

double h(const std::vector<double>& mesh, int i) {
  return mesh[static_cast<std::size_t>(i) + 1] - mesh[static_cast<std::size_t>(i)];
}

/// Half the sum of the two elements adjacent to interior knot i.
double g(const std::vector<double>& mesh, int i) { return 0.5 * (h(mesh, i - 1) + h(mesh, i)); }

double boundary_weight(const std::vector<double>& mesh) {
  const int m = static_cast<int>(mesh.size()) - 2;
  return 0.5 * (h(mesh, 0) + h(mesh, m));
}

}  // namespace

std::vector<double> graded_mesh(int interior_knots) {
  if (interior_knots < 1) throw ConfigError("nonlinear mesh needs at least one interior knot");
  const int n = interior_knots + 1;
  std::vector<double> s(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    s[static_cast<std::size_t>(i)] = t + kGrading / (2.0 * std::numbers::pi) * std::sin(2.0 * std::numbers::pi * t);
  }
  s.front() = 0.0;
  s.back() = 1.0;
  return s;
}

double max_boundary_density(const std::vector<double>& mesh) { return 1.0 / boundary_weight(mesh); }

double identity_boundary_raw(const std::vector<double>& mesh) {
  const double q = boundary_weight(mesh);
  return std::log(q / (1.0 - q));
}

Density realize(std::span<const double> raw, const std::vector<double>& mesh) {
  const int m = static_cast<int>(mesh.size()) - 2;
  if (static_cast<int>(raw.size()) != m) throw ConfigError("nonlinear raw parameter count mismatch");
  Density d;
  d.v.assign(static_cast<std::size_t>(m) + 1, 0.0);
  for (int i = 1; i < m; ++i) d.v[static_cast<std::size_t>(i)] = std::exp(raw[static_cast<std::size_t>(i) - 1]);
  d.v[static_cast<std::size_t>(m)] = 1.0;
  const double rho = raw[static_cast<std::size_t>(m) - 1];
  d.sigma = 1.0 / (1.0 + std::exp(-rho));
  d.beta_s = max_boundary_density(mesh) * d.sigma;
  d.mass = 0.0;
  for (int i = 1; i <= m; ++i) d.mass += d.v[static_cast<std::size_t>(i)] * g(mesh, i);
  d.scale = (1.0 - d.beta_s * boundary_weight(mesh)) / d.mass;
  d.w.assign(static_cast<std::size_t>(m) + 2, 0.0);
  d.w.front() = d.beta_s;
  d.w.back() = d.beta_s;
  for (int i = 1; i <= m; ++i) d.w[static_cast<std::size_t>(i)] = d.scale * d.v[static_cast<std::size_t>(i)];
  d.cum.assign(static_cast<std::size_t>(m) + 2, 0.0);
  for (int i = 0; i <= m; ++i) {
    const auto k = static_cast<std::size_t>(i);
    d.cum[k + 1] = d.cum[k] + 0.5 * (d.w[k] + d.w[k + 1]) * h(mesh, i);
  }
  return d;
}

double trapezoid_mass(const Density& density, const std::vector<double>& mesh) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < mesh.size(); ++i) {
    total += 0.5 * (density.w[i] + density.w[i + 1]) * (mesh[i + 1] - mesh[i]);
  }
  return total;
}

Evaluation evaluate(double x, const Density& d, const std::vector<double>& mesh, double a) {
  Evaluation e;
  if (x < -a) {
    e.region = -1;
    e.y = d.beta_s * (x + a) - a;
    e.dy = d.beta_s;
    return e;
  }
  if (x > a) {
    e.region = 1;
    e.y = d.beta_s * (x - a) + a;
    e.dy = d.beta_s;
    return e;
  }
  const int m = static_cast<int>(mesh.size()) - 2;
  const double s = (x + a) / (2.0 * a);
  auto it = std::upper_bound(mesh.begin(), mesh.end(), s);
  int i = static_cast<int>(it - mesh.begin()) - 1;
  i = std::clamp(i, 0, m);
  const auto k = static_cast<std::size_t>(i);
  const double hi = h(mesh, i);
  const double tau = s - mesh[k];
  const double slope = (d.w[k + 1] - d.w[k]) / hi;
  const double f = 0.5 * slope * tau * tau + d.w[k] * tau + d.cum[k];
  e.element = i;
  e.tau = tau;
  e.y = 2.0 * a * f - a;
  e.dy = slope * tau + d.w[k];
  e.d2y = slope / (2.0 * a);
  return e;
}

double invert(double y, const Density& d, const std::vector<double>& mesh, double a) {
  if (y < -a) return (y + a) / d.beta_s - a;
  if (y > a) return (y - a) / d.beta_s + a;
  const int m = static_cast<int>(mesh.size()) - 2;
  const double f = (y + a) / (2.0 * a);
  auto it = std::upper_bound(d.cum.begin(), d.cum.end(), f);
  int i = static_cast<int>(it - d.cum.begin()) - 1;
  i = std::clamp(i, 0, m);
  const auto k = static_cast<std::size_t>(i);
  const double hi = h(mesh, i);
  const double quad = 0.5 * (d.w[k + 1] - d.w[k]) / hi;
  const double rhs = f - d.cum[k];
  // quad * tau^2 + w_i * tau - rhs = 0, root in [0, h_i]; cancellation-free form.
  const double disc = std::max(d.w[k] * d.w[k] + 4.0 * quad * rhs, 0.0);
  double tau = 2.0 * rhs / (d.w[k] + std::sqrt(disc));
  tau = std::clamp(tau, 0.0, hi);
  return 2.0 * a * (mesh[k] + tau) - a;
}

void accumulate_adjoint(const Evaluation& e, double x, const std::vector<double>& mesh, double a, double g0,
                        double g1, double g2, std::vector<double>& dw, std::vector<double>& dcum, double& dbeta) {
  if (e.region != 0) {
    const double shift = e.region < 0 ? x + a : x - a;
    dbeta += g0 * shift + g1;
    return;
  }
  const auto k = static_cast<std::size_t>(e.element);
  const double hi = h(mesh, e.element);
  const double tau = e.tau;
  // y = 2a F - a
  dw[k] += g0 * 2.0 * a * (tau - 0.5 * tau * tau / hi);
  dw[k + 1] += g0 * 2.0 * a * (0.5 * tau * tau / hi);
  dcum[k] += g0 * 2.0 * a;
  // y' = p(s)
  dw[k] += g1 * (1.0 - tau / hi);
  dw[k + 1] += g1 * (tau / hi);
  // y'' = p'(s) / 2a
  dw[k] -= g2 / (2.0 * a * hi);
  dw[k + 1] += g2 / (2.0 * a * hi);
}

void finish_knot_adjoints(const std::vector<double>& mesh, const std::vector<double>& dcum, std::vector<double>& dw) {
  // cum_i = sum_{k<i} (w_k + w_{k+1}) h_k / 2
  const int n = static_cast<int>(mesh.size());
  double suffix = 0.0;  // sum_{i > k} dcum_i
  for (int k = n - 1; k >= 0; --k) {
    const auto kk = static_cast<std::size_t>(k);
    if (k + 1 < n) {
      // w_k appears in element k (k < i) and element k-1 (k - 1 < i).
      dw[kk] += 0.5 * h(mesh, k) * suffix;
    }
    suffix += dcum[kk];
    if (k >= 1) dw[kk] += 0.5 * h(mesh, k - 1) * suffix;
  }
}

void raw_adjoint(const Density& d, const std::vector<double>& mesh, const std::vector<double>& dw, double dbeta,
                 std::span<double> draw) {
  const int m = static_cast<int>(mesh.size()) - 2;
  double dc = 0.0;
  for (int i = 1; i <= m; ++i) dc += dw[static_cast<std::size_t>(i)] * d.v[static_cast<std::size_t>(i)];
  for (int i = 1; i < m; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double dv = dw[k] * d.scale - dc * d.scale * g(mesh, i) / d.mass;
    draw[k - 1] += dv * d.v[k];
  }
  const double dbeta_total = dw.front() + dw.back() + dbeta - dc * boundary_weight(mesh) / d.mass;
  draw[static_cast<std::size_t>(m) - 1] += dbeta_total * max_boundary_density(mesh) * d.sigma * (1.0 - d.sigma);
}

}  // namespace krnet::nonlinear
