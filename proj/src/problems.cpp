#include "krnet/problems.hpp"

#include "krnet/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>

namespace krnet {

using ad::DualScalar;

Matrix lyapunov_solve(const Matrix& a, const Matrix& d) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n || d.rows() != n || d.cols() != n) throw ConfigError("Lyapunov solve needs square A and D of equal size");
  const Eigen::VectorXcd lambda = a.eigenvalues();
  const double tol = 1e-12 * std::max(1.0, lambda.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (std::abs(lambda(i) + lambda(j)) <= tol) {
        throw SingularError("Lyapunov equation is singular: lambda_i + lambda_j = 0");
      }
    }
  }
  // vec(A S) = (I kron A) vec S and vec(S A^T) = (A kron I) vec S, column-major.
  const Matrix id = Matrix::Identity(n, n);
  Matrix k = Matrix::Zero(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      k.block(i * n, j * n, n, n) += id(i, j) * a + a(i, j) * id;
    }
  }
  const Matrix rhs2 = 2.0 * d;
  const Vector rhs = Eigen::Map<const Vector>(rhs2.data(), n * n);
  const Vector s = k.fullPivLu().solve(rhs);
  Matrix sigma = Eigen::Map<const Matrix>(s.data(), n, n);
  return 0.5 * (sigma + sigma.transpose());
}

// ---------------------------------------------------------------------------

Gaussian::Gaussian(Vector m, Matrix c) : mean(std::move(m)), cov(std::move(c)) {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) throw ConfigError("covariance shape mismatch");
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw ConfigError("covariance must be symmetric positive definite");
  chol = llt.matrixL();
  precision = llt.solve(Matrix::Identity(cov.rows(), cov.cols()));
  const double logdet = 2.0 * chol.diagonal().array().log().sum();
  log_norm = -0.5 * static_cast<double>(mean.size()) * std::log(2.0 * std::numbers::pi) - 0.5 * logdet;
}

double Gaussian::log_pdf(std::span<const double> x) const {
  const Vector y = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size())) - mean;
  return log_norm - 0.5 * y.dot(precision * y);
}

DualScalar Gaussian::log_pdf(std::span<const DualScalar> x) const {
  const auto n = static_cast<Eigen::Index>(x.size());
  std::vector<DualScalar> y(x.size());
  for (Eigen::Index i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] - mean(i);
  DualScalar q;
  for (Eigen::Index i = 0; i < n; ++i) {
    DualScalar row;
    for (Eigen::Index j = 0; j < n; ++j) row += precision(i, j) * y[static_cast<std::size_t>(j)];
    q += y[static_cast<std::size_t>(i)] * row;
  }
  return log_norm - 0.5 * q;
}

Matrix Gaussian::sample(std::size_t n, std::mt19937_64& rng) const {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix z(static_cast<Eigen::Index>(n), mean.size());
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) = g(rng);
  Matrix x = z * chol.transpose();
  x.rowwise() += mean.transpose();
  return x;
}

double GaussianMixture::log_pdf(std::span<const double> x) const {
  double top = -std::numeric_limits<double>::infinity();
  std::vector<double> l(components.size());
  for (std::size_t k = 0; k < components.size(); ++k) {
    l[k] = std::log(weights[k]) + components[k].log_pdf(x);
    top = std::max(top, l[k]);
  }
  double s = 0.0;
  for (double v : l) s += std::exp(v - top);
  return top + std::log(s);
}

DualScalar GaussianMixture::log_pdf(std::span<const DualScalar> x) const {
  std::vector<DualScalar> l(components.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < components.size(); ++k) {
    l[k] = std::log(weights[k]) + components[k].log_pdf(x);
    top = std::max(top, l[k].value);
  }
  DualScalar s;
  for (const auto& v : l) s += exp(v - top);
  return top + log(s);
}

Matrix GaussianMixture::sample(std::size_t n, std::mt19937_64& rng) const {
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  const auto d = components.front().mean.size();
  Matrix x(static_cast<Eigen::Index>(n), d);
  for (Eigen::Index i = 0; i < x.rows(); ++i) x.row(i) = components[pick(rng)].sample(1, rng).row(0);
  return x;
}

DriftEval GaussianMixture::score(std::span<const double> x) const {
  const auto d = x.size();
  DriftEval out;
  out.mu.resize(static_cast<Eigen::Index>(d));
  std::vector<DualScalar> xs(d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) xs[j] = DualScalar::variable(x[j], i == j ? 1.0 : 0.0);
    const DualScalar l = log_pdf(xs);
    out.mu(static_cast<Eigen::Index>(i)) = l.first;
    out.divergence += l.second;
  }
  return out;
}

// ---------------------------------------------------------------------------

OUProblem make_ou(const Matrix& a, const Matrix& d) {
  const Eigen::VectorXcd lambda = a.eigenvalues();
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (!(lambda(i).real() > 0.0)) throw ConfigError("OU drift matrix needs eigenvalues with positive real part");
  }
  return {a, d, lyapunov_solve(a, d)};
}

FPProblem ou_fp_problem(const OUProblem& ou, std::string name) {
  FPProblem p;
  p.name = std::move(name);
  p.dim = static_cast<int>(ou.a.rows());
  p.diffusion = ou.d;
  const Matrix a = ou.a;
  const double trace = a.trace();
  p.drift = [a, trace](std::span<const double> x) {
    DriftEval e;
    e.mu = -a * Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
    e.divergence = -trace;
    return e;
  };
  auto g = std::make_shared<Gaussian>(Vector::Zero(p.dim), ou.sigma);
  p.exact_log_pdf = [g](std::span<const DualScalar> x) { return g->log_pdf(x); };
  p.sample_exact = [g](std::size_t n, std::mt19937_64& rng) { return g->sample(n, rng); };
  p.validate();
  return p;
}

FPProblem mixture_fp_problem(GaussianMixture mixture, std::string name) {
  if (mixture.components.empty() || mixture.weights.size() != mixture.components.size()) {
    throw ConfigError("mixture needs one weight per component");
  }
  double total = 0.0;
  for (double w : mixture.weights) {
    if (!(w > 0.0)) throw ConfigError("mixture weights must be positive");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("mixture weights must sum to 1");
  FPProblem p;
  p.name = std::move(name);
  p.dim = static_cast<int>(mixture.components.front().mean.size());
  p.diffusion = Matrix::Identity(p.dim, p.dim);
  auto mix = std::make_shared<GaussianMixture>(std::move(mixture));
  p.drift = [mix](std::span<const double> x) { return mix->score(x); };
  p.exact_log_pdf = [mix](std::span<const DualScalar> x) { return mix->log_pdf(x); };
  p.sample_exact = [mix](std::size_t n, std::mt19937_64& rng) { return mix->sample(n, rng); };
  p.validate();
  return p;
}

double one_d_exact(double x) { return -x * x - 0.5 * std::log(std::numbers::pi); }

// ---------------------------------------------------------------------------

namespace {

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

Matrix block_diagonal(const Matrix& base, const std::vector<double>& factors) {
  const Eigen::Index b = base.rows();
  const auto n = static_cast<Eigen::Index>(factors.size()) * b;
  Matrix m = Matrix::Zero(n, n);
  for (std::size_t k = 0; k < factors.size(); ++k) {
    m.block(static_cast<Eigen::Index>(k) * b, static_cast<Eigen::Index>(k) * b, b, b) = factors[k] * base;
  }
  return m;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

const Matrix& mix_sigma1() {
  static const Matrix m = mat2(6.12186142, -0.26372569, -0.26372569, 1.81664391);
  return m;
}
const Matrix& mix_sigma2() {
  static const Matrix m = mat2(2.8828528, -0.70234742, -0.70234742, 2.69199911);
  return m;
}

GaussianMixture two_component(Vector m1, Vector m2, const std::vector<double>& factors) {
  GaussianMixture g;
  g.weights = {0.55, 0.45};
  g.components.emplace_back(std::move(m1), block_diagonal(mix_sigma1(), factors));
  g.components.emplace_back(std::move(m2), block_diagonal(mix_sigma2(), factors));
  return g;
}

FlowConfig fp_flow(int dim, std::vector<int> partitions, int depth, int width, NetLayout layout) {
  FlowConfig f;
  f.dim = dim;
  f.partitions = std::move(partitions);
  f.depth = depth;
  f.width = width;
  f.layout = layout;
  f.activation = Activation::tanh;
  f.nonlinear_elements = 32;
  f.nonlinear_half_width = 6.0;
  return f;
}

TrainConfig fp_train(std::size_t n, std::size_t m, int epochs, int steps, double lr, double box) {
  TrainConfig t;
  t.collocation = n;
  t.batch_size = m;
  t.epochs = epochs;
  t.adaptive_steps = steps;
  t.learning_rate = lr;
  t.box = {{-box, box}};
  return t;
}

std::map<std::string, CatalogEntry> build_catalog() {
  std::map<std::string, CatalogEntry> c;

  {
    CatalogEntry e;
    e.problem = ou_fp_problem(make_ou(Matrix::Identity(1, 1), Matrix::Constant(1, 1, 0.5)), "ou1d");
    e.flow = fp_flow(1, {1}, 8, 48, NetLayout::two_layer);
    e.flow.use_rotation = false;
    e.flow.use_nonlinear = false;
    e.train = fp_train(3000, 500, 300, 1, 2e-4, 5.0);
    e.train.eval_every = 10;
    e.description = "1D Ornstein-Uhlenbeck, mu = -x, D = 1/2, p = exp(-x^2)/sqrt(pi)";
    c.emplace("ou1d", std::move(e));
  }
  {
    CatalogEntry e;
    const Matrix a = mat2(1.37096037, -0.48306187, -0.48306187, 1.62903963);
    const Matrix d = mat2(22.52429192, -6.55821381, -6.55821381, 12.68972);
    e.problem = ou_fp_problem(make_ou(a, d), "ou2d");
    e.flow = fp_flow(2, {1, 1}, 8, 48, NetLayout::two_layer);
    e.train = fp_train(60000, 1000, 300, 2, 2e-4, 6.0);
    e.description = "2D Ornstein-Uhlenbeck with a Lyapunov-equation covariance";
    c.emplace("ou2d", std::move(e));
  }
  {
    CatalogEntry e;
    e.problem = mixture_fp_problem(two_component(vec({-1, -1}), vec({2, 2}), {1.0}), "mix2d");
    e.flow = fp_flow(2, {1, 1}, 8, 48, NetLayout::two_layer);
    e.train = fp_train(60000, 1000, 200, 5, 1e-4, 5.0);
    e.description = "2D bimodal Gaussian mixture, D = I";
    c.emplace("mix2d", std::move(e));
  }
  {
    CatalogEntry e;
    e.problem = mixture_fp_problem(two_component(vec({-1, -1, -0.3, -0.3}), vec({2, 2, 0.6, 0.6}), {1.0, 0.6}),
                                   "mix4d");
    e.flow = fp_flow(4, {2, 1, 1}, 8, 120, NetLayout::wide_narrow);
    e.train = fp_train(100000, 500, 1, 16, 1e-4, 6.0);
    e.description = "4D bimodal Gaussian mixture, covariances blockdiag(S, 0.6 S)";
    c.emplace("mix4d", std::move(e));
  }
  {
    CatalogEntry e;
    e.problem = mixture_fp_problem(two_component(vec({-1, -1, -0.3, -0.3, -0.4, -0.4, -1.6, -1.6}),
                                                 vec({2, 2, 0.6, 0.6, 0.8, 0.8, 2.3, 2.3}), {1.0, 0.6, 0.8, 1.2}),
                                   "mix8d");
    e.flow = fp_flow(8, {3, 3, 2}, 10, 160, NetLayout::wide_narrow);
    e.train = fp_train(320000, 4000, 1, 120, 1e-4, 6.0);
    e.description = "8D bimodal Gaussian mixture, covariances blockdiag(S, 0.6 S, 0.8 S, 1.2 S)";
    c.emplace("mix8d", std::move(e));
  }
  return c;
}

}  // namespace

const std::map<std::string, CatalogEntry>& problem_catalog() {
  static const std::map<std::string, CatalogEntry> catalog = build_catalog();
  return catalog;
}

const CatalogEntry& catalog_entry(const std::string& name) {
  const auto& c = problem_catalog();
  const auto it = c.find(name);
  if (it == c.end()) {
    std::string known;
    for (const auto& [k, v] : c) known += (known.empty() ? "" : ", ") + k;
    throw ConfigError("unknown problem '" + name + "' (known: " + known + ")");
  }
  return it->second;
}

// ---------------------------------------------------------------------------

LogisticHoleDataset::LogisticHoleDataset(int dim, double gamma, double c, double scale)
    : dim_(dim), gamma_(gamma), c_(c), s_(scale) {
  if (dim < 2) throw ConfigError("logistic-hole data needs d >= 2");
  if (!(gamma > 0.0) || !(scale > 0.0) || c < 0.0) throw ConfigError("logistic-hole parameters out of range");
  for (int j = 1; j < dim; ++j) {
    const double theta = (j % 2 == 0) ? std::numbers::pi / 4.0 : 3.0 * std::numbers::pi / 4.0;
    Eigen::Matrix2d rot;
    rot << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    r_.push_back(Eigen::DiagonalMatrix<double, 2>(gamma, 1.0) * rot);
  }
}

bool LogisticHoleDataset::inside(std::span<const double> x) const {
  for (int j = 0; j + 1 < dim_; ++j) {
    const Eigen::Vector2d pair(x[static_cast<std::size_t>(j)], x[static_cast<std::size_t>(j) + 1]);
    if ((r_[static_cast<std::size_t>(j)] * pair).norm() < c_) return false;
  }
  return true;
}

LogisticHoleDataset::Batch LogisticHoleDataset::sample(std::size_t n, std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Batch b;
  b.x.resize(static_cast<Eigen::Index>(n), dim_);
  std::vector<double> x(static_cast<std::size_t>(dim_));
  std::size_t accepted = 0;
  while (accepted < n) {
    for (auto& v : x) {
      double p = u(rng);
      while (p <= 0.0) p = u(rng);
      v = s_ * std::log(p / (1.0 - p));
    }
    ++b.draws;
    if (!inside(x)) continue;
    for (int k = 0; k < dim_; ++k) b.x(static_cast<Eigen::Index>(accepted), k) = x[static_cast<std::size_t>(k)];
    ++accepted;
  }
  return b;
}

double LogisticHoleDataset::estimate_acceptance(std::size_t draws, std::mt19937_64& rng) {
  if (draws == 0) throw ConfigError("need at least one draw");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(static_cast<std::size_t>(dim_));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < draws; ++i) {
    for (auto& v : x) {
      double p = u(rng);
      while (p <= 0.0) p = u(rng);
      v = s_ * std::log(p / (1.0 - p));
    }
    if (inside(x)) ++hits;
  }
  if (hits == 0) throw NumericError("no draw fell inside the constrained set");
  acceptance_ = static_cast<double>(hits) / static_cast<double>(draws);
  return acceptance_;
}

void LogisticHoleDataset::set_acceptance(double p) {
  if (!(p > 0.0 && p <= 1.0)) throw ConfigError("acceptance rate must lie in (0, 1]");
  acceptance_ = p;
}

double LogisticHoleDataset::log_logistic(double x) const {
  const double t = std::abs(x) / s_;
  return -t - std::log(s_) - 2.0 * std::log1p(std::exp(-t));
}

LogisticHoleDataset::RefLogPdf LogisticHoleDataset::ref_log_pdf(std::span<const double> x) const {
  if (!(acceptance_ > 0.0)) throw ConfigError("acceptance rate not estimated");
  RefLogPdf r;
  if (!inside(x)) return r;
  double s = 0.0;
  for (double v : x) s += log_logistic(v);
  r.value = s - std::log(acceptance_);
  r.inside = true;
  return r;
}

Vector LogisticHoleDataset::ref_log_pdf(const Matrix& x) const {
  Vector out(x.rows());
  std::vector<double> row(static_cast<std::size_t>(dim_));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (int k = 0; k < dim_; ++k) row[static_cast<std::size_t>(k)] = x(i, k);
    out(i) = ref_log_pdf(row).value;
  }
  return out;
}

double LogisticHoleDataset::ref_entropy(const Matrix& accepted) const {
  const Vector lp = ref_log_pdf(accepted);
  double total = 0.0;
  Eigen::Index n = 0;
  for (Eigen::Index i = 0; i < lp.size(); ++i) {
    if (lp(i) <= kOutsideLogPdf) continue;
    total += lp(i);
    ++n;
  }
  if (n == 0) throw ConfigError("no sample inside the constrained set");
  return -total / static_cast<double>(n);
}

}  // namespace krnet
