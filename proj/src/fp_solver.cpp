#include "krnet/fp_solver.hpp"

#include "krnet/errors.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <numeric>

namespace krnet {

namespace {

constexpr std::size_t kChunk = 256;

}  // namespace

Vector FPProblem::exact_log_pdf_values(const Matrix& x) const {
  if (!has_exact()) throw ConfigError("problem '" + name + "' has no exact solution");
  Vector out(x.rows());
  std::vector<ad::DualScalar> xs(static_cast<std::size_t>(dim));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (int k = 0; k < dim; ++k) xs[static_cast<std::size_t>(k)] = ad::DualScalar{x(i, k), 0.0, 0.0};
    out(i) = exact_log_pdf(xs).value;
  }
  return out;
}

void FPProblem::validate() const {
  if (dim < 1) throw ConfigError("problem dimension must be positive");
  if (diffusion.rows() != dim || diffusion.cols() != dim) throw ConfigError("diffusion matrix must be d x d");
  if ((diffusion - diffusion.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + diffusion.cwiseAbs().maxCoeff())) {
    throw ConfigError("diffusion matrix must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(diffusion);
  if (es.eigenvalues().minCoeff() < -1e-12 * (1.0 + es.eigenvalues().cwiseAbs().maxCoeff())) {
    throw ConfigError("diffusion matrix must be positive semidefinite");
  }
  if (!drift) throw ConfigError("problem '" + name + "' has no drift");
}

void TrainConfig::validate(int dim) const {
  if (collocation == 0 || batch_size == 0) throw ConfigError("collocation and batch sizes must be positive");
  if (collocation % batch_size != 0) throw ConfigError("collocation count N must be a multiple of the batch size m");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (adaptive_steps < 1) throw ConfigError("need at least one adaptivity step");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(residual_scale > 0.0)) throw ConfigError("residual scale C_s must be positive");
  if (box.size() != 1 && box.size() != static_cast<std::size_t>(dim)) {
    throw ConfigError("box needs one (lo, hi) pair or one per dimension");
  }
  for (const auto& [lo, hi] : box) {
    if (!(lo < hi)) throw ConfigError("box bounds must satisfy lo < hi");
  }
  if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
}

std::pair<double, double> TrainConfig::bounds(int axis) const {
  return box.size() == 1 ? box.front() : box.at(static_cast<std::size_t>(axis));
}

// ---------------------------------------------------------------------------

ResidualOperator::ResidualOperator(const FPProblem& problem, double residual_scale)
    : problem_(&problem), scale_(residual_scale) {
  problem.validate();
  if (!(residual_scale > 0.0)) throw ConfigError("residual scale C_s must be positive");
  Eigen::SelfAdjointEigenSolver<Matrix> es(problem.diffusion);
  directions_ = es.eigenvectors();
  eigenvalues_ = es.eigenvalues();
}

Matrix ResidualOperator::coefficients(const Matrix& x) const {
  const int d = problem_->dim;
  if (x.cols() != d) throw ConfigError("collocation points have the wrong dimension");
  Matrix coef(x.rows(), 1 + 2 * d);
  std::vector<double> row(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (int k = 0; k < d; ++k) row[static_cast<std::size_t>(k)] = x(i, k);
    const DriftEval de = problem_->drift(row);
    if (!de.mu.allFinite() || !std::isfinite(de.divergence)) {
      throw NumericError("non-finite drift at collocation point " + std::to_string(i));
    }
    coef(i, 0) = -scale_ * de.divergence;
    for (int k = 0; k < d; ++k) {
      coef(i, 1 + 2 * k) = -scale_ * directions_.col(k).dot(de.mu);
      coef(i, 2 + 2 * k) = scale_ * eigenvalues_(k);
    }
  }
  return coef;
}

double ResidualOperator::residual(const ad::DualFunction& log_p, std::span<const double> x) const {
  const int d = problem_->dim;
  const DriftEval de = problem_->drift(x);
  std::vector<ad::DualScalar> xs(static_cast<std::size_t>(d));
  double p = 0.0;
  double acc = 0.0;
  for (int k = 0; k < d; ++k) {
    for (int j = 0; j < d; ++j) {
      xs[static_cast<std::size_t>(j)] = ad::DualScalar::variable(x[static_cast<std::size_t>(j)], directions_(j, k));
    }
    const ad::DualScalar l = log_p(xs);
    p = std::exp(l.value);
    const double p1 = p * l.first;
    const double p2 = p * (l.second + l.first * l.first);
    acc += -directions_.col(k).dot(de.mu) * p1 + eigenvalues_(k) * p2;
  }
  acc -= p * de.divergence;
  const double r = scale_ * acc;
  if (!std::isfinite(r)) throw NumericError("non-finite residual");
  return r;
}

double ResidualOperator::residual_dense(double p, const Vector& grad_p, const Matrix& hess_p,
                                        std::span<const double> x) const {
  const DriftEval de = problem_->drift(x);
  const double trace = (problem_->diffusion.array() * hess_p.array()).sum();
  return scale_ * (-grad_p.dot(de.mu) - p * de.divergence + trace);
}

// ---------------------------------------------------------------------------

CollocationSet make_collocation(Matrix points, const ResidualOperator& op, int origin) {
  CollocationSet set;
  set.coef = op.coefficients(points);
  set.points = std::move(points);
  set.origin = origin;
  return set;
}

Matrix uniform_points(std::size_t n, const TrainConfig& config, int dim, std::mt19937_64& rng) {
  Matrix x(static_cast<Eigen::Index>(n), dim);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (int k = 0; k < dim; ++k) {
      const auto [lo, hi] = config.bounds(k);
      x(i, k) = lo + (hi - lo) * u(rng);
    }
  }
  return x;
}

ad::Var residual(ad::Tape& tape, const KRnetModel& model, const ResidualOperator& op, const Matrix& x,
                 const Matrix& coef) {
  const ad::Var in = tape.input(x, op.directions());
  const ad::Var p = ad::exp(log_pdf(tape, model, in));
  return ad::combine_channels(p, coef);
}

Vector residual_values(const KRnetModel& model, const ResidualOperator& op, const Matrix& x) {
  const Matrix coef = op.coefficients(x);
  Vector r(x.rows());
  for (Eigen::Index b = 0; b < x.rows(); b += static_cast<Eigen::Index>(kChunk)) {
    const Eigen::Index len = std::min<Eigen::Index>(static_cast<Eigen::Index>(kChunk), x.rows() - b);
    ad::Tape t(false);
    r.segment(b, len) = residual(t, model, op, x.middleRows(b, len), coef.middleRows(b, len)).value().col(0);
  }
  return r;
}

double residual_loss(const KRnetModel& model, const ResidualOperator& op, const CollocationSet& set) {
  return residual_values(model, op, set.points).squaredNorm() / static_cast<double>(set.points.rows());
}

ad::LossAndGradient residual_loss_gradient(const KRnetModel& model, const ResidualOperator& op, const Matrix& x,
                                           const Matrix& coef) {
  if (x.rows() == 0) throw ConfigError("empty batch");
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  return ad::grad_params_chunked(
      [&](ad::Tape& t, std::size_t begin, std::size_t len) {
        const auto b = static_cast<Eigen::Index>(begin);
        const auto l = static_cast<Eigen::Index>(len);
        const ad::Var r = residual(t, model, op, x.middleRows(b, l), coef.middleRows(b, l));
        return ad::scale(ad::sum_value(ad::square(r)), inv_n);
      },
      model.params(), static_cast<std::size_t>(x.rows()), kChunk);
}

Validation make_validation(const FPProblem& problem, std::size_t n, std::uint64_t seed) {
  Validation v;
  if (!problem.has_exact() || !problem.sample_exact || n < 2) return v;
  std::mt19937_64 rng(seed);
  v.points = problem.sample_exact(n, rng);
  v.ref_log_pdf = problem.exact_log_pdf_values(v.points);
  return v;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

void train_epochs(KRnetModel& model, const ResidualOperator& op, const CollocationSet& set, const TrainConfig& config,
                  Adam& adam, std::mt19937_64& rng, int iteration, const Validation& validation, AddaResult& log,
                  const AddaHooks& hooks) {
  const auto t0 = Clock::now();
  const double wall_offset = log.epochs.empty() ? 0.0 : log.epochs.back().wall_seconds;
  const std::size_t n = static_cast<std::size_t>(set.points.rows());
  const std::size_t m = config.batch_size;
  if (n % m != 0) throw ConfigError("collocation count N must be a multiple of the batch size m");
  const std::size_t batches = n / m;
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Matrix xb(static_cast<Eigen::Index>(m), set.points.cols());
  Matrix cb(static_cast<Eigen::Index>(m), set.coef.cols());
  auto theta = model.params().values();
  std::vector<double> last_good(theta.begin(), theta.end());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      for (std::size_t i = 0; i < m; ++i) {
        const Eigen::Index src = order[b * m + i];
        xb.row(static_cast<Eigen::Index>(i)) = set.points.row(src);
        cb.row(static_cast<Eigen::Index>(i)) = set.coef.row(src);
      }
      std::copy(theta.begin(), theta.end(), last_good.begin());
      try {
        const auto lg = residual_loss_gradient(model, op, xb, cb);
        if (!std::isfinite(lg.value)) throw NumericError("non-finite residual loss");
        adam.step(theta, lg.gradient);
        for (double v : theta) {
          if (!std::isfinite(v)) throw NumericError("non-finite parameter after update");
        }
        total += lg.value;
      } catch (const NumericError&) {
        model.params().assign(last_good);
        throw;
      }
    }
    EpochRecord rec;
    rec.iteration = iteration;
    rec.epoch = epoch;
    rec.loss = total / static_cast<double>(batches);
    const bool eval = !validation.empty() && config.eval_every > 0 && epoch % config.eval_every == 0;
    if (eval) {
      rec.has_metrics = true;
      rec.metrics = kl_divergence_mc(validation.ref_log_pdf, model, validation.points);
    }
    rec.wall_seconds = wall_offset + seconds_since(t0);
    log.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
}

AddaResult adda(KRnetModel& model, const FPProblem& problem, const TrainConfig& config, const AddaHooks& hooks) {
  config.validate(problem.dim);
  if (model.config().dim != problem.dim) throw ConfigError("flow dimension does not match the problem");
  const ResidualOperator op(problem, config.residual_scale);
  std::mt19937_64 box_rng(config.seed + 1);
  std::mt19937_64 shuffle_rng(config.seed + 2);
  std::mt19937_64 sample_rng(config.seed + 3);
  const Validation validation = make_validation(problem, config.validation_size, config.seed + 4);
  Adam adam(model.count_parameters(), AdamConfig{config.learning_rate});
  AddaResult result;
  CollocationSet set = make_collocation(uniform_points(config.collocation, config, problem.dim, box_rng), op, 0);
  for (int k = 1; k <= config.adaptive_steps; ++k) {
    train_epochs(model, op, set, config, adam, shuffle_rng, k, validation, result, hooks);
    StepRecord step;
    step.iteration = k;
    step.final_loss = result.epochs.empty() ? residual_loss(model, op, set) : result.epochs.back().loss;
    if (!validation.empty()) {
      step.has_metrics = true;
      step.metrics = kl_divergence_mc(validation.ref_log_pdf, model, validation.points);
    }
    if (k < config.adaptive_steps) {
      auto drawn = sample(model, config.collocation, sample_rng);
      step.redrawn = drawn.redrawn;
      set = make_collocation(std::move(drawn.x), op, k);
    }
    result.steps.push_back(step);
    if (hooks.on_step) hooks.on_step(step, model);
  }
  return result;
}

}  // namespace krnet
