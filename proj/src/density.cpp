#include "krnet/density.hpp"

#include "krnet/errors.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace krnet {

namespace {

constexpr std::size_t kChunk = 256;
constexpr int kMaxRedraws = 100;

double log_normalizer(int d) { return -0.5 * d * std::log(2.0 * std::numbers::pi); }

}  // namespace

double GaussianPrior::log_pdf(const Eigen::Ref<const Eigen::RowVectorXd>& z) {
  return log_normalizer(static_cast<int>(z.size())) - 0.5 * z.squaredNorm();
}

Vector GaussianPrior::log_pdf(const Matrix& z) {
  return (log_normalizer(static_cast<int>(z.cols())) - 0.5 * z.rowwise().squaredNorm().array()).matrix();
}

ad::Var GaussianPrior::log_pdf(ad::Var z) {
  return ad::add_scalar(ad::scale(ad::rowsum(ad::square(z)), -0.5), log_normalizer(z.cols()));
}

Matrix GaussianPrior::sample(std::size_t n, int d, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix z(static_cast<Eigen::Index>(n), d);
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) = g(rng);
  return z;
}

ad::Var log_pdf(ad::Tape& tape, const KRnetModel& model, ad::Var x) {
  const auto out = model.forward(tape, x);
  return ad::add(GaussianPrior::log_pdf(out.z), out.logdet);
}

Vector log_pdf(const KRnetModel& model, const Matrix& x) {
  Vector ld;
  const Matrix z = model.forward_values(x, ld);
  return GaussianPrior::log_pdf(z) + ld;
}

SampleResult sample(const KRnetModel& model, std::size_t n, std::mt19937_64& rng) {
  const int d = model.config().dim;
  SampleResult out;
  out.x = model.inverse(GaussianPrior::sample(n, d, rng));
  for (int round = 0;; ++round) {
    std::vector<Eigen::Index> bad;
    for (Eigen::Index i = 0; i < out.x.rows(); ++i) {
      if (!out.x.row(i).allFinite()) bad.push_back(i);
    }
    if (bad.empty()) return out;
    if (round == kMaxRedraws) throw NumericError("sampling keeps producing non-finite points");
    out.redrawn += bad.size();
    const Matrix fresh = model.inverse(GaussianPrior::sample(bad.size(), d, rng));
    for (std::size_t k = 0; k < bad.size(); ++k) out.x.row(bad[k]) = fresh.row(static_cast<Eigen::Index>(k));
  }
}

double cross_entropy_loss(const KRnetModel& model, const Matrix& batch) {
  if (batch.rows() == 0) throw ConfigError("empty batch");
  return -log_pdf(model, batch).mean();
}

ad::LossAndGradient cross_entropy_gradient(const KRnetModel& model, const Matrix& batch) {
  if (batch.rows() == 0) throw ConfigError("empty batch");
  const double inv_n = 1.0 / static_cast<double>(batch.rows());
  const Matrix no_dirs(batch.cols(), 0);
  return ad::grad_params_chunked(
      [&](ad::Tape& t, std::size_t begin, std::size_t len) {
        const ad::Var x = t.input(batch.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(len)),
                                  no_dirs);
        return ad::scale(ad::sum_value(log_pdf(t, model, x)), -inv_n);
      },
      model.params(), static_cast<std::size_t>(batch.rows()), kChunk);
}

Metrics kl_divergence_mc(const Vector& ref_log_pdf, const KRnetModel& model, const Matrix& validation) {
  if (ref_log_pdf.size() != validation.rows() || validation.rows() < 2) {
    throw ConfigError("validation set and reference log-densities must match and hold >= 2 points");
  }
  const Vector lp = log_pdf(model, validation);
  const Eigen::ArrayXd diff = (ref_log_pdf - lp).array();
  const double n = static_cast<double>(diff.size());
  Metrics m;
  m.samples = static_cast<std::size_t>(diff.size());
  m.kl = diff.mean();
  m.kl_stderr = std::sqrt((diff - m.kl).square().sum() / (n - 1.0) / n);
  m.cross_entropy = -lp.mean();
  m.ref_entropy = -ref_log_pdf.mean();
  m.delta = relative_error(m.kl, m.ref_entropy);
  return m;
}

double relative_error(double kl, double ref_entropy) {
  if (!(ref_entropy > 0.0)) throw ConfigError("relative error needs a positive reference entropy");
  return kl / ref_entropy;
}

void train_density(KRnetModel& model, const Matrix& data, const DensityTrainConfig& config, Adam& adam,
                   const std::function<void(int, double)>& on_epoch) {
  if (config.batch_size == 0) throw ConfigError("batch size must be positive");
  const std::size_t n = static_cast<std::size_t>(data.rows());
  const std::size_t batches = n / config.batch_size;
  if (batches == 0) throw ConfigError("batch size exceeds the data set");
  std::mt19937_64 rng(config.seed);
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Matrix batch(static_cast<Eigen::Index>(config.batch_size), data.cols());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      for (std::size_t i = 0; i < config.batch_size; ++i) {
        batch.row(static_cast<Eigen::Index>(i)) = data.row(order[b * config.batch_size + i]);
      }
      const auto lg = cross_entropy_gradient(model, batch);
      adam.step(model.params().values(), lg.gradient);
      total += lg.value;
    }
    if (on_epoch) on_epoch(epoch + 1, total / static_cast<double>(batches));
  }
}

}  // namespace krnet
