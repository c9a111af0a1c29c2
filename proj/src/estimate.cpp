#include "krnet/estimate.hpp"

#include "krnet/errors.hpp"

#include <limits>

namespace krnet {

void EstimateConfig::validate() const {
  flow.validate();
  if (stages.empty()) throw ConfigError("estimate needs at least one stage");
  for (const auto& s : stages) {
    if (s.epochs < 0) throw ConfigError("stage epochs must be >= 0");
  }
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
}

EstimateConfig ablation_defaults() {
  EstimateConfig c;
  c.flow.dim = 8;
  c.flow.partitions = {2, 1, 1, 1, 1, 1, 1};
  c.flow.depth = 2;
  c.flow.width = 24;
  c.flow.width_decay = 0.9;
  c.flow.activation = Activation::relu;
  c.flow.layout = NetLayout::two_layer;
  c.flow.nonlinear_elements = 32;
  c.flow.nonlinear_half_width = 30.0;
  c.stages = {{240, false, false}, {80, true, false}, {80, true, true}};
  c.batch_size = 5000;
  c.learning_rate = 1e-3;
  return c;
}

EstimateResult run_staged_estimate(const EstimateConfig& config, const Matrix& train, const Matrix& validation,
                                   const Vector& ref_log_pdf, const EstimateHooks& hooks) {
  config.validate();
  const int d = config.flow.dim;
  if (train.cols() != d || validation.cols() != d) throw ConfigError("data width does not match the flow dimension");
  if (validation.rows() < 2) throw ConfigError("validation set needs at least two rows");
  const bool has_ref = ref_log_pdf.size() > 0;
  if (has_ref && ref_log_pdf.size() != validation.rows()) {
    throw ConfigError("reference log-densities do not match the validation set");
  }

  EstimateResult result;
  if (has_ref) result.ref_entropy = -ref_log_pdf.mean();
  std::unique_ptr<KRnetModel> previous;
  for (std::size_t si = 0; si < config.stages.size(); ++si) {
    const auto& stage = config.stages[si];
    const int stage_no = static_cast<int>(si) + 1;
    FlowConfig fc = config.flow;
    fc.use_rotation = stage.rotation;
    fc.use_nonlinear = stage.nonlinear;
    auto model = std::make_unique<KRnetModel>(fc);
    model->initialize(config.seed);
    EstimateStageResult sr;
    sr.stage = stage_no;
    sr.rotation = stage.rotation;
    sr.nonlinear = stage.nonlinear;
    sr.parameters = model->count_parameters();
    if (previous) sr.transferred = model->params().copy_matching(previous->params());
    sr.min_cross_entropy = std::numeric_limits<double>::infinity();
    sr.min_delta = std::numeric_limits<double>::infinity();

    Adam adam(model->count_parameters(), AdamConfig{config.learning_rate});
    DensityTrainConfig tc;
    tc.epochs = stage.epochs;
    tc.batch_size = std::min<std::size_t>(config.batch_size, static_cast<std::size_t>(train.rows()));
    tc.seed = config.seed + 100 * static_cast<std::uint64_t>(stage_no);
    KRnetModel& m = *model;
    train_density(m, train, tc, adam, [&](int epoch, double loss) {
      EstimateEpoch e;
      e.stage = stage_no;
      e.epoch = epoch;
      e.loss = loss;
      if (has_ref) {
        const Metrics mt = kl_divergence_mc(ref_log_pdf, m, validation);
        e.has_reference = true;
        e.cross_entropy = mt.cross_entropy;
        e.kl = mt.kl;
        e.delta = mt.delta;
      } else {
        e.cross_entropy = cross_entropy_loss(m, validation);
      }
      if (e.cross_entropy < sr.min_cross_entropy) {
        sr.min_cross_entropy = e.cross_entropy;
        sr.best_epoch = epoch;
      }
      if (has_ref) sr.min_delta = std::min(sr.min_delta, e.delta);
      result.epochs.push_back(e);
      if (hooks.on_epoch) hooks.on_epoch(e);
    });
    if (!has_ref) sr.min_delta = 0.0;
    result.stages.push_back(sr);
    if (hooks.on_stage) hooks.on_stage(sr, m);
    previous = std::move(model);
  }
  result.model = std::move(previous);
  return result;
}

LogisticHoleData make_logistic_hole_data(LogisticHoleDataset& dataset, std::size_t train_size,
                                         std::size_t validation_size, std::size_t acceptance_draws,
                                         std::uint64_t seed) {
  std::mt19937_64 acc_rng(seed + 10);
  std::mt19937_64 train_rng(seed + 11);
  std::mt19937_64 val_rng(seed + 12);
  LogisticHoleData out;
  out.acceptance = dataset.estimate_acceptance(acceptance_draws, acc_rng);
  if (!(out.acceptance > 0.0)) throw ConfigError("no unconstrained draw landed in the support; raise acceptance_draws");
  out.train = dataset.sample(train_size, train_rng).x;
  out.validation = dataset.sample(validation_size, val_rng).x;
  out.validation_ref = dataset.ref_log_pdf(out.validation);
  return out;
}

}  // namespace krnet
