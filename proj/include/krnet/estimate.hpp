#pragma once

#include "krnet/density.hpp"
#include "krnet/problems.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace krnet {

/// One training stage of the staged density-estimation schedule.
struct EstimateStage {
  int epochs = 0;
  bool rotation = false;
  bool nonlinear = false;
};

struct EstimateConfig {
  /// Architecture shared by all stages; use_rotation / use_nonlinear are
  /// taken from each stage instead.
  FlowConfig flow;
  std::vector<EstimateStage> stages;
  std::size_t batch_size = 5000;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

/// d = 8 logistic-hole defaults: K = 7 with one dimension dropped per stage,
/// L = 2, w = 24 with 0.9 decay, ReLU, a = 30, and 240/80/80 epochs for the
/// stages (plain, +rotation, +rotation+nonlinear).
EstimateConfig ablation_defaults();

struct EstimateEpoch {
  int stage = 0;  ///< 1-based
  int epoch = 0;  ///< 1-based within the stage
  double loss = 0.0;
  double cross_entropy = 0.0;  ///< on the validation set
  bool has_reference = false;
  double kl = 0.0;
  double delta = 0.0;
};

struct EstimateStageResult {
  int stage = 0;
  bool rotation = false;
  bool nonlinear = false;
  std::size_t parameters = 0;
  std::size_t transferred = 0;  ///< scalars copied from the previous stage
  double min_cross_entropy = 0.0;
  double min_delta = 0.0;  ///< only with a reference density
  int best_epoch = 0;
};

struct EstimateResult {
  std::vector<EstimateEpoch> epochs;
  std::vector<EstimateStageResult> stages;
  double ref_entropy = 0.0;
  std::unique_ptr<KRnetModel> model;  ///< final model
};

struct EstimateHooks {
  std::function<void(const EstimateEpoch&)> on_epoch;
  std::function<void(const EstimateStageResult&, const KRnetModel&)> on_stage;
};

/// Cross-entropy training through the stages. Each stage builds a fresh flow
/// with its layer switches, copies every matching parameter block from the
/// previous stage (new layers start at the identity) and restarts Adam.
/// `ref_log_pdf`, when non-empty, holds log p_ref on the validation rows and
/// enables the KL and relative-error columns.
EstimateResult run_staged_estimate(const EstimateConfig& config, const Matrix& train, const Matrix& validation,
                                   const Vector& ref_log_pdf, const EstimateHooks& hooks = {});

/// Train and validation sets with log p_ref on the validation rows.
struct LogisticHoleData {
  Matrix train;
  Matrix validation;
  Vector validation_ref;
  double acceptance = 0.0;
};

LogisticHoleData make_logistic_hole_data(LogisticHoleDataset& dataset, std::size_t train_size,
                                         std::size_t validation_size, std::size_t acceptance_draws,
                                         std::uint64_t seed);

}  // namespace krnet
