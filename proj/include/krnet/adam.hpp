#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace krnet {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam with zero-initialized moments.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t size, AdamConfig config);

  /// theta -= lr * m_hat / (sqrt(v_hat) + eps); increments the step counter.
  void step(std::span<double> theta, std::span<const double> grad);
  void reset();

  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  std::int64_t steps() const { return t_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::int64_t t_ = 0;
};

}  // namespace krnet
