#include "krnet/adam.hpp"

#include "krnet/errors.hpp"

#include <cmath>

namespace krnet {

Adam::Adam(std::size_t size, AdamConfig config) : config_(config), m_(size, 0.0), v_(size, 0.0) {
  if (!(config.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(config.beta1 >= 0.0 && config.beta1 < 1.0 && config.beta2 >= 0.0 && config.beta2 < 1.0)) {
    throw ConfigError("Adam decay rates must lie in [0, 1)");
  }
}

void Adam::step(std::span<double> theta, std::span<const double> grad) {
  if (theta.size() != m_.size() || grad.size() != m_.size()) throw ConfigError("Adam size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < theta.size(); ++k) {
    m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * grad[k];
    v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * grad[k] * grad[k];
    theta[k] -= config_.learning_rate * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + config_.epsilon);
  }
}

void Adam::reset() {
  std::fill(m_.begin(), m_.end(), 0.0);
  std::fill(v_.begin(), v_.end(), 0.0);
  t_ = 0;
}

}  // namespace krnet
