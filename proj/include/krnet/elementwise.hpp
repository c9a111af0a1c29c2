#pragma once

#include <Eigen/Dense>

namespace krnet {

/// Vectorized tanh built on Eigen's packet exp; relative error a few ulp
/// larger than std::tanh. Odd series below |x| < 0.02 avoids the 1 - e^{-2|x|}
/// cancellation.
template <typename Derived>
Eigen::ArrayXXd fast_tanh(const Eigen::ArrayBase<Derived>& x) {
  const Eigen::ArrayXXd a = x.abs();
  const Eigen::ArrayXXd e = (-2.0 * a).exp();
  const Eigen::ArrayXXd big = (1.0 - e) / (1.0 + e);
  const Eigen::ArrayXXd a2 = a.square();
  const Eigen::ArrayXXd small =
      a * (1.0 + a2 * (-1.0 / 3 + a2 * (2.0 / 15 + a2 * (-17.0 / 315 + a2 * (62.0 / 2835)))));
  return (a < 0.02).select(small, big) * x.sign();
}

}  // namespace krnet
