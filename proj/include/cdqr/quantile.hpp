#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "cdqr/solver.hpp"

namespace cdqr {

/// Inverted quantiles for one subject. `boundary[k]` is set when the
/// monotonized CDF never reaches tau[k] and the largest retained grid point
/// is returned instead.
struct QuantilePrediction {
  Eigen::Index subject = -1;
  Eigen::VectorXd tau;
  Eigen::VectorXd q;
  std::vector<std::uint8_t> boundary;
};

/// Weighted isotonic regression by pool-adjacent-violators: the unique
/// nondecreasing vector minimizing sum w_i (v_i - x_i)^2. Block values are
/// recomputed from prefix sums of the input once the pooling is settled.
Eigen::VectorXd pava(const Eigen::VectorXd& values, const Eigen::VectorXd& weights);

Eigen::VectorXd pava(const Eigen::VectorXd& values);

/// Drops `trim` points at each end of the grid, applies unit-weight PAVA,
/// clamps into [0, 1], and marks the result monotone.
ConditionalCdf monotonize(const ConditionalCdf& cdf, int trim = 0);

/// Q(tau) = smallest retained grid point with F >= tau; the largest retained
/// point with a boundary flag when no such point exists. Requires a
/// monotonized CDF and tau in (0, 1).
QuantilePrediction invert(const ConditionalCdf& cdf, const Eigen::VectorXd& tau);

}  // namespace cdqr
