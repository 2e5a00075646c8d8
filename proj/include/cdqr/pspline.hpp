#pragma once

#include <Eigen/Dense>

#include "cdqr/basis.hpp"

namespace cdqr {

enum class SmoothingRule { reml, gcv, fixed };

/// Weighted least-squares data for a penalized Gaussian smooth. Rows may be
/// binned cells: `w` holds cell counts, `ybar` cell means, and `extra_rss`
/// the within-cell sum of squares so that the REML criterion matches the one
/// computed from the raw observations (n_total of them).
struct WeightedDesign {
  Eigen::MatrixXd B;
  Eigen::VectorXd w;
  Eigen::VectorXd ybar;
  double extra_rss = 0.0;
  double n_total = 0.0;
};

struct GaussianSmooth {
  Eigen::VectorXd coef;
  double lambda = 1.0;
  double edf = 0.0;
};

/// Fits min ||sqrt(w)(ybar - B theta)||^2 + lambda theta' D theta with the
/// smoothing parameter chosen by profiled Gaussian REML (golden section on
/// log lambda), or held fixed.
GaussianSmooth fit_penalized_gaussian(const WeightedDesign& data, const PenaltyMatrix& penalty,
                                      SmoothingRule rule = SmoothingRule::reml,
                                      double fixed_lambda = 1.0);

}  // namespace cdqr
