#include "cdqr/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace cdqr {

Eigen::VectorXd pava(const Eigen::VectorXd& values, const Eigen::VectorXd& weights) {
  const Eigen::Index n = values.size();
  if (n == 0) throw std::invalid_argument("pava: empty input");
  if (weights.size() != n) throw std::invalid_argument("pava: length mismatch");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(weights[i] > 0.0)) throw std::invalid_argument("pava: weights must be positive");

  // Pool adjacent violators over blocks [start_k, end_k].
  std::vector<Eigen::Index> start(static_cast<size_t>(n));
  std::vector<Eigen::Index> end(static_cast<size_t>(n));
  std::vector<double> mean(static_cast<size_t>(n));
  std::vector<double> wsum(static_cast<size_t>(n));
  size_t top = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    start[top] = i;
    end[top] = i;
    mean[top] = values[i];
    wsum[top] = weights[i];
    ++top;
    while (top > 1 && mean[top - 2] > mean[top - 1]) {
      const double w = wsum[top - 2] + wsum[top - 1];
      mean[top - 2] = (wsum[top - 2] * mean[top - 2] + wsum[top - 1] * mean[top - 1]) / w;
      wsum[top - 2] = w;
      end[top - 2] = end[top - 1];
      --top;
    }
  }

  // Final block values recomputed from the original data: singleton blocks
  // copy their input verbatim (already-monotone inputs come back unchanged),
  // pooled blocks get the plain left-to-right weighted mean.
  Eigen::VectorXd out(n);
  for (size_t k = 0; k < top; ++k) {
    double v;
    if (start[k] == end[k]) {
      v = values[start[k]];
    } else {
      double acc_wy = 0.0, acc_w = 0.0;
      for (Eigen::Index i = start[k]; i <= end[k]; ++i) {
        acc_wy += weights[i] * values[i];
        acc_w += weights[i];
      }
      v = acc_wy / acc_w;
    }
    for (Eigen::Index i = start[k]; i <= end[k]; ++i) out[i] = v;
  }
  return out;
}

Eigen::VectorXd pava(const Eigen::VectorXd& values) {
  return pava(values, Eigen::VectorXd::Ones(values.size()));
}

ConditionalCdf monotonize(const ConditionalCdf& cdf, int trim) {
  const Eigen::Index J = cdf.values.size();
  if (trim < 0) throw std::invalid_argument("monotonize: trim must be nonnegative");
  if (2 * Eigen::Index(trim) >= J)
    throw std::invalid_argument("monotonize: trim leaves no grid points");

  ConditionalCdf out;
  out.subject = cdf.subject;
  const Eigen::Index keep = J - 2 * trim;
  out.y = cdf.y.segment(trim, keep);
  out.values = pava(cdf.values.segment(trim, keep).eval());
  for (Eigen::Index j = 0; j < keep; ++j) out.values[j] = std::clamp(out.values[j], 0.0, 1.0);
  out.monotone = true;
  return out;
}

QuantilePrediction invert(const ConditionalCdf& cdf, const Eigen::VectorXd& tau) {
  if (!cdf.monotone)
    throw std::invalid_argument("invert: CDF must be monotonized first");
  QuantilePrediction pred;
  pred.subject = cdf.subject;
  pred.tau = tau;
  pred.q.resize(tau.size());
  pred.boundary.assign(size_t(tau.size()), 0);
  const Eigen::Index J = cdf.values.size();
  for (Eigen::Index k = 0; k < tau.size(); ++k) {
    if (!(tau[k] > 0.0 && tau[k] < 1.0))
      throw std::invalid_argument("invert: tau must lie in (0, 1)");
    Eigen::Index j = 0;
    while (j < J && cdf.values[j] < tau[k]) ++j;
    if (j == J) {
      pred.q[k] = cdf.y[J - 1];
      pred.boundary[size_t(k)] = 1;
    } else {
      pred.q[k] = cdf.y[j];
    }
  }
  return pred;
}

}  // namespace cdqr
