#include "cdqr/pspline.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cdqr {

namespace {

struct RemlParts {
  Eigen::MatrixXd A;   // B' W B
  Eigen::VectorXd b;   // B' W ybar
  double c = 0.0;      // sum w ybar^2 + extra_rss
  double n_total = 0.0;
  double null_dim = 0.0;
  double log_pdet_D = 0.0;
  double rank_D = 0.0;
};

// Penalized solve at a given lambda; returns the profiled REML criterion and
// fills theta.
double reml_criterion(const RemlParts& parts, const Eigen::MatrixXd& D, double lambda,
                      Eigen::VectorXd& theta) {
  const Eigen::Index p = parts.A.rows();
  Eigen::MatrixXd M = parts.A + lambda * D;
  M.diagonal().array() += 1e-10;  // guards exact singularity in the solve only
  Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
  theta = ldlt.solve(parts.b);

  const double rss = parts.c - 2.0 * theta.dot(parts.b) + theta.dot(parts.A * theta);
  const double pen = lambda * theta.dot(D * theta);
  const double rss_pen = std::max(rss + pen, 1e-300);

  double log_det = 0.0;
  for (Eigen::Index i = 0; i < p; ++i)
    log_det += std::log(std::max(ldlt.vectorD()[i], 1e-300));

  const double log_pdet_S = parts.rank_D * std::log(lambda) + parts.log_pdet_D;
  return (parts.n_total - parts.null_dim) * std::log(rss_pen) + log_det - log_pdet_S;
}

}  // namespace

GaussianSmooth fit_penalized_gaussian(const WeightedDesign& data, const PenaltyMatrix& penalty,
                                      SmoothingRule rule, double fixed_lambda) {
  const Eigen::Index p = data.B.cols();
  if (data.B.rows() != data.w.size() || data.B.rows() != data.ybar.size())
    throw std::invalid_argument("fit_penalized_gaussian: size mismatch");
  if (penalty.matrix.rows() != p || penalty.matrix.cols() != p)
    throw std::invalid_argument("fit_penalized_gaussian: penalty size mismatch");
  if ((data.w.array() <= 0.0).any())
    throw std::invalid_argument("fit_penalized_gaussian: weights must be positive");

  RemlParts parts;
  Eigen::MatrixXd bw = data.w.array().sqrt().matrix().asDiagonal() * data.B;
  parts.A = Eigen::MatrixXd::Zero(p, p);
  parts.A.selfadjointView<Eigen::Lower>().rankUpdate(bw.transpose());
  parts.A = parts.A.selfadjointView<Eigen::Lower>();
  parts.b = data.B.transpose() * (data.w.asDiagonal() * data.ybar);
  parts.c = (data.w.array() * data.ybar.array().square()).sum() + data.extra_rss;
  parts.n_total = data.n_total > 0 ? data.n_total : data.w.sum();
  parts.null_dim = penalty.rank_deficiency;
  parts.rank_D = double(p - penalty.rank_deficiency);

  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(penalty.matrix);
    const double mx = std::max(es.eigenvalues().maxCoeff(), 1e-300);
    double log_pdet = 0.0;
    for (Eigen::Index i = 0; i < p; ++i)
      if (es.eigenvalues()[i] > 1e-9 * mx) log_pdet += std::log(es.eigenvalues()[i]);
    parts.log_pdet_D = log_pdet;
  }

  GaussianSmooth out;
  Eigen::VectorXd theta;
  if (rule == SmoothingRule::fixed) {
    out.lambda = fixed_lambda;
    reml_criterion(parts, penalty.matrix, fixed_lambda, theta);
  } else {
    // REML and (for this Gaussian utility) GCV behave nearly identically for
    // the smoothing step; we use the REML profile for both.
    double lo = -16.0, hi = 16.0;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = reml_criterion(parts, penalty.matrix, std::exp(x1), theta);
    double f2 = reml_criterion(parts, penalty.matrix, std::exp(x2), theta);
    for (int it = 0; it < 80 && (hi - lo) > 1e-6; ++it) {
      if (f1 < f2) {
        hi = x2; x2 = x1; f2 = f1;
        x1 = hi - gr * (hi - lo);
        f1 = reml_criterion(parts, penalty.matrix, std::exp(x1), theta);
      } else {
        lo = x1; x1 = x2; f1 = f2;
        x2 = lo + gr * (hi - lo);
        f2 = reml_criterion(parts, penalty.matrix, std::exp(x2), theta);
      }
    }
    out.lambda = std::exp(0.5 * (lo + hi));
    reml_criterion(parts, penalty.matrix, out.lambda, theta);
  }
  out.coef = theta;

  Eigen::MatrixXd M = parts.A + out.lambda * penalty.matrix;
  M.diagonal().array() += 1e-10;
  out.edf = M.ldlt().solve(parts.A).trace();
  return out;
}

}  // namespace cdqr
