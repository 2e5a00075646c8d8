#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "cdqr/model.hpp"
#include "cdqr/pspline.hpp"

namespace cdqr {

enum class FitMode { joint, pointwise };

struct FitOptions {
  SmoothingRule smoothing = SmoothingRule::reml;
  std::vector<double> fixed_lambdas;  // per penalized block (or one broadcast value)
  int max_inner = 200;
  int max_outer = 50;
  double deviance_tol = 1e-6;
  double gradient_tol = 1e-6;
  bool record_trace = false;
  int threads = 1;  // pointwise fits may run grid points in parallel
};

struct ConvergenceRecord {
  int inner_iterations = 0;
  int outer_iterations = 0;
  double final_rel_change = 0.0;
  double gradient_norm = 0.0;
  bool converged = false;
  std::vector<double> objective_trace;  // penalized log-likelihood per accepted step
};

/// Fitted conditional-CDF regression. Joint fits store one coefficient vector
/// per term; pointwise fits store one coefficient set per grid point.
struct FittedCdfModel {
  FitMode mode = FitMode::joint;
  std::string link = "logit";
  Grid response_grid;
  std::vector<TermSpec> terms;
  Eigen::VectorXd t_grid;  // empty when no functional terms
  IntegrationRule integration = IntegrationRule::riemann_left;

  std::vector<Eigen::VectorXd> coefficients;  // joint: per term
  std::vector<double> lambdas;                // joint: per penalized term

  Eigen::MatrixXd pointwise_coefficients;  // J x p
  Eigen::MatrixXd pointwise_lambdas;       // J x #penalized
  std::vector<int> degenerate_points;
  std::vector<std::uint8_t> point_converged;

  ConvergenceRecord convergence;

  /// Stacked joint coefficient vector (term order).
  Eigen::VectorXd stacked_coefficients() const;
};

/// Estimated conditional distribution values for one subject on a grid.
struct ConditionalCdf {
  Eigen::Index subject = -1;
  Eigen::VectorXd y;
  Eigen::VectorXd values;
  bool monotone = false;
};

/// Maximizes 2 logL - sum_m lambda_m theta_m' D_m theta_m for Bernoulli data
/// with logit link by penalized IRLS; smoothing parameters by REML (or GCV)
/// on the Gaussian working model, iterated to joint convergence. Z is the
/// n x J artificial-response matrix; blocks must have n*J rows, subject-major.
FittedCdfModel fit_joint(const std::vector<DesignBlock>& blocks, const Eigen::MatrixXd& Z,
                         const Grid& grid, const std::vector<TermSpec>& terms,
                         const Eigen::VectorXd& t_grid, const FitOptions& options = FitOptions{});

/// Fits an independent penalized binomial regression at every grid point.
/// The design collapses in y, so one set of n-row blocks serves all points.
/// Grid points with a constant Z column are flagged degenerate and filled by
/// copying the nearest non-degenerate point's coefficients.
FittedCdfModel fit_pointwise(const std::vector<DesignBlock>& pointwise_blocks,
                             const Eigen::MatrixXd& Z, const Grid& grid,
                             const std::vector<TermSpec>& terms, const Eigen::VectorXd& t_grid,
                             const FitOptions& options = FitOptions{});

/// Per-subject conditional CDF values on the model's response grid.
std::vector<ConditionalCdf> predict_cdf(const FittedCdfModel& model,
                                        const CovariateSet& covariates);

/// CDF evaluated at one arbitrary response value per subject (joint mode uses
/// the basis directly; pointwise mode interpolates the linear predictor).
Eigen::VectorXd predict_cdf_at(const FittedCdfModel& model, const CovariateSet& covariates,
                               const Eigen::VectorXd& y_per_subject);

/// Stable inverse logit.
double inverse_logit(double eta);

}  // namespace cdqr
