#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "cdqr/model.hpp"
#include "cdqr/pspline.hpp"

namespace cdqr {

/// Irregular per-subject observations (t_ij, W_ij) of a functional covariate.
struct FunctionalSample {
  std::string id;
  Eigen::VectorXd times;
  Eigen::VectorXd values;
};

enum class ScoreMethod { automatic, riemann, blup };

struct FpcaOptions {
  double pve = 0.99;
  int mean_basis_dim = 15;
  int cov_basis_dim = 15;
  SmoothingRule smoothing = SmoothingRule::reml;
  double fixed_lambda = 1.0;
  ScoreMethod score_method = ScoreMethod::automatic;
};

/// Mean + truncated eigen decomposition of the smoothed covariance, with
/// per-subject scores. Eigenfunctions are orthonormal under the Riemann inner
/// product on the grid, <f,g> = delta * sum f_l g_l.
struct FpcaModel {
  Eigen::VectorXd grid;             // L equally spaced points
  Eigen::VectorXd mean;             // L
  Eigen::MatrixXd eigenfunctions;   // L x K
  Eigen::VectorXd eigenvalues;      // K, nonincreasing, >= 0
  double noise_variance = 0.0;
  Eigen::MatrixXd scores;           // n x K
  std::vector<std::string> ids;
  double pve = 0.99;

  int n_components() const { return int(eigenvalues.size()); }
  Eigen::Index subject_index(const std::string& id) const;
};

/// Fits FPCA by pooled penalized-spline mean smoothing, bivariate
/// penalized-spline covariance smoothing with the diagonal excluded, PVE
/// truncation, and per-subject scores (Riemann projection for densely
/// observed subjects with m_i >= L/2, BLUP otherwise).
FpcaModel fit_fpca(const std::vector<FunctionalSample>& samples, const Grid& grid,
                   const FpcaOptions& options = FpcaOptions{});

/// Smoothed curve mu + sum_k xi_k phi_k on the model grid.
Eigen::VectorXd reconstruct(const FpcaModel& model, const std::string& id);
Eigen::VectorXd reconstruct(const FpcaModel& model, Eigen::Index subject);

/// All reconstructions stacked as an n x L matrix (row order = model.ids).
Eigen::MatrixXd reconstruct_all(const FpcaModel& model);

}  // namespace cdqr
