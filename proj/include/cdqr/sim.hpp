#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "cdqr/fpca.hpp"
#include "cdqr/model.hpp"
#include "cdqr/quantile.hpp"
#include "cdqr/solver.hpp"

namespace cdqr {

enum class ResponseDistribution { normal, mixture };
enum class SamplingDesign { dense, sparse };

/// One simulation configuration: the latent functional covariate is
/// mu(t) + sum_k xi_k phi_k(t) on [0, 10] with four fixed eigenpairs, observed
/// with N(0, sigma_eps^2) noise on a dense (30 equi-spaced) or sparse
/// (random 15 of 30) design; the scalar covariate is Unif(x1_lo, x1_hi).
struct SimulationScenario {
  ResponseDistribution distribution = ResponseDistribution::normal;
  int n_train = 100;
  int n_test = 100;
  SamplingDesign design = SamplingDesign::dense;
  double sigma_eps = 0.50;
  Eigen::Vector4d b = Eigen::Vector4d::Ones();  // weights of beta(t) = sum b_k phi_k
  double x1_lo = -16.0;
  double x1_hi = 16.0;
  std::vector<double> tau = {0.05, 0.1, 0.25, 0.5};
  int replications = 50;
  std::uint64_t seed = 1;
};

struct GeneratedDataset {
  Eigen::VectorXd y;
  Eigen::VectorXd x1;
  std::vector<FunctionalSample> samples;
  // Latent truth retained for oracle evaluation.
  Eigen::MatrixXd xi;             // n x 4
  Eigen::VectorXd true_integral;  // int X_2(t) beta(t) dt, exact via orthonormality
  Eigen::VectorXd dense_times;    // the 30-point design grid
};

/// Fixed eigen-system of the generator.
Eigen::Vector4d generator_eigenvalues();
double mean_function(double t);
double eigenfunction(int k, double t);  // k in 1..4

GeneratedDataset generate_dataset(const SimulationScenario& scenario, std::uint64_t seed, int n);

/// True tau-level quantile given m = int X2 beta + X1. The mixture default is
/// the moment-matched closed form; exact_mixture root-finds the mixture CDF.
double true_quantile(ResponseDistribution distribution, double m, double tau,
                     bool exact_mixture = false);

/// Mean absolute error per tau level: predictions and truths are n x T.
Eigen::VectorXd evaluate_mae(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& truths);

double normal_quantile(double p);  // standard normal inverse CDF
double normal_cdf(double x);

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Model/pipeline defaults shared by the experiment runner and tests.
struct PipelineSettings {
  int grid_points = 100;
  GridRule grid_rule = GridRule::full_range;
  int kappa_intercept = 20;
  int kappa_scalar = 5;
  int kappa_t = 5;
  int kappa_y = 5;
  int fpca_grid_length = 101;
  FpcaOptions fpca;
  IntegrationRule integration = IntegrationRule::riemann_left;
};

/// Everything needed to fit one replication: generated train/test data,
/// FPCA-presmoothed covariate sets, response grid, artificial response, terms.
struct PipelineData {
  GeneratedDataset train;
  GeneratedDataset test;
  CovariateSet train_covs;
  CovariateSet test_covs;
  Grid grid;
  Eigen::MatrixXd Z;
  std::vector<TermSpec> terms;
};

PipelineData prepare_pipeline(const SimulationScenario& scenario, std::uint64_t rep_seed,
                              const PipelineSettings& settings);

struct ExperimentConfig {
  std::vector<SimulationScenario> scenarios;
  std::vector<FitMode> methods = {FitMode::joint, FitMode::pointwise};
  PipelineSettings pipeline;
  FitOptions fit;
  int trim = 0;
  bool exact_mixture = false;
  int threads = 1;
  std::string output_dir;  // empty: no files written
};

struct SummaryRow {
  std::string distribution;
  double sigma_eps = 0.0;
  int n = 0;
  std::string method;
  double tau = 0.0;
  double mae = 0.0;
  double se = 0.0;
};

struct TimingRow {
  std::string distribution;
  double sigma_eps = 0.0;
  int n = 0;
  std::string method;
  double seconds = 0.0;  // mean fit wall time per replication
};

struct ReplicationRow {
  std::string distribution;
  double sigma_eps = 0.0;
  int n = 0;
  std::string method;
  int rep = 0;
  std::string status;  // "ok" or "failed"
  double seconds = 0.0;
  std::vector<double> tau;
  std::vector<double> mae;
};

struct ExperimentSummary {
  std::vector<SummaryRow> rows;
  std::vector<TimingRow> timings;
  std::vector<ReplicationRow> replications;
  long long crossings = 0;  // quantile-crossing count across every prediction
};

/// Runs every scenario x method for the configured replications: generate,
/// FPCA-presmooth, fit, monotonize, invert, score MAE against the true
/// quantiles. Writes summary.csv / timings.csv / replications.csv into
/// output_dir when set. Fit failures are recorded per replication, not fatal.
ExperimentSummary run_experiment(const ExperimentConfig& config);

std::string to_string(ResponseDistribution d);
std::string to_string(FitMode m);

}  // namespace cdqr
