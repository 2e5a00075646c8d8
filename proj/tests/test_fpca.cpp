#include <doctest.h>

#include <cmath>
#include <random>

#include "cdqr/fpca.hpp"
#include "cdqr/sim.hpp"

using namespace cdqr;

namespace {

// Rank-one functional data: mu(t) + xi * phi1(t) (+ noise) observed on the
// full grid, so the dense (Riemann) score path is exercised.
std::vector<FunctionalSample> rank_one_samples(int n, const Eigen::VectorXd& grid, double sd_xi,
                                               double sd_noise, unsigned seed,
                                               Eigen::VectorXd* xi_out = nullptr) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<FunctionalSample> out;
  if (xi_out) xi_out->resize(n);
  for (int i = 0; i < n; ++i) {
    const double xi = sd_xi * normal(rng);
    if (xi_out) (*xi_out)[i] = xi;
    FunctionalSample s;
    s.id = std::to_string(i);
    s.times = grid;
    s.values.resize(grid.size());
    for (Eigen::Index l = 0; l < grid.size(); ++l)
      s.values[l] = mean_function(grid[l]) + xi * eigenfunction(1, grid[l]) +
                    sd_noise * normal(rng);
    out.push_back(std::move(s));
  }
  return out;
}

double riemann_ise(const Eigen::VectorXd& grid, const Eigen::VectorXd& a,
                   const Eigen::VectorXd& b) {
  const double delta = (grid[grid.size() - 1] - grid[0]) / double(grid.size() - 1);
  return delta * (a - b).squaredNorm();
}

}  // namespace

TEST_CASE("fit_fpca recovers a rank-one generator from noiseless dense data") {
  Eigen::VectorXd grid_points = Eigen::VectorXd::LinSpaced(51, 0.0, 10.0);
  Grid grid{grid_points, GridRule::full_range};
  std::vector<FunctionalSample> samples = rank_one_samples(200, grid_points, 4.0, 1e-4, 21);
  FpcaModel model = fit_fpca(samples, grid);

  CHECK(model.n_components() == 1);
  Eigen::VectorXd phi1(grid_points.size());
  for (Eigen::Index l = 0; l < grid_points.size(); ++l)
    phi1[l] = eigenfunction(1, grid_points[l]);
  Eigen::VectorXd est = model.eigenfunctions.col(0);
  const double delta = 10.0 / 50.0;
  if (delta * est.dot(phi1) < 0.0) est = -est;
  CHECK(riemann_ise(grid_points, est, phi1) < 0.05);

  // Noiseless reconstruction tracks the observations.
  Eigen::VectorXd recon = reconstruct(model, std::string("0"));
  double rms = std::sqrt((recon - samples[0].values).squaredNorm() / double(recon.size()));
  CHECK(rms < 0.1);
}

TEST_CASE("fit_fpca recovers the four-component eigen-system") {
  SimulationScenario scenario;
  scenario.sigma_eps = 0.50;
  GeneratedDataset data = generate_dataset(scenario, 77, 400);
  Grid grid{Eigen::VectorXd::LinSpaced(101, 0.0, 10.0), GridRule::full_range};
  FpcaModel model = fit_fpca(data.samples, grid);

  REQUIRE(model.n_components() >= 4);
  for (int k = 1; k < model.n_components(); ++k)
    CHECK(model.eigenvalues[k] <= model.eigenvalues[k - 1]);
  CHECK(model.eigenvalues[0] == doctest::Approx(16.0).epsilon(0.30));
  CHECK(model.noise_variance == doctest::Approx(0.25).epsilon(0.5));
}

TEST_CASE("fit_fpca eigenfunctions are orthonormal in the Riemann inner product") {
  SimulationScenario scenario;
  GeneratedDataset data = generate_dataset(scenario, 3, 120);
  Grid grid{Eigen::VectorXd::LinSpaced(81, 0.0, 10.0), GridRule::full_range};
  FpcaModel model = fit_fpca(data.samples, grid);
  const double delta = 10.0 / 80.0;
  for (int j = 0; j < model.n_components(); ++j)
    for (int k = 0; k < model.n_components(); ++k) {
      const double ip = delta * model.eigenfunctions.col(j).dot(model.eigenfunctions.col(k));
      CHECK(std::abs(ip - (j == k ? 1.0 : 0.0)) < 1e-6);
    }
  CHECK(model.eigenvalues.minCoeff() >= 0.0);
}

TEST_CASE("zero scores reconstruct the mean") {
  Eigen::VectorXd grid_points = Eigen::VectorXd::LinSpaced(41, 0.0, 10.0);
  Grid grid{grid_points, GridRule::full_range};
  std::vector<FunctionalSample> samples = rank_one_samples(50, grid_points, 3.0, 0.1, 5);
  FpcaModel model = fit_fpca(samples, grid);
  model.scores.row(0).setZero();
  Eigen::VectorXd recon = reconstruct(model, Eigen::Index(0));
  CHECK((recon - model.mean).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("dense Riemann scores and BLUP scores agree on dense low-noise data") {
  Eigen::VectorXd grid_points = Eigen::VectorXd::LinSpaced(51, 0.0, 10.0);
  Grid grid{grid_points, GridRule::full_range};
  std::vector<FunctionalSample> samples = rank_one_samples(100, grid_points, 4.0, 0.05, 31);

  FpcaOptions riemann_opts;
  riemann_opts.score_method = ScoreMethod::riemann;
  FpcaOptions blup_opts;
  blup_opts.score_method = ScoreMethod::blup;
  FpcaModel a = fit_fpca(samples, grid, riemann_opts);
  FpcaModel b = fit_fpca(samples, grid, blup_opts);
  REQUIRE(a.n_components() == b.n_components());
  const double rms_diff = std::sqrt((a.scores - b.scores).squaredNorm() / double(a.scores.size()));
  const double rms_scale = std::sqrt(b.scores.squaredNorm() / double(b.scores.size()));
  CHECK(rms_diff < 0.05 * rms_scale);
}

TEST_CASE("fit_fpca input validation") {
  Eigen::VectorXd grid_points = Eigen::VectorXd::LinSpaced(21, 0.0, 10.0);
  Grid grid{grid_points, GridRule::full_range};
  std::vector<FunctionalSample> one = rank_one_samples(1, grid_points, 1.0, 0.1, 2);
  CHECK_THROWS_AS(fit_fpca(one, grid), std::invalid_argument);

  std::vector<FunctionalSample> two = rank_one_samples(2, grid_points, 1.0, 0.1, 3);
  FpcaOptions bad;
  bad.pve = 1.5;
  CHECK_THROWS_AS(fit_fpca(two, grid, bad), std::invalid_argument);

  FpcaModel model = fit_fpca(rank_one_samples(10, grid_points, 1.0, 0.1, 4), grid);
  CHECK_THROWS_AS(reconstruct(model, std::string("nope")), std::invalid_argument);
}
