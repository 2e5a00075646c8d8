#include <doctest.h>

#include <cmath>
#include <random>

#include "cdqr/basis.hpp"
#include "oracles.hpp"

using namespace cdqr;

TEST_CASE("make_basis: Bernstein case has no interior knots") {
  BasisSpec spec = make_basis(0.0, 1.0, 4, 3);
  CHECK(spec.knots.size() == 8);
  for (int i = 0; i < 4; ++i) {
    CHECK(spec.knots[i] == 0.0);
    CHECK(spec.knots[4 + i] == 1.0);
  }
}

TEST_CASE("make_basis: one interior knot lands at the domain midpoint") {
  BasisSpec spec = make_basis(0.0, 10.0, 5, 3);
  CHECK(spec.knots.size() == 9);
  CHECK(spec.knots[4] == doctest::Approx(5.0));
}

TEST_CASE("make_basis rejects bad inputs") {
  CHECK_THROWS_AS(make_basis(0.0, 1.0, 3, 3), std::invalid_argument);
  CHECK_THROWS_AS(make_basis(1.0, 1.0, 5, 3), std::invalid_argument);
  CHECK_THROWS_AS(make_basis(2.0, 1.0, 5, 3), std::invalid_argument);
}

TEST_CASE("eval_basis: Bernstein cubics at the midpoint") {
  BasisSpec spec = make_basis(0.0, 1.0, 4, 3);
  Eigen::VectorXd x(1);
  x << 0.5;
  Eigen::MatrixXd b = eval_basis(spec, x);
  CHECK(b(0, 0) == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(b(0, 1) == doctest::Approx(0.375).epsilon(1e-12));
  CHECK(b(0, 2) == doctest::Approx(0.375).epsilon(1e-12));
  CHECK(b(0, 3) == doctest::Approx(0.125).epsilon(1e-12));
}

TEST_CASE("eval_basis: partition of unity at random interior points") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int config = 0; config < 6; ++config) {
    const int degree = 1 + config % 3;  // degrees 1..3
    const int dim = degree + 1 + config;
    const double lo = -2.0 + config, hi = 3.0 + 2 * config;
    BasisSpec spec = make_basis(lo, hi, dim, degree);
    Eigen::VectorXd pts(1000);
    for (int i = 0; i < 1000; ++i) pts[i] = lo + (hi - lo) * unif(rng);
    Eigen::MatrixXd b = eval_basis(spec, pts);
    for (int i = 0; i < 1000; ++i) {
      CHECK(std::abs(b.row(i).sum() - 1.0) < 1e-10);
      CHECK(b.row(i).minCoeff() >= 0.0);
      CHECK(b.row(i).maxCoeff() <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("eval_basis rejects points outside the domain") {
  BasisSpec spec = make_basis(0.0, 1.0, 4, 3);
  Eigen::VectorXd x(1);
  x << 1.5;
  CHECK_THROWS_AS(eval_basis(spec, x), std::invalid_argument);
}

TEST_CASE("eval_basis derivatives match central differences") {
  BasisSpec spec = make_basis(0.0, 10.0, 8, 3);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(0.5, 9.5);
  for (int rep = 0; rep < 50; ++rep) {
    double x = unif(rng);
    // Keep clear of the knots so the finite difference sees one polynomial piece.
    bool near_knot = false;
    for (Eigen::Index k = 0; k < spec.knots.size(); ++k)
      if (std::abs(x - spec.knots[k]) < 1e-3) near_knot = true;
    if (near_knot) continue;
    Eigen::VectorXd xe(1);
    xe << x;
    Eigen::VectorXd d2 = eval_basis(spec, xe, 2).row(0);
    Eigen::VectorXd fd = oracles::fd_second_derivative(spec, x, 1e-4);
    CHECK((d2 - fd).lpNorm<Eigen::Infinity>() < 1e-6);
  }
}

TEST_CASE("curvature_penalty annihilates linear functions") {
  for (int dim : {4, 6, 10}) {
    BasisSpec spec = make_basis(-1.0, 4.0, dim, 3);
    PenaltyMatrix D = curvature_penalty(spec);
    CHECK(D.rank_deficiency == 2);
    Eigen::VectorXd g = greville_abscissae(spec);
    Eigen::VectorXd theta = 0.7 * Eigen::VectorXd::Ones(dim) - 1.3 * g;
    const double scale = std::max(1.0, D.matrix.cwiseAbs().maxCoeff());
    CHECK(theta.dot(D.matrix * theta) <= 1e-10 * scale);
  }
}

TEST_CASE("curvature_penalty matches fine trapezoid quadrature") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> dim_dist(4, 10);
  for (int rep = 0; rep < 3; ++rep) {
    const int dim = dim_dist(rng);
    BasisSpec spec = make_basis(0.0, double(dim), dim, 3);  // knot spacing >= 1
    PenaltyMatrix D = curvature_penalty(spec);
    // The oracle's own truncation error scales with the entry magnitudes, so
    // the tolerance is anchored to the matrix scale.
    const double tol = 1e-8 * std::max(1.0, D.matrix.cwiseAbs().maxCoeff());
    for (int s = 0; s < dim; ++s)
      for (int s2 = s; s2 < dim; ++s2) {
        const double oracle = oracles::trapezoid_penalty_entry(spec, s, s2, 10000);
        CHECK(std::abs(D.matrix(s, s2) - oracle) < tol);
      }
  }
}

TEST_CASE("curvature_penalty is symmetric PSD") {
  BasisSpec spec = make_basis(0.0, 1.0, 9, 3);
  PenaltyMatrix D = curvature_penalty(spec);
  CHECK((D.matrix - D.matrix.transpose()).lpNorm<Eigen::Infinity>() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(D.matrix);
  CHECK(es.eigenvalues().minCoeff() >= -1e-10 * es.eigenvalues().maxCoeff());
}

TEST_CASE("curvature_penalty rejects degree < 2") {
  BasisSpec spec = make_basis(0.0, 1.0, 3, 1);
  CHECK_THROWS_AS(curvature_penalty(spec), std::invalid_argument);
}

TEST_CASE("tensor_penalty: scalar Kronecker sum") {
  PenaltyMatrix a{Eigen::MatrixXd::Constant(1, 1, 2.5), 0};
  PenaltyMatrix b{Eigen::MatrixXd::Constant(1, 1, 1.5), 0};
  PenaltyMatrix d = tensor_penalty(a, b);
  CHECK(d.matrix(0, 0) == doctest::Approx(4.0));
}

TEST_CASE("tensor_penalty rejects non-square inputs") {
  PenaltyMatrix bad{Eigen::MatrixXd::Zero(2, 3), 0};
  PenaltyMatrix ok{Eigen::MatrixXd::Zero(2, 2), 0};
  CHECK_THROWS_AS(tensor_penalty(bad, ok), std::invalid_argument);
}

TEST_CASE("tensor_penalty is symmetric PSD and annihilates bilinear surfaces") {
  BasisSpec bt = make_basis(0.0, 10.0, 5, 3);
  BasisSpec by = make_basis(-3.0, 3.0, 6, 3);
  PenaltyMatrix D = tensor_penalty(curvature_penalty(bt), curvature_penalty(by));
  CHECK(D.rank_deficiency == 4);
  CHECK((D.matrix - D.matrix.transpose()).lpNorm<Eigen::Infinity>() < 1e-10);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(D.matrix);
  CHECK(es.eigenvalues().minCoeff() >= -1e-10 * es.eigenvalues().maxCoeff());

  // theta for beta(t,y) = a + b t + c y + d t y via Greville abscissae.
  Eigen::VectorXd gt = greville_abscissae(bt), gy = greville_abscissae(by);
  const double a = 0.3, b = -1.1, c = 2.0, d = 0.7;
  Eigen::VectorXd theta(bt.dimension * by.dimension);
  for (int dt = 0; dt < bt.dimension; ++dt)
    for (int dy = 0; dy < by.dimension; ++dy)
      theta[dt * by.dimension + dy] = a + b * gt[dt] + c * gy[dy] + d * gt[dt] * gy[dy];
  const double scale = std::max(1.0, D.matrix.cwiseAbs().maxCoeff() * theta.squaredNorm());
  CHECK(theta.dot(D.matrix * theta) <= 1e-10 * scale);
}

TEST_CASE("tensor_penalty quadratic form matches the marginal-curvature oracle") {
  // theta' D theta = sum_dy int (d2/dt2 sum_dt theta B^t)^2 dt
  //                + sum_dt int (d2/dy2 sum_dy theta B^y)^2 dy.
  // The oracle evaluates both sums with finite-difference second derivatives
  // and per-knot-interval Simpson panels (exact for the piecewise-quadratic
  // integrand up to FD roundoff).
  BasisSpec bt = make_basis(0.0, 1.0, 5, 3);
  BasisSpec by = make_basis(0.0, 2.0, 5, 3);
  PenaltyMatrix D = tensor_penalty(curvature_penalty(bt), curvature_penalty(by));

  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd theta(25);
  for (int i = 0; i < 25; ++i) theta[i] = normal(rng);

  auto marginal_curvature = [](const BasisSpec& spec, const Eigen::MatrixXd& coef_rows) {
    // coef_rows: each row is one coefficient function in this basis.
    double total = 0.0;
    const double h = 1e-4;
    for (int k = spec.degree; k < spec.dimension; ++k) {
      const double a = spec.knots[k], b = spec.knots[k + 1];
      if (!(b > a)) continue;
      const int panels = 200;  // Simpson panels per knot interval
      const double step = (b - a) / (2 * panels);
      for (Eigen::Index r = 0; r < coef_rows.rows(); ++r) {
        double acc = 0.0;
        for (int q = 0; q <= 2 * panels; ++q) {
          const double x = a + step * q;
          Eigen::VectorXd d2 = oracles::fd_second_derivative_in_piece(spec, x, a, b, h);
          const double f = std::pow(d2.dot(coef_rows.row(r)), 2);
          const double wq = (q == 0 || q == 2 * panels) ? 1.0 : (q % 2 == 1 ? 4.0 : 2.0);
          acc += wq * f;
        }
        total += acc * step / 3.0;
      }
    }
    return total;
  };

  Eigen::MatrixXd theta_ty =
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          theta.data(), 5, 5);
  // t-direction: one coefficient function in t per y-basis index (columns);
  // y-direction: one per t-basis index (rows).
  const double oracle = marginal_curvature(bt, theta_ty.transpose()) +
                        marginal_curvature(by, theta_ty);
  const double quad = theta.dot(D.matrix * theta);
  CHECK(std::abs(quad - oracle) < 1e-6 * std::abs(oracle));
}
