#pragma once

#include <Eigen/Dense>

namespace cdqr {

/// Clamped univariate B-spline basis on a closed interval.
///
/// The knot vector repeats each endpoint degree+1 times and places the
/// remaining dimension-degree-1 interior knots equally spaced, so the
/// dimension equals the number of basis functions and the functions form a
/// partition of unity on [lo, hi].
struct BasisSpec {
  int degree = 3;
  int dimension = 0;
  double lo = 0.0;
  double hi = 1.0;
  Eigen::VectorXd knots;  // length dimension + degree + 1, nondecreasing
};

/// Symmetric positive semidefinite penalty with known null-space dimension.
struct PenaltyMatrix {
  Eigen::MatrixXd matrix;
  int rank_deficiency = 0;
};

/// Builds a clamped cubic (by default) B-spline basis of the given dimension.
/// Throws std::invalid_argument when dimension < degree+1 or the domain is
/// degenerate.
BasisSpec make_basis(double lo, double hi, int dimension, int degree = 3);

/// Evaluates all basis functions (or their deriv-th derivative) at the given
/// points; result is |points| x dimension. Points must lie in [lo, hi].
Eigen::MatrixXd eval_basis(const BasisSpec& spec, const Eigen::VectorXd& points,
                           int deriv = 0);

/// Integrated squared second derivative penalty, D(s,s') = int B_s'' B_s''.
/// Assembled by per-knot-interval Gauss-Legendre quadrature with enough nodes
/// to be exact for the piecewise-polynomial integrand. Requires degree >= 2.
PenaltyMatrix curvature_penalty(const BasisSpec& spec);

/// Kronecker-sum penalty P_t (x) I + I (x) P_y for tensor-product surfaces.
/// Coefficient ordering is t-major: theta index = d_t * kappa_y + d_y, i.e.
/// the t index varies slowest.
PenaltyMatrix tensor_penalty(const PenaltyMatrix& p_t, const PenaltyMatrix& p_y);

/// Knot averages; a coefficient vector theta_d = a + b * greville(d)
/// reproduces the linear function a + b x exactly.
Eigen::VectorXd greville_abscissae(const BasisSpec& spec);

}  // namespace cdqr
