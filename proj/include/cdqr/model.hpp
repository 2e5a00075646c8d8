#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "cdqr/basis.hpp"

namespace cdqr {

enum class GridRule { full_range, trimmed_order_statistics };

/// Strictly increasing evaluation points (response grid y_j or time grid t_l).
struct Grid {
  Eigen::VectorXd points;
  GridRule rule = GridRule::full_range;

  Eigen::Index size() const { return points.size(); }
  double min() const { return points[0]; }
  double max() const { return points[points.size() - 1]; }
};

/// Validating constructor for Grid; throws on non-monotone or non-finite points.
Grid make_grid(Eigen::VectorXd points, GridRule rule = GridRule::full_range);

/// J equi-spaced grid points over the response values. full_range spans
/// [min, max]; trimmed_order_statistics spans [5th smallest, 5th largest].
Grid build_response_grid(const Eigen::VectorXd& y, int grid_points,
                         GridRule rule = GridRule::full_range);

/// Artificial binary response Z(i,j) = 1(Y_i < y_j), n x J.
Eigen::MatrixXd make_artificial_response(const Eigen::VectorXd& y, const Grid& grid);

enum class TermKind {
  intercept,                // beta0(y)
  constant_vector,          // X^T beta, y-invariant, unpenalized
  varying_scalar,           // X * beta(y)
  functional,               // int X(t) beta(t,y) dt
  functional_interaction,   // int X(t) * S * beta(t,y) dt, scalar modifier S
};

/// Declarative description of one covariate effect.
struct TermSpec {
  TermKind kind = TermKind::intercept;
  std::vector<std::string> columns;  // constant_vector: >=1 scalar columns;
                                     // varying_scalar: {column};
                                     // functional: {covariate};
                                     // functional_interaction: {covariate, modifier}
  BasisSpec y_basis;                 // all kinds except constant_vector
  BasisSpec t_basis;                 // functional kinds only
  std::string label;
};

/// Covariates for a set of subjects. Functional covariates are stored as
/// n x L matrices of values on the shared time grid (already presmoothed,
/// e.g. by fpca::reconstruct).
struct CovariateSet {
  Eigen::Index n = 0;
  std::map<std::string, Eigen::VectorXd> scalars;
  std::map<std::string, Eigen::MatrixXd> functionals;
  Eigen::VectorXd t_grid;

  const Eigen::VectorXd& scalar(const std::string& name) const;
  const Eigen::MatrixXd& functional(const std::string& name) const;
};

enum class IntegrationRule { riemann_left, trapezoid };

/// Realized design matrix and penalty for one term. In joint form the matrix
/// has n*J rows ordered subject-major: row r = i*J + j for subject i and grid
/// point j.
struct DesignBlock {
  Eigen::MatrixXd X;
  PenaltyMatrix penalty;
  std::string label;
  bool penalized = true;
};

/// Quadrature weights for int X(t) f(t) dt on the covariate grid.
Eigen::VectorXd integration_weights(const Eigen::VectorXd& t_grid, IntegrationRule rule);

/// Joint design blocks (n*J rows each) for the given terms.
std::vector<DesignBlock> assemble_design(const std::vector<TermSpec>& terms,
                                         const CovariateSet& covariates, const Grid& grid,
                                         IntegrationRule rule = IntegrationRule::riemann_left);

/// Pointwise design blocks (n rows each) for a single grid point. The y-basis
/// collapses: intercept and varying-scalar terms contribute one column each,
/// functional terms contribute kappa_t columns penalized by P_t.
std::vector<DesignBlock> assemble_pointwise_design(
    const std::vector<TermSpec>& terms, const CovariateSet& covariates,
    IntegrationRule rule = IntegrationRule::riemann_left);

/// Convenience constructors for TermSpec.
TermSpec intercept_term(const BasisSpec& y_basis);
TermSpec constant_vector_term(std::vector<std::string> columns);
TermSpec varying_scalar_term(std::string column, const BasisSpec& y_basis);
TermSpec functional_term(std::string covariate, const BasisSpec& t_basis,
                         const BasisSpec& y_basis);
TermSpec functional_interaction_term(std::string covariate, std::string modifier,
                                     const BasisSpec& t_basis, const BasisSpec& y_basis);

/// Number of design columns contributed by a term (joint form).
int term_dimension(const TermSpec& term, const CovariateSet& covariates);

/// Single joint design row for one subject at an arbitrary response value y
/// (within the y-basis domain). Columns follow the term order.
Eigen::RowVectorXd assemble_row(const std::vector<TermSpec>& terms,
                                const CovariateSet& covariates, Eigen::Index subject, double y,
                                IntegrationRule rule = IntegrationRule::riemann_left);

}  // namespace cdqr
