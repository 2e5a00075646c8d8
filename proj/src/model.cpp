#include "cdqr/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cdqr {

Grid make_grid(Eigen::VectorXd points, GridRule rule) {
  if (points.size() < 2) throw std::invalid_argument("make_grid: need at least 2 points");
  for (Eigen::Index j = 0; j < points.size(); ++j) {
    if (!std::isfinite(points[j])) throw std::invalid_argument("make_grid: non-finite point");
    if (j > 0 && !(points[j] > points[j - 1]))
      throw std::invalid_argument("make_grid: points must be strictly increasing");
  }
  return Grid{std::move(points), rule};
}

Grid build_response_grid(const Eigen::VectorXd& y, int grid_points, GridRule rule) {
  if (grid_points < 2) throw std::invalid_argument("build_response_grid: need at least 2 grid points");
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (!std::isfinite(y[i])) throw std::invalid_argument("build_response_grid: non-finite response");

  double lo, hi;
  if (rule == GridRule::full_range) {
    if (y.size() < 2) throw std::invalid_argument("build_response_grid: need at least 2 responses");
    lo = y.minCoeff();
    hi = y.maxCoeff();
  } else {
    if (y.size() < 10)
      throw std::invalid_argument("build_response_grid: trimmed rule needs at least 10 responses");
    std::vector<double> sorted(y.data(), y.data() + y.size());
    std::sort(sorted.begin(), sorted.end());
    lo = sorted[4];                   // 5th smallest
    hi = sorted[sorted.size() - 5];   // 5th largest
  }
  if (!(lo < hi))
    throw std::invalid_argument("build_response_grid: degenerate response range");

  Eigen::VectorXd pts(grid_points);
  for (int j = 0; j < grid_points; ++j)
    pts[j] = lo + (hi - lo) * double(j) / double(grid_points - 1);
  pts[grid_points - 1] = hi;
  return Grid{std::move(pts), rule};
}

Eigen::MatrixXd make_artificial_response(const Eigen::VectorXd& y, const Grid& grid) {
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (!std::isfinite(y[i]))
      throw std::invalid_argument("make_artificial_response: non-finite response");
  Eigen::MatrixXd z(y.size(), grid.size());
  for (Eigen::Index i = 0; i < y.size(); ++i)
    for (Eigen::Index j = 0; j < grid.size(); ++j)
      z(i, j) = (y[i] < grid.points[j]) ? 1.0 : 0.0;
  return z;
}

const Eigen::VectorXd& CovariateSet::scalar(const std::string& name) const {
  auto it = scalars.find(name);
  if (it == scalars.end())
    throw std::invalid_argument("unknown scalar covariate '" + name + "'");
  return it->second;
}

const Eigen::MatrixXd& CovariateSet::functional(const std::string& name) const {
  auto it = functionals.find(name);
  if (it == functionals.end())
    throw std::invalid_argument("unknown functional covariate '" + name + "'");
  return it->second;
}

Eigen::VectorXd integration_weights(const Eigen::VectorXd& t_grid, IntegrationRule rule) {
  const Eigen::Index L = t_grid.size();
  if (L < 2) throw std::invalid_argument("integration_weights: functional grid needs >= 2 points");
  Eigen::VectorXd w = Eigen::VectorXd::Zero(L);
  if (rule == IntegrationRule::riemann_left) {
    for (Eigen::Index l = 0; l + 1 < L; ++l) w[l] = t_grid[l + 1] - t_grid[l];
  } else {
    w[0] = 0.5 * (t_grid[1] - t_grid[0]);
    for (Eigen::Index l = 1; l + 1 < L; ++l) w[l] = 0.5 * (t_grid[l + 1] - t_grid[l - 1]);
    w[L - 1] = 0.5 * (t_grid[L - 1] - t_grid[L - 2]);
  }
  return w;
}

namespace {

void check_columns(const TermSpec& term, const CovariateSet& covs, Eigen::Index n) {
  auto check_scalar = [&](const std::string& c) {
    if (covs.scalar(c).size() != n)
      throw std::invalid_argument("covariate '" + c + "' has mismatched subject count");
  };
  switch (term.kind) {
    case TermKind::intercept:
      break;
    case TermKind::constant_vector:
      if (term.columns.empty())
        throw std::invalid_argument("constant_vector term needs at least one column");
      for (const auto& c : term.columns) check_scalar(c);
      break;
    case TermKind::varying_scalar:
      if (term.columns.size() != 1)
        throw std::invalid_argument("varying_scalar term needs exactly one column");
      check_scalar(term.columns[0]);
      break;
    case TermKind::functional:
      if (term.columns.size() != 1)
        throw std::invalid_argument("functional term needs exactly one covariate");
      if (covs.functional(term.columns[0]).rows() != n)
        throw std::invalid_argument("functional covariate '" + term.columns[0] +
                                    "' has mismatched subject count");
      break;
    case TermKind::functional_interaction:
      if (term.columns.size() != 2)
        throw std::invalid_argument("functional_interaction term needs {covariate, modifier}");
      if (covs.functional(term.columns[0]).rows() != n)
        throw std::invalid_argument("functional covariate '" + term.columns[0] +
                                    "' has mismatched subject count");
      check_scalar(term.columns[1]);
      break;
  }
}

// Riemann-weighted basis integrals: row i, column d = sum_l X_i(t_l) B_d(t_l) w_l.
// Rows are computed one subject at a time so the result is bitwise
// permutation-equivariant in the subjects.
Eigen::MatrixXd functional_bracket(const TermSpec& term, const CovariateSet& covs,
                                   IntegrationRule rule) {
  const Eigen::MatrixXd& curves = covs.functional(term.columns[0]);
  if (covs.t_grid.size() != curves.cols())
    throw std::invalid_argument("functional covariate grid length mismatch");
  Eigen::VectorXd w = integration_weights(covs.t_grid, rule);
  Eigen::MatrixXd wbt = w.asDiagonal() * eval_basis(term.t_basis, covs.t_grid);  // L x kappa_t
  Eigen::MatrixXd bracket(curves.rows(), wbt.cols());
  for (Eigen::Index i = 0; i < curves.rows(); ++i) {
    Eigen::RowVectorXd curve = curves.row(i);
    bracket.row(i) = curve * wbt;
  }
  return bracket;
}

std::string default_label(const TermSpec& term) {
  switch (term.kind) {
    case TermKind::intercept: return "intercept";
    case TermKind::constant_vector: return "constant(" + term.columns[0] + ")";
    case TermKind::varying_scalar: return "scalar(" + term.columns[0] + ")";
    case TermKind::functional: return "functional(" + term.columns[0] + ")";
    case TermKind::functional_interaction:
      return "interaction(" + term.columns[0] + "*" + term.columns[1] + ")";
  }
  return "term";
}

}  // namespace

std::vector<DesignBlock> assemble_design(const std::vector<TermSpec>& terms,
                                         const CovariateSet& covs, const Grid& grid,
                                         IntegrationRule rule) {
  const Eigen::Index n = covs.n;
  const Eigen::Index J = grid.size();
  if (n < 1) throw std::invalid_argument("assemble_design: no subjects");

  std::vector<DesignBlock> blocks;
  blocks.reserve(terms.size());
  for (const TermSpec& term : terms) {
    check_columns(term, covs, n);
    DesignBlock block;
    block.label = term.label.empty() ? default_label(term) : term.label;
    switch (term.kind) {
      case TermKind::intercept: {
        Eigen::MatrixXd by = eval_basis(term.y_basis, grid.points);  // J x k0
        block.X.resize(n * J, by.cols());
        for (Eigen::Index i = 0; i < n; ++i) block.X.middleRows(i * J, J) = by;
        block.penalty = curvature_penalty(term.y_basis);
        break;
      }
      case TermKind::constant_vector: {
        const Eigen::Index p = Eigen::Index(term.columns.size());
        block.X.resize(n * J, p);
        for (Eigen::Index c = 0; c < p; ++c) {
          const Eigen::VectorXd& x = covs.scalar(term.columns[c]);
          for (Eigen::Index i = 0; i < n; ++i)
            block.X.col(c).segment(i * J, J).setConstant(x[i]);
        }
        block.penalty = PenaltyMatrix{Eigen::MatrixXd::Zero(p, p), int(p)};
        block.penalized = false;
        break;
      }
      case TermKind::varying_scalar: {
        Eigen::MatrixXd by = eval_basis(term.y_basis, grid.points);  // J x k
        const Eigen::VectorXd& x = covs.scalar(term.columns[0]);
        block.X.resize(n * J, by.cols());
        for (Eigen::Index i = 0; i < n; ++i) block.X.middleRows(i * J, J) = x[i] * by;
        block.penalty = curvature_penalty(term.y_basis);
        break;
      }
      case TermKind::functional:
      case TermKind::functional_interaction: {
        Eigen::MatrixXd bracket = functional_bracket(term, covs, rule);  // n x kt
        if (term.kind == TermKind::functional_interaction) {
          const Eigen::VectorXd& s = covs.scalar(term.columns[1]);
          bracket.array().colwise() *= s.array();
        }
        Eigen::MatrixXd by = eval_basis(term.y_basis, grid.points);  // J x ky
        const Eigen::Index kt = bracket.cols(), ky = by.cols();
        block.X.resize(n * J, kt * ky);
        // t-major columns: column dt*ky + dy = bracket(i,dt) * by(j,dy)
        for (Eigen::Index i = 0; i < n; ++i)
          for (Eigen::Index dt = 0; dt < kt; ++dt)
            block.X.block(i * J, dt * ky, J, ky) = bracket(i, dt) * by;
        block.penalty =
            tensor_penalty(curvature_penalty(term.t_basis), curvature_penalty(term.y_basis));
        break;
      }
    }
    blocks.push_back(std::move(block));
  }
  return blocks;
}

std::vector<DesignBlock> assemble_pointwise_design(const std::vector<TermSpec>& terms,
                                                   const CovariateSet& covs,
                                                   IntegrationRule rule) {
  const Eigen::Index n = covs.n;
  if (n < 1) throw std::invalid_argument("assemble_pointwise_design: no subjects");

  std::vector<DesignBlock> blocks;
  blocks.reserve(terms.size());
  for (const TermSpec& term : terms) {
    check_columns(term, covs, n);
    DesignBlock block;
    block.label = term.label.empty() ? default_label(term) : term.label;
    switch (term.kind) {
      case TermKind::intercept:
        block.X = Eigen::MatrixXd::Ones(n, 1);
        block.penalty = PenaltyMatrix{Eigen::MatrixXd::Zero(1, 1), 1};
        block.penalized = false;
        break;
      case TermKind::constant_vector: {
        const Eigen::Index p = Eigen::Index(term.columns.size());
        block.X.resize(n, p);
        for (Eigen::Index c = 0; c < p; ++c) block.X.col(c) = covs.scalar(term.columns[c]);
        block.penalty = PenaltyMatrix{Eigen::MatrixXd::Zero(p, p), int(p)};
        block.penalized = false;
        break;
      }
      case TermKind::varying_scalar:
        block.X = covs.scalar(term.columns[0]);
        block.penalty = PenaltyMatrix{Eigen::MatrixXd::Zero(1, 1), 1};
        block.penalized = false;
        break;
      case TermKind::functional:
      case TermKind::functional_interaction: {
        Eigen::MatrixXd bracket = functional_bracket(term, covs, rule);
        if (term.kind == TermKind::functional_interaction) {
          const Eigen::VectorXd& s = covs.scalar(term.columns[1]);
          bracket.array().colwise() *= s.array();
        }
        block.X = std::move(bracket);
        block.penalty = curvature_penalty(term.t_basis);
        break;
      }
    }
    blocks.push_back(std::move(block));
  }
  return blocks;
}

TermSpec intercept_term(const BasisSpec& y_basis) {
  TermSpec t;
  t.kind = TermKind::intercept;
  t.y_basis = y_basis;
  t.label = "intercept";
  return t;
}

TermSpec constant_vector_term(std::vector<std::string> columns) {
  TermSpec t;
  t.kind = TermKind::constant_vector;
  t.columns = std::move(columns);
  return t;
}

TermSpec varying_scalar_term(std::string column, const BasisSpec& y_basis) {
  TermSpec t;
  t.kind = TermKind::varying_scalar;
  t.columns = {std::move(column)};
  t.y_basis = y_basis;
  return t;
}

TermSpec functional_term(std::string covariate, const BasisSpec& t_basis,
                         const BasisSpec& y_basis) {
  TermSpec t;
  t.kind = TermKind::functional;
  t.columns = {std::move(covariate)};
  t.t_basis = t_basis;
  t.y_basis = y_basis;
  return t;
}

TermSpec functional_interaction_term(std::string covariate, std::string modifier,
                                     const BasisSpec& t_basis, const BasisSpec& y_basis) {
  TermSpec t;
  t.kind = TermKind::functional_interaction;
  t.columns = {std::move(covariate), std::move(modifier)};
  t.t_basis = t_basis;
  t.y_basis = y_basis;
  return t;
}

int term_dimension(const TermSpec& term, const CovariateSet&) {
  switch (term.kind) {
    case TermKind::intercept: return term.y_basis.dimension;
    case TermKind::constant_vector: return int(term.columns.size());
    case TermKind::varying_scalar: return term.y_basis.dimension;
    case TermKind::functional:
    case TermKind::functional_interaction:
      return term.t_basis.dimension * term.y_basis.dimension;
  }
  return 0;
}

Eigen::RowVectorXd assemble_row(const std::vector<TermSpec>& terms, const CovariateSet& covs,
                                Eigen::Index subject, double y, IntegrationRule rule) {
  if (subject < 0 || subject >= covs.n)
    throw std::invalid_argument("assemble_row: subject index out of range");
  Eigen::Index total = 0;
  for (const auto& t : terms) total += term_dimension(t, covs);
  Eigen::RowVectorXd row(total);
  Eigen::VectorXd y1(1);
  y1[0] = y;
  Eigen::Index off = 0;
  for (const TermSpec& term : terms) {
    const Eigen::Index p = term_dimension(term, covs);
    switch (term.kind) {
      case TermKind::intercept:
        row.segment(off, p) = eval_basis(term.y_basis, y1).row(0);
        break;
      case TermKind::constant_vector:
        for (Eigen::Index c = 0; c < p; ++c)
          row[off + c] = covs.scalar(term.columns[size_t(c)])[subject];
        break;
      case TermKind::varying_scalar:
        row.segment(off, p) =
            covs.scalar(term.columns[0])[subject] * eval_basis(term.y_basis, y1).row(0);
        break;
      case TermKind::functional:
      case TermKind::functional_interaction: {
        Eigen::VectorXd w = integration_weights(covs.t_grid, rule);
        Eigen::MatrixXd bt = eval_basis(term.t_basis, covs.t_grid);
        Eigen::RowVectorXd bracket =
            covs.functional(term.columns[0]).row(subject) * w.asDiagonal() * bt;
        if (term.kind == TermKind::functional_interaction)
          bracket *= covs.scalar(term.columns[1])[subject];
        Eigen::RowVectorXd by = eval_basis(term.y_basis, y1).row(0);
        const Eigen::Index kt = bracket.size(), ky = by.size();
        for (Eigen::Index dt = 0; dt < kt; ++dt)
          row.segment(off + dt * ky, ky) = bracket[dt] * by;
        break;
      }
    }
    off += p;
  }
  return row;
}

}  // namespace cdqr
