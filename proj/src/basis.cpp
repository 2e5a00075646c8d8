#include "cdqr/basis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdqr {

namespace {

// Nodes/weights of the n-point Gauss-Legendre rule on [-1, 1], n <= 8.
// Enough for the curvature penalty of any degree we support (exactness 2n-1).
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  // Newton iteration on Legendre polynomials.
  for (int i = 0; i < n; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      double dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    double dp = n * (x * p1 - p0) / (x * x - 1.0);
    nodes[i] = x;
    weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

// Knot span index mu with knots[mu] <= x < knots[mu+1], clamped so that the
// span is never empty; x == hi maps to the last nonempty span.
int find_span(const BasisSpec& spec, double x) {
  const int p = spec.degree;
  const int high = spec.dimension;  // knots[dimension] == hi
  if (x >= spec.knots[high]) return high - 1;
  const double* base = spec.knots.data();
  int mu = int(std::upper_bound(base + p, base + high + 1, x) - base) - 1;
  return std::max(mu, p);
}

// de Boor basis evaluation with derivatives (the standard triangular-table
// algorithm). Writes the degree+1 nonzero values of the deriv-th derivative
// at x into out; the first nonzero function index is span - degree.
void basis_funs_deriv(const BasisSpec& spec, int span, double x, int deriv,
                      std::vector<double>& out) {
  const int p = spec.degree;
  const Eigen::VectorXd& U = spec.knots;
  std::vector<std::vector<double>> ndu(p + 1, std::vector<double>(p + 1, 0.0));
  std::vector<double> left(p + 1, 0.0), right(p + 1, 0.0);
  ndu[0][0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - U[span + 1 - j];
    right[j] = U[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }
  out.assign(p + 1, 0.0);
  if (deriv == 0) {
    for (int j = 0; j <= p; ++j) out[j] = ndu[j][p];
    return;
  }
  if (deriv > p) return;  // derivative beyond degree vanishes
  std::vector<std::vector<double>> a(2, std::vector<double>(p + 1, 0.0));
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    a[0][0] = 1.0;
    double d = 0.0;
    for (int k = 1; k <= deriv; ++k) {
      d = 0.0;
      int rk = r - k, pk = p - k;
      if (r >= k) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        d = a[s2][0] * ndu[rk][pk];
      }
      int j1 = (rk >= -1) ? 1 : -rk;
      int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        d += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
        d += a[s2][k] * ndu[r][pk];
      }
      std::swap(s1, s2);
    }
    out[r] = d;
  }
  double factor = p;
  for (int k = 2; k <= deriv; ++k) factor *= (p - k + 1);
  for (int r = 0; r <= p; ++r) out[r] *= factor;
}

}  // namespace

BasisSpec make_basis(double lo, double hi, int dimension, int degree) {
  if (degree < 0) throw std::invalid_argument("make_basis: degree must be nonnegative");
  if (dimension < degree + 1)
    throw std::invalid_argument("make_basis: dimension " + std::to_string(dimension) +
                                " is too small for degree " + std::to_string(degree) +
                                " (need at least degree+1)");
  if (!(lo < hi)) throw std::invalid_argument("make_basis: degenerate domain");

  BasisSpec spec;
  spec.degree = degree;
  spec.dimension = dimension;
  spec.lo = lo;
  spec.hi = hi;
  const int n_interior = dimension - degree - 1;
  spec.knots.resize(dimension + degree + 1);
  for (int i = 0; i <= degree; ++i) spec.knots[i] = lo;
  for (int i = 0; i < n_interior; ++i)
    spec.knots[degree + 1 + i] = lo + (hi - lo) * double(i + 1) / double(n_interior + 1);
  for (int i = 0; i <= degree; ++i) spec.knots[dimension + i] = hi;
  return spec;
}

Eigen::MatrixXd eval_basis(const BasisSpec& spec, const Eigen::VectorXd& points, int deriv) {
  if (deriv < 0) throw std::invalid_argument("eval_basis: negative derivative order");
  const double tol = 1e-12 * (1.0 + std::abs(spec.lo) + std::abs(spec.hi));
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(points.size(), spec.dimension);
  std::vector<double> vals;
  for (Eigen::Index r = 0; r < points.size(); ++r) {
    double x = points[r];
    if (x < spec.lo - tol || x > spec.hi + tol)
      throw std::invalid_argument("eval_basis: point " + std::to_string(x) +
                                  " outside basis domain [" + std::to_string(spec.lo) +
                                  ", " + std::to_string(spec.hi) + "]");
    x = std::clamp(x, spec.lo, spec.hi);
    int span = find_span(spec, x);
    basis_funs_deriv(spec, span, x, deriv, vals);
    for (int j = 0; j <= spec.degree; ++j) out(r, span - spec.degree + j) = vals[j];
  }
  return out;
}

PenaltyMatrix curvature_penalty(const BasisSpec& spec) {
  if (spec.degree < 2)
    throw std::invalid_argument("curvature_penalty: second derivative undefined for degree < 2");

  // B'' is piecewise polynomial of degree-2, so the integrand has degree
  // 2(degree-2); n-point Gauss-Legendre is exact through 2n-1.
  const int n_nodes = std::max(1, spec.degree - 1);
  std::vector<double> gx, gw;
  gauss_legendre(n_nodes, gx, gw);

  const int p = spec.degree;
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(spec.dimension, spec.dimension);
  std::vector<double> vals;
  for (int k = p; k < spec.dimension; ++k) {
    const double a = spec.knots[k], b = spec.knots[k + 1];
    if (!(b > a)) continue;
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (int q = 0; q < n_nodes; ++q) {
      const double x = mid + half * gx[q];
      const double w = half * gw[q];
      int span = find_span(spec, x);
      basis_funs_deriv(spec, span, x, 2, vals);
      const int first = span - p;
      for (int i = 0; i <= p; ++i)
        for (int j = 0; j <= p; ++j)
          D(first + i, first + j) += w * vals[i] * vals[j];
    }
  }
  D = 0.5 * (D + D.transpose().eval());
  return PenaltyMatrix{D, 2};
}

PenaltyMatrix tensor_penalty(const PenaltyMatrix& p_t, const PenaltyMatrix& p_y) {
  const Eigen::Index kt = p_t.matrix.rows();
  const Eigen::Index ky = p_y.matrix.rows();
  if (p_t.matrix.cols() != kt || p_y.matrix.cols() != ky)
    throw std::invalid_argument("tensor_penalty: penalty matrices must be square");

  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(kt * ky, kt * ky);
  for (Eigen::Index dt = 0; dt < kt; ++dt)
    for (Eigen::Index dt2 = 0; dt2 < kt; ++dt2)
      for (Eigen::Index dy = 0; dy < ky; ++dy)
        D(dt * ky + dy, dt2 * ky + dy) += p_t.matrix(dt, dt2);
  for (Eigen::Index dt = 0; dt < kt; ++dt)
    for (Eigen::Index dy = 0; dy < ky; ++dy)
      for (Eigen::Index dy2 = 0; dy2 < ky; ++dy2)
        D(dt * ky + dy, dt * ky + dy2) += p_y.matrix(dy, dy2);

  // Both summands are PSD, so the joint null space is the product of the
  // marginal null spaces.
  return PenaltyMatrix{D, p_t.rank_deficiency * p_y.rank_deficiency};
}

Eigen::VectorXd greville_abscissae(const BasisSpec& spec) {
  Eigen::VectorXd g(spec.dimension);
  for (int d = 0; d < spec.dimension; ++d) {
    double s = 0.0;
    for (int j = 1; j <= spec.degree; ++j) s += spec.knots[d + j];
    g[d] = s / spec.degree;
  }
  return g;
}

}  // namespace cdqr
