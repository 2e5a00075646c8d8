#include "cdqr/solver.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <thread>

namespace cdqr {

double inverse_logit(double eta) {
  if (eta >= 0.0) {
    const double e = std::exp(-eta);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

namespace {

double log1pexp(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

constexpr double kWeightFloor = 1e-10;
constexpr double kSolveRidge = 1e-10;  // inside the working-model solve only

struct StackedBlock {
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
  bool penalized = false;
  Eigen::MatrixXd D;
  double rank = 0.0;
  double log_pdet = 0.0;
};

struct StackedDesign {
  Eigen::MatrixXd X;  // N x p
  std::vector<StackedBlock> blocks;
  std::vector<size_t> penalized;  // indices into blocks
  Eigen::Index p = 0;

  Eigen::MatrixXd penalty_sum(const Eigen::VectorXd& lambdas) const {
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(p, p);
    for (size_t m = 0; m < penalized.size(); ++m) {
      const StackedBlock& b = blocks[penalized[m]];
      S.block(b.offset, b.offset, b.size, b.size) += lambdas[Eigen::Index(m)] * b.D;
    }
    return S;
  }
};

StackedDesign stack_blocks(const std::vector<DesignBlock>& blocks) {
  if (blocks.empty()) throw std::invalid_argument("fit: no design blocks");
  const Eigen::Index rows = blocks[0].X.rows();
  Eigen::Index p = 0;
  for (const auto& b : blocks) {
    if (b.X.rows() != rows) throw std::invalid_argument("fit: design blocks disagree on rows");
    if (b.penalty.matrix.rows() != b.X.cols() || b.penalty.matrix.cols() != b.X.cols())
      throw std::invalid_argument("fit: penalty size mismatch in block '" + b.label + "'");
    p += b.X.cols();
  }
  StackedDesign sd;
  sd.p = p;
  sd.X.resize(rows, p);
  Eigen::Index off = 0;
  for (const auto& b : blocks) {
    StackedBlock sb;
    sb.offset = off;
    sb.size = b.X.cols();
    sb.penalized = b.penalized;
    sd.X.middleCols(off, sb.size) = b.X;
    if (b.penalized) {
      sb.D = b.penalty.matrix;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sb.D);
      const double mx = std::max(es.eigenvalues().maxCoeff(), 1e-300);
      double lp = 0.0;
      int rank = 0;
      for (Eigen::Index i = 0; i < sb.size; ++i)
        if (es.eigenvalues()[i] > 1e-9 * mx) {
          lp += std::log(es.eigenvalues()[i]);
          ++rank;
        }
      sb.rank = rank;
      sb.log_pdet = lp;
      sd.penalized.push_back(sd.blocks.size());
    }
    sd.blocks.push_back(std::move(sb));
    off += b.X.cols();
  }
  return sd;
}

// 2*logL - theta' S theta, the fitting objective.
double penalized_objective(const Eigen::VectorXd& z, const Eigen::VectorXd& eta,
                           const Eigen::VectorXd& theta, const Eigen::MatrixXd& S) {
  double ll = 0.0;
  for (Eigen::Index r = 0; r < z.size(); ++r) ll += z[r] * eta[r] - log1pexp(eta[r]);
  return 2.0 * ll - theta.dot(S * theta);
}

struct IrlsResult {
  Eigen::VectorXd theta;
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;      // penalized log-likelihood scale (2logL - pen)
  double gradient_norm = 0.0;  // inf-norm of the objective gradient
};

// Penalized IRLS (Newton with step-halving) at fixed lambda.
IrlsResult penalized_irls(const StackedDesign& sd, const Eigen::VectorXd& z,
                          const Eigen::MatrixXd& S, Eigen::VectorXd theta, int max_iter,
                          double dev_tol, double grad_tol, std::vector<double>* trace) {
  const Eigen::Index N = sd.X.rows();
  IrlsResult res;
  Eigen::VectorXd eta = sd.X * theta;
  double obj = penalized_objective(z, eta, theta, S);
  if (trace) trace->push_back(obj);

  Eigen::VectorXd mu(N), w(N), zwork(N);
  Eigen::MatrixXd xw(N, sd.p);
  for (int it = 0; it < max_iter; ++it) {
    ++res.iterations;
    for (Eigen::Index r = 0; r < N; ++r) {
      mu[r] = inverse_logit(eta[r]);
      w[r] = std::max(mu[r] * (1.0 - mu[r]), kWeightFloor);
      zwork[r] = eta[r] + (z[r] - mu[r]) / w[r];
    }
    xw = w.array().sqrt().matrix().asDiagonal() * sd.X;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(sd.p, sd.p);
    A.selfadjointView<Eigen::Lower>().rankUpdate(xw.transpose());
    A = A.selfadjointView<Eigen::Lower>();
    Eigen::VectorXd b = sd.X.transpose() * (w.asDiagonal() * zwork);

    Eigen::MatrixXd M = A + S;
    M.diagonal().array() += kSolveRidge;
    Eigen::VectorXd theta_new = M.ldlt().solve(b);

    // Step-halving keeps the penalized log-likelihood nondecreasing.
    Eigen::VectorXd eta_new = sd.X * theta_new;
    double obj_new = penalized_objective(z, eta_new, theta_new, S);
    int halvings = 0;
    while (obj_new < obj - 1e-12 * (1.0 + std::abs(obj)) && halvings < 30) {
      theta_new = 0.5 * (theta_new + theta);
      eta_new = sd.X * theta_new;
      obj_new = penalized_objective(z, eta_new, theta_new, S);
      ++halvings;
    }
    if (obj_new < obj - 1e-12 * (1.0 + std::abs(obj))) {
      // No ascent direction left; report the current iterate.
      break;
    }
    const double rel = std::abs(obj_new - obj) / (std::abs(obj_new) + 0.1);
    theta = theta_new;
    eta = eta_new;
    obj = obj_new;
    if (trace) trace->push_back(obj);

    for (Eigen::Index r = 0; r < N; ++r) mu[r] = inverse_logit(eta[r]);
    Eigen::VectorXd grad = 2.0 * (sd.X.transpose() * (z - mu)) - 2.0 * (S * theta);
    res.gradient_norm = grad.lpNorm<Eigen::Infinity>();
    if (rel < dev_tol && res.gradient_norm < grad_tol) {
      res.converged = true;
      break;
    }
  }
  res.theta = std::move(theta);
  res.objective = obj;
  return res;
}

// Nelder-Mead minimizer for the low-dimensional smoothing criteria.
double nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd& x,
                   double step, int max_evals) {
  const Eigen::Index d = x.size();
  std::vector<Eigen::VectorXd> pts(size_t(d) + 1, x);
  std::vector<double> fv(size_t(d) + 1);
  int evals = 0;
  for (Eigen::Index i = 0; i < d; ++i) pts[size_t(i) + 1][i] += step;
  for (size_t i = 0; i <= size_t(d); ++i) {
    fv[i] = f(pts[i]);
    ++evals;
  }
  auto order = [&]() {
    std::vector<size_t> idx(fv.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return fv[a] < fv[b]; });
    std::vector<Eigen::VectorXd> p2;
    std::vector<double> f2;
    for (size_t i : idx) {
      p2.push_back(pts[i]);
      f2.push_back(fv[i]);
    }
    pts = std::move(p2);
    fv = std::move(f2);
  };
  order();
  while (evals < max_evals) {
    if (std::abs(fv.back() - fv.front()) < 1e-8 * (1.0 + std::abs(fv.front()))) break;
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (size_t i = 0; i < size_t(d); ++i) centroid += pts[i];
    centroid /= double(d);
    Eigen::VectorXd xr = centroid + (centroid - pts.back());
    double fr = f(xr);
    ++evals;
    if (fr < fv.front()) {
      Eigen::VectorXd xe = centroid + 2.0 * (centroid - pts.back());
      double fe = f(xe);
      ++evals;
      if (fe < fr) {
        pts.back() = xe;
        fv.back() = fe;
      } else {
        pts.back() = xr;
        fv.back() = fr;
      }
    } else if (fr < fv[size_t(d) - 1]) {
      pts.back() = xr;
      fv.back() = fr;
    } else {
      Eigen::VectorXd xc = centroid + 0.5 * (pts.back() - centroid);
      double fc = f(xc);
      ++evals;
      if (fc < fv.back()) {
        pts.back() = xc;
        fv.back() = fc;
      } else {
        for (size_t i = 1; i <= size_t(d); ++i) {
          pts[i] = pts[0] + 0.5 * (pts[i] - pts[0]);
          fv[i] = f(pts[i]);
          ++evals;
        }
      }
    }
    order();
  }
  x = pts.front();
  return fv.front();
}

// Working-model statistics at the current fit, sufficient for the smoothing
// criteria: A = X'WX, b = X'Wz, c = z'Wz.
struct WorkingStats {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  double c = 0.0;
  double n = 0.0;
};

WorkingStats working_stats(const StackedDesign& sd, const Eigen::VectorXd& z,
                           const Eigen::VectorXd& theta) {
  const Eigen::Index N = sd.X.rows();
  Eigen::VectorXd eta = sd.X * theta;
  Eigen::VectorXd w(N), zwork(N);
  for (Eigen::Index r = 0; r < N; ++r) {
    const double mu = inverse_logit(eta[r]);
    w[r] = std::max(mu * (1.0 - mu), kWeightFloor);
    zwork[r] = eta[r] + (z[r] - mu) / w[r];
  }
  WorkingStats ws;
  Eigen::MatrixXd xw = w.array().sqrt().matrix().asDiagonal() * sd.X;
  ws.A = Eigen::MatrixXd::Zero(sd.p, sd.p);
  ws.A.selfadjointView<Eigen::Lower>().rankUpdate(xw.transpose());
  ws.A = ws.A.selfadjointView<Eigen::Lower>();
  ws.b = sd.X.transpose() * (w.asDiagonal() * zwork);
  ws.c = (w.array() * zwork.array().square()).sum();
  ws.n = double(N);
  return ws;
}

// REML (or GCV) criterion of the Gaussian working model as a function of
// rho = log lambda.
double smoothing_criterion(const StackedDesign& sd, const WorkingStats& ws,
                           const Eigen::VectorXd& rho, SmoothingRule rule) {
  Eigen::VectorXd rho_c = rho.cwiseMax(-25.0).cwiseMin(25.0);
  Eigen::VectorXd lambdas = rho_c.array().exp();
  Eigen::MatrixXd S = sd.penalty_sum(lambdas);
  Eigen::MatrixXd M = ws.A + S;
  M.diagonal().array() += kSolveRidge;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
  Eigen::VectorXd theta = ldlt.solve(ws.b);
  const double rss = ws.c - 2.0 * theta.dot(ws.b) + theta.dot(ws.A * theta);

  double out;
  if (rule == SmoothingRule::gcv) {
    const double edf = ldlt.solve(ws.A).trace();
    const double denom = std::max(ws.n - edf, 1.0);
    out = ws.n * std::max(rss, 1e-300) / (denom * denom);
  } else {
    const double pen = theta.dot(S * theta);
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < sd.p; ++i)
      log_det += std::log(std::max(ldlt.vectorD()[i], 1e-300));
    double log_pdet_S = 0.0;
    for (size_t m = 0; m < sd.penalized.size(); ++m) {
      const StackedBlock& blk = sd.blocks[sd.penalized[m]];
      log_pdet_S += blk.rank * rho_c[Eigen::Index(m)] + blk.log_pdet;
    }
    out = rss + pen + log_det - log_pdet_S;
  }
  // Soft barrier against wandering off to extreme lambda.
  out += 1e-4 * (rho - rho_c).squaredNorm();
  return out;
}

struct PqlResult {
  Eigen::VectorXd theta;
  Eigen::VectorXd lambdas;
  ConvergenceRecord record;
};

PqlResult fit_pql(const StackedDesign& sd, const Eigen::VectorXd& z, const FitOptions& opts) {
  const size_t n_pen = sd.penalized.size();
  PqlResult out;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(sd.p);
  std::vector<double>* trace = opts.record_trace ? &out.record.objective_trace : nullptr;

  if (opts.smoothing == SmoothingRule::fixed || n_pen == 0) {
    Eigen::VectorXd lambdas(n_pen);
    if (opts.fixed_lambdas.size() == 1)
      lambdas.setConstant(opts.fixed_lambdas[0]);
    else if (opts.fixed_lambdas.size() == n_pen)
      for (size_t m = 0; m < n_pen; ++m) lambdas[Eigen::Index(m)] = opts.fixed_lambdas[m];
    else if (opts.smoothing == SmoothingRule::fixed)
      throw std::invalid_argument("fit: fixed_lambdas must have one entry per penalized term");
    else
      lambdas.setOnes();
    for (Eigen::Index m = 0; m < lambdas.size(); ++m)
      if (!(lambdas[m] > 0.0)) throw std::invalid_argument("fit: lambdas must be positive");

    Eigen::MatrixXd S = sd.penalty_sum(lambdas);
    IrlsResult irls = penalized_irls(sd, z, S, theta, opts.max_inner, opts.deviance_tol,
                                     opts.gradient_tol, trace);
    out.theta = irls.theta;
    out.lambdas = lambdas;
    out.record.inner_iterations = irls.iterations;
    out.record.outer_iterations = 0;
    out.record.converged = irls.converged;
    out.record.gradient_norm = irls.gradient_norm;
    return out;
  }

  Eigen::VectorXd rho = Eigen::VectorXd::Zero(Eigen::Index(n_pen));
  double prev_dev = std::numeric_limits<double>::infinity();
  bool converged = false;
  int outer = 0;
  IrlsResult irls;
  for (outer = 0; outer < opts.max_outer; ++outer) {
    Eigen::MatrixXd S = sd.penalty_sum(rho.array().exp());
    irls = penalized_irls(sd, z, S, theta, opts.max_inner, opts.deviance_tol, opts.gradient_tol,
                          trace);
    theta = irls.theta;
    out.record.inner_iterations += irls.iterations;

    const double dev = -irls.objective;  // penalized deviance scale
    const double rel = std::abs(dev - prev_dev) / (std::abs(dev) + 0.1);
    out.record.final_rel_change = rel;
    if (outer > 0 && rel < opts.deviance_tol) {
      converged = irls.converged;
      break;
    }
    prev_dev = dev;

    WorkingStats ws = working_stats(sd, z, theta);
    auto crit = [&](const Eigen::VectorXd& r) {
      return smoothing_criterion(sd, ws, r, opts.smoothing);
    };
    nelder_mead(crit, rho, outer == 0 ? 1.0 : 0.3, 400);
  }
  out.record.outer_iterations = std::min(outer + 1, opts.max_outer);

  // Final polish at the selected lambda so the reported optimum satisfies the
  // gradient tolerance.
  {
    Eigen::MatrixXd S = sd.penalty_sum(rho.array().exp());
    irls = penalized_irls(sd, z, S, theta, opts.max_inner, opts.deviance_tol, opts.gradient_tol,
                          trace);
    theta = irls.theta;
    out.record.inner_iterations += irls.iterations;
  }
  out.theta = theta;
  out.lambdas = rho.array().exp();
  out.record.gradient_norm = irls.gradient_norm;
  out.record.converged = converged && irls.converged;
  return out;
}

Eigen::VectorXd stack_response(const Eigen::MatrixXd& Z) {
  Eigen::VectorXd z(Z.rows() * Z.cols());
  for (Eigen::Index i = 0; i < Z.rows(); ++i)
    for (Eigen::Index j = 0; j < Z.cols(); ++j) z[i * Z.cols() + j] = Z(i, j);
  return z;
}

void check_binary(const Eigen::MatrixXd& Z) {
  for (Eigen::Index i = 0; i < Z.rows(); ++i)
    for (Eigen::Index j = 0; j < Z.cols(); ++j)
      if (Z(i, j) != 0.0 && Z(i, j) != 1.0)
        throw std::invalid_argument("fit: artificial response must be binary");
}

}  // namespace

Eigen::VectorXd FittedCdfModel::stacked_coefficients() const {
  Eigen::Index p = 0;
  for (const auto& c : coefficients) p += c.size();
  Eigen::VectorXd out(p);
  Eigen::Index off = 0;
  for (const auto& c : coefficients) {
    out.segment(off, c.size()) = c;
    off += c.size();
  }
  return out;
}

FittedCdfModel fit_joint(const std::vector<DesignBlock>& blocks, const Eigen::MatrixXd& Z,
                         const Grid& grid, const std::vector<TermSpec>& terms,
                         const Eigen::VectorXd& t_grid, const FitOptions& options) {
  check_binary(Z);
  const double total = Z.sum();
  if (total == 0.0 || total == double(Z.size()))
    throw std::invalid_argument("fit_joint: artificial response is all-0 or all-1");
  if (Z.cols() != grid.size()) throw std::invalid_argument("fit_joint: Z/grid size mismatch");

  StackedDesign sd = stack_blocks(blocks);
  if (sd.X.rows() != Z.rows() * Z.cols())
    throw std::invalid_argument("fit_joint: blocks must have n*J rows");

  PqlResult pql = fit_pql(sd, stack_response(Z), options);

  FittedCdfModel model;
  model.mode = FitMode::joint;
  model.response_grid = grid;
  model.terms = terms;
  model.t_grid = t_grid;
  model.convergence = std::move(pql.record);
  model.coefficients.reserve(blocks.size());
  for (size_t b = 0; b < blocks.size(); ++b) {
    const auto& sb = sd.blocks[b];
    model.coefficients.push_back(pql.theta.segment(sb.offset, sb.size));
  }
  model.lambdas.assign(pql.lambdas.data(), pql.lambdas.data() + pql.lambdas.size());
  for (Eigen::Index i = 0; i < pql.theta.size(); ++i)
    if (!std::isfinite(pql.theta[i])) throw std::runtime_error("fit_joint: non-finite coefficients");
  return model;
}

FittedCdfModel fit_pointwise(const std::vector<DesignBlock>& pointwise_blocks,
                             const Eigen::MatrixXd& Z, const Grid& grid,
                             const std::vector<TermSpec>& terms, const Eigen::VectorXd& t_grid,
                             const FitOptions& options) {
  check_binary(Z);
  const Eigen::Index n = Z.rows();
  const Eigen::Index J = Z.cols();
  if (J != grid.size()) throw std::invalid_argument("fit_pointwise: Z/grid size mismatch");

  StackedDesign sd = stack_blocks(pointwise_blocks);
  if (sd.X.rows() != n) throw std::invalid_argument("fit_pointwise: blocks must have n rows");
  const size_t n_pen = sd.penalized.size();

  FittedCdfModel model;
  model.mode = FitMode::pointwise;
  model.response_grid = grid;
  model.terms = terms;
  model.t_grid = t_grid;
  model.pointwise_coefficients = Eigen::MatrixXd::Zero(J, sd.p);
  model.pointwise_lambdas = Eigen::MatrixXd::Zero(J, Eigen::Index(n_pen));
  model.point_converged.assign(size_t(J), 0);

  std::vector<std::uint8_t> degenerate(size_t(J), 0);
  for (Eigen::Index j = 0; j < J; ++j) {
    const double cs = Z.col(j).sum();
    if (cs == 0.0 || cs == double(n)) degenerate[size_t(j)] = 1;
  }
  if (std::all_of(degenerate.begin(), degenerate.end(), [](std::uint8_t d) { return d != 0; }))
    throw std::invalid_argument("fit_pointwise: every grid point is degenerate");

  // Independent subproblems; results are written by index so the outcome does
  // not depend on scheduling.
  std::atomic<Eigen::Index> next{0};
  std::atomic<int> total_inner{0};
  std::atomic<bool> failed{false};
  auto worker = [&]() {
    for (;;) {
      const Eigen::Index j = next.fetch_add(1);
      if (j >= J || failed.load()) break;
      if (degenerate[size_t(j)]) continue;
      try {
        PqlResult pql = fit_pql(sd, Z.col(j), options);
        model.pointwise_coefficients.row(j) = pql.theta.transpose();
        model.pointwise_lambdas.row(j) = pql.lambdas.transpose();
        model.point_converged[size_t(j)] = pql.record.converged ? 1 : 0;
        total_inner.fetch_add(pql.record.inner_iterations);
      } catch (...) {
        failed.store(true);
        throw;
      }
    }
  };
  const int threads = std::max(1, options.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failed.load()) throw std::runtime_error("fit_pointwise: a grid-point fit failed");

  // Degenerate points inherit the nearest non-degenerate fit, which continues
  // the CDF monotonically into the saturated region.
  for (Eigen::Index j = 0; j < J; ++j) {
    if (!degenerate[size_t(j)]) continue;
    model.degenerate_points.push_back(int(j));
    Eigen::Index best = -1, best_dist = J + 1;
    for (Eigen::Index k = 0; k < J; ++k) {
      if (degenerate[size_t(k)]) continue;
      const Eigen::Index dist = std::abs(k - j);
      if (dist < best_dist) {
        best_dist = dist;
        best = k;
      }
    }
    model.pointwise_coefficients.row(j) = model.pointwise_coefficients.row(best);
    model.pointwise_lambdas.row(j) = model.pointwise_lambdas.row(best);
    model.point_converged[size_t(j)] = model.point_converged[size_t(best)];
  }

  model.convergence.inner_iterations = total_inner.load();
  model.convergence.outer_iterations = 0;
  model.convergence.converged =
      std::all_of(model.point_converged.begin(), model.point_converged.end(),
                  [](std::uint8_t c) { return c != 0; });
  return model;
}

namespace {

void check_prediction_inputs(const FittedCdfModel& model, const CovariateSet& covs) {
  bool has_functional = false;
  for (const auto& t : model.terms)
    if (t.kind == TermKind::functional || t.kind == TermKind::functional_interaction)
      has_functional = true;
  if (has_functional) {
    if (covs.t_grid.size() != model.t_grid.size() ||
        (covs.t_grid - model.t_grid).lpNorm<Eigen::Infinity>() >
            1e-9 * (1.0 + model.t_grid.lpNorm<Eigen::Infinity>()))
      throw std::invalid_argument("predict: functional covariates must be on the model's t grid");
  }
}

}  // namespace

std::vector<ConditionalCdf> predict_cdf(const FittedCdfModel& model, const CovariateSet& covs) {
  check_prediction_inputs(model, covs);
  const Eigen::Index n = covs.n;
  const Eigen::Index J = model.response_grid.size();
  Eigen::MatrixXd eta(n, J);

  if (model.mode == FitMode::joint) {
    std::vector<DesignBlock> blocks =
        assemble_design(model.terms, covs, model.response_grid, model.integration);
    eta.setZero();
    for (size_t b = 0; b < blocks.size(); ++b) {
      Eigen::VectorXd contrib = blocks[b].X * model.coefficients[b];
      for (Eigen::Index i = 0; i < n; ++i)
        eta.row(i) += contrib.segment(i * J, J).transpose();
    }
  } else {
    std::vector<DesignBlock> blocks =
        assemble_pointwise_design(model.terms, covs, model.integration);
    Eigen::Index p = 0;
    for (const auto& b : blocks) p += b.X.cols();
    Eigen::MatrixXd X(n, p);
    Eigen::Index off = 0;
    for (const auto& b : blocks) {
      X.middleCols(off, b.X.cols()) = b.X;
      off += b.X.cols();
    }
    eta = X * model.pointwise_coefficients.transpose();  // n x J
  }

  std::vector<ConditionalCdf> out(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    ConditionalCdf c;
    c.subject = i;
    c.y = model.response_grid.points;
    c.values.resize(J);
    for (Eigen::Index j = 0; j < J; ++j) c.values[j] = inverse_logit(eta(i, j));
    out[size_t(i)] = std::move(c);
  }
  return out;
}

Eigen::VectorXd predict_cdf_at(const FittedCdfModel& model, const CovariateSet& covs,
                               const Eigen::VectorXd& y_per_subject) {
  check_prediction_inputs(model, covs);
  if (y_per_subject.size() != covs.n)
    throw std::invalid_argument("predict_cdf_at: need one response value per subject");
  Eigen::VectorXd out(covs.n);

  if (model.mode == FitMode::joint) {
    Eigen::VectorXd theta = model.stacked_coefficients();
    for (Eigen::Index i = 0; i < covs.n; ++i) {
      Eigen::RowVectorXd row =
          assemble_row(model.terms, covs, i, y_per_subject[i], model.integration);
      out[i] = inverse_logit(row.dot(theta));
    }
    return out;
  }

  // Pointwise: linear interpolation of the linear predictor between grid fits.
  std::vector<DesignBlock> blocks = assemble_pointwise_design(model.terms, covs, model.integration);
  Eigen::Index p = 0;
  for (const auto& b : blocks) p += b.X.cols();
  Eigen::MatrixXd X(covs.n, p);
  Eigen::Index off = 0;
  for (const auto& b : blocks) {
    X.middleCols(off, b.X.cols()) = b.X;
    off += b.X.cols();
  }
  const Eigen::VectorXd& gp = model.response_grid.points;
  const Eigen::Index J = gp.size();
  for (Eigen::Index i = 0; i < covs.n; ++i) {
    const double y = y_per_subject[i];
    if (y < gp[0] - 1e-12 || y > gp[J - 1] + 1e-12)
      throw std::invalid_argument("predict_cdf_at: response value outside the model grid");
    auto it = std::upper_bound(gp.data(), gp.data() + J, std::clamp(y, gp[0], gp[J - 1]));
    Eigen::Index hi = std::clamp<Eigen::Index>(it - gp.data(), 1, J - 1);
    Eigen::Index lo = hi - 1;
    const double u = (y - gp[lo]) / (gp[hi] - gp[lo]);
    const double eta_lo = X.row(i).dot(model.pointwise_coefficients.row(lo));
    const double eta_hi = X.row(i).dot(model.pointwise_coefficients.row(hi));
    out[i] = inverse_logit((1.0 - u) * eta_lo + u * eta_hi);
  }
  return out;
}

}  // namespace cdqr
