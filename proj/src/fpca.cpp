#include "cdqr/fpca.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

namespace cdqr {

namespace {

// Bins raw observations by exact value. On common-grid designs this collapses
// the smoothing problem to one weighted row per cell while `extra_rss` and
// `n_total` keep the REML criterion identical to the raw-data one.
struct Binned1d {
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> count;
  double extra_rss = 0.0;
  double n_total = 0.0;
  std::map<double, size_t> index;
};

Binned1d bin_by_value(const std::vector<double>& x, const std::vector<double>& y) {
  Binned1d out;
  std::map<double, std::pair<double, double>> cells;  // x -> (sum, count)
  for (size_t i = 0; i < x.size(); ++i) {
    auto& c = cells[x[i]];
    c.first += y[i];
    c.second += 1.0;
  }
  for (const auto& [xv, sc] : cells) {
    out.index[xv] = out.x.size();
    out.x.push_back(xv);
    out.mean.push_back(sc.first / sc.second);
    out.count.push_back(sc.second);
  }
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = y[i] - out.mean[out.index.at(x[i])];
    out.extra_rss += d * d;
  }
  out.n_total = double(x.size());
  return out;
}

Eigen::VectorXd to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), Eigen::Index(v.size()));
}

Eigen::VectorXd interp_grid(const Eigen::VectorXd& grid, const Eigen::VectorXd& values,
                            const Eigen::VectorXd& at) {
  Eigen::VectorXd out(at.size());
  const Eigen::Index L = grid.size();
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    double t = std::clamp(at[i], grid[0], grid[L - 1]);
    auto it = std::upper_bound(grid.data(), grid.data() + L, t);
    Eigen::Index hi = std::clamp<Eigen::Index>(it - grid.data(), 1, L - 1);
    Eigen::Index lo = hi - 1;
    double u = (t - grid[lo]) / (grid[hi] - grid[lo]);
    out[i] = (1.0 - u) * values[lo] + u * values[hi];
  }
  return out;
}

}  // namespace

Eigen::Index FpcaModel::subject_index(const std::string& id) const {
  auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw std::invalid_argument("fpca: unknown subject id '" + id + "'");
  return it - ids.begin();
}

FpcaModel fit_fpca(const std::vector<FunctionalSample>& samples, const Grid& grid,
                   const FpcaOptions& options) {
  const Eigen::Index n = Eigen::Index(samples.size());
  if (n < 2) throw std::invalid_argument("fit_fpca: need at least 2 subjects");
  if (!(options.pve > 0.0 && options.pve <= 1.0))
    throw std::invalid_argument("fit_fpca: pve must lie in (0, 1]");

  const double lo = grid.min(), hi = grid.max();
  const Eigen::Index L = grid.size();
  const double delta = (hi - lo) / double(L - 1);
  for (Eigen::Index l = 1; l < L; ++l)
    if (std::abs((grid.points[l] - grid.points[l - 1]) - delta) > 1e-8 * (hi - lo))
      throw std::invalid_argument("fit_fpca: grid must be equally spaced");

  size_t total_obs = 0;
  for (const auto& s : samples) {
    if (s.times.size() != s.values.size() || s.times.size() < 1)
      throw std::invalid_argument("fit_fpca: empty or malformed sample '" + s.id + "'");
    for (Eigen::Index j = 0; j < s.times.size(); ++j) {
      if (!std::isfinite(s.values[j]) || !std::isfinite(s.times[j]))
        throw std::invalid_argument("fit_fpca: non-finite observation in '" + s.id + "'");
      if (s.times[j] < lo - 1e-12 || s.times[j] > hi + 1e-12)
        throw std::invalid_argument("fit_fpca: observation time outside grid for '" + s.id + "'");
    }
    total_obs += size_t(s.times.size());
  }

  FpcaModel model;
  model.grid = grid.points;
  model.pve = options.pve;
  model.ids.reserve(size_t(n));
  for (const auto& s : samples) model.ids.push_back(s.id);

  // --- Mean: pooled univariate P-spline over all (t, W) pairs.
  BasisSpec mean_basis = make_basis(lo, hi, options.mean_basis_dim);
  Eigen::VectorXd mean_coef;
  {
    std::vector<double> ts, ws;
    ts.reserve(total_obs);
    ws.reserve(total_obs);
    for (const auto& s : samples)
      for (Eigen::Index j = 0; j < s.times.size(); ++j) {
        ts.push_back(std::clamp(s.times[j], lo, hi));
        ws.push_back(s.values[j]);
      }
    Binned1d binned = bin_by_value(ts, ws);
    WeightedDesign wd;
    wd.B = eval_basis(mean_basis, to_vec(binned.x));
    wd.w = to_vec(binned.count);
    wd.ybar = to_vec(binned.mean);
    wd.extra_rss = binned.extra_rss;
    wd.n_total = binned.n_total;
    mean_coef = fit_penalized_gaussian(wd, curvature_penalty(mean_basis), options.smoothing,
                                       options.fixed_lambda)
                    .coef;
  }
  model.mean = eval_basis(mean_basis, grid.points) * mean_coef;

  // Centered observations, with times clamped into the grid range.
  std::vector<Eigen::VectorXd> resid(static_cast<size_t>(n));
  std::vector<Eigen::VectorXd> times(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd t = samples[size_t(i)].times;
    for (Eigen::Index j = 0; j < t.size(); ++j) t[j] = std::clamp(t[j], lo, hi);
    times[size_t(i)] = t;
    resid[size_t(i)] = samples[size_t(i)].values - eval_basis(mean_basis, t) * mean_coef;
  }

  // --- Covariance: bivariate P-spline on raw off-diagonal cross-products.
  // Unique observation times index the binning cells.
  Binned1d diag_cells;
  {
    std::vector<double> ts, r2;
    ts.reserve(total_obs);
    r2.reserve(total_obs);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < times[size_t(i)].size(); ++j) {
        ts.push_back(times[size_t(i)][j]);
        r2.push_back(resid[size_t(i)][j] * resid[size_t(i)][j]);
      }
    diag_cells = bin_by_value(ts, r2);
  }
  const Eigen::Index n_unique = Eigen::Index(diag_cells.x.size());
  Eigen::VectorXd unique_t = to_vec(diag_cells.x);

  BasisSpec cov_basis =
      make_basis(lo, hi, std::min<int>(options.cov_basis_dim, std::max<int>(4, int(n_unique))));
  Eigen::MatrixXd bt_unique = eval_basis(cov_basis, unique_t);  // n_unique x kappa
  const Eigen::Index kc = cov_basis.dimension;

  Eigen::MatrixXd cov_coef_mat;  // kappa x kappa, surface = b(s)' Theta b(t)
  {
    // Accumulate ordered off-diagonal pairs (both orders => symmetric fit).
    std::map<std::pair<Eigen::Index, Eigen::Index>, std::pair<double, double>> cells;
    double n_pairs = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& t = times[size_t(i)];
      const auto& r = resid[size_t(i)];
      for (Eigen::Index a = 0; a < t.size(); ++a)
        for (Eigen::Index b = 0; b < t.size(); ++b) {
          if (a == b) continue;
          auto key = std::make_pair(Eigen::Index(diag_cells.index.at(t[a])),
                                    Eigen::Index(diag_cells.index.at(t[b])));
          auto& c = cells[key];
          c.first += r[a] * r[b];
          c.second += 1.0;
          n_pairs += 1.0;
        }
    }
    if (cells.empty())
      throw std::invalid_argument("fit_fpca: no off-diagonal covariance pairs (need m_i >= 2)");

    const Eigen::Index u = Eigen::Index(cells.size());
    WeightedDesign wd;
    wd.B.resize(u, kc * kc);
    wd.w.resize(u);
    wd.ybar.resize(u);
    Eigen::Index row = 0;
    for (const auto& [key, sc] : cells) {
      for (Eigen::Index dt = 0; dt < kc; ++dt)
        wd.B.row(row).segment(dt * kc, kc) =
            bt_unique(key.first, dt) * bt_unique.row(key.second);
      wd.w[row] = sc.second;
      wd.ybar[row] = sc.first / sc.second;
      ++row;
    }
    double extra = 0.0;
    {
      Eigen::Index idx = 0;
      std::map<std::pair<Eigen::Index, Eigen::Index>, double> cell_mean;
      for (const auto& [key, sc] : cells) cell_mean[key] = sc.first / sc.second, ++idx;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& t = times[size_t(i)];
        const auto& r = resid[size_t(i)];
        for (Eigen::Index a = 0; a < t.size(); ++a)
          for (Eigen::Index b = 0; b < t.size(); ++b) {
            if (a == b) continue;
            auto key = std::make_pair(Eigen::Index(diag_cells.index.at(t[a])),
                                      Eigen::Index(diag_cells.index.at(t[b])));
            const double d = r[a] * r[b] - cell_mean.at(key);
            extra += d * d;
          }
      }
    }
    wd.extra_rss = extra;
    wd.n_total = n_pairs;

    PenaltyMatrix pc = curvature_penalty(cov_basis);
    GaussianSmooth fit =
        fit_penalized_gaussian(wd, tensor_penalty(pc, pc), options.smoothing, options.fixed_lambda);
    cov_coef_mat = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                  Eigen::RowMajor>>(fit.coef.data(), kc, kc);
  }

  // Noise variance from the gap between raw and smoothed diagonals.
  {
    double num = 0.0, den = 0.0;
    for (Eigen::Index u = 0; u < n_unique; ++u) {
      Eigen::VectorXd b = bt_unique.row(u);
      const double smoothed = b.dot(cov_coef_mat * b);
      num += diag_cells.count[size_t(u)] * (diag_cells.mean[size_t(u)] - smoothed);
      den += diag_cells.count[size_t(u)];
    }
    model.noise_variance = std::max(0.0, num / den);
  }

  // --- Eigen decomposition on the grid, Riemann-scaled.
  Eigen::MatrixXd bg = eval_basis(cov_basis, grid.points);  // L x kappa
  Eigen::MatrixXd cov_grid = bg * cov_coef_mat * bg.transpose();
  cov_grid = 0.5 * (cov_grid + cov_grid.transpose().eval());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(delta * cov_grid);
  if (es.info() != Eigen::Success) throw std::runtime_error("fit_fpca: eigensolver failed");

  std::vector<std::pair<double, Eigen::Index>> order;
  double positive_sum = 0.0;
  for (Eigen::Index k = 0; k < L; ++k) {
    const double ev = es.eigenvalues()[k];
    if (ev > 0.0) {
      order.emplace_back(ev, k);
      positive_sum += ev;
    }
  }
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  if (order.empty() || positive_sum <= 0.0)
    throw std::runtime_error("fit_fpca: estimated covariance has no positive eigenvalues");

  int K = 0;
  double cum = 0.0;
  for (const auto& [ev, idx] : order) {
    ++K;
    cum += ev;
    if (cum / positive_sum >= options.pve) break;
  }
  model.eigenvalues.resize(K);
  model.eigenfunctions.resize(L, K);
  for (int k = 0; k < K; ++k) {
    model.eigenvalues[k] = order[size_t(k)].first;
    model.eigenfunctions.col(k) =
        es.eigenvectors().col(order[size_t(k)].second) / std::sqrt(delta);
  }

  // --- Scores.
  const Eigen::VectorXd lam = model.eigenvalues;
  model.scores.resize(n, K);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = times[size_t(i)];
    const auto& r = resid[size_t(i)];
    const Eigen::Index m = t.size();
    Eigen::MatrixXd phi_i(m, K);
    for (int k = 0; k < K; ++k)
      phi_i.col(k) = interp_grid(model.grid, model.eigenfunctions.col(k), t);

    const bool dense = options.score_method == ScoreMethod::riemann ||
                       (options.score_method == ScoreMethod::automatic && 2 * m >= L);
    if (dense && m >= 2) {
      // Riemann (trapezoid) projection over the subject's own times.
      Eigen::VectorXd w = integration_weights(t, IntegrationRule::trapezoid);
      for (int k = 0; k < K; ++k)
        model.scores(i, k) = (w.array() * r.array() * phi_i.col(k).array()).sum();
    } else {
      // BLUP with the fitted covariance; the small ridge keeps the solve
      // well-posed when the noise variance estimate is zero.
      Eigen::MatrixXd sigma = phi_i * lam.asDiagonal() * phi_i.transpose();
      sigma.diagonal().array() += model.noise_variance + 1e-10 * std::max(lam[0], 1.0);
      model.scores.row(i) = (lam.asDiagonal() * phi_i.transpose() * sigma.ldlt().solve(r));
    }
  }
  return model;
}

Eigen::VectorXd reconstruct(const FpcaModel& model, Eigen::Index subject) {
  if (subject < 0 || subject >= model.scores.rows())
    throw std::invalid_argument("fpca::reconstruct: subject index out of range");
  return model.mean + model.eigenfunctions * model.scores.row(subject).transpose();
}

Eigen::VectorXd reconstruct(const FpcaModel& model, const std::string& id) {
  return reconstruct(model, model.subject_index(id));
}

Eigen::MatrixXd reconstruct_all(const FpcaModel& model) {
  Eigen::MatrixXd out(model.scores.rows(), model.grid.size());
  for (Eigen::Index i = 0; i < model.scores.rows(); ++i) out.row(i) = reconstruct(model, i);
  return out;
}

}  // namespace cdqr
