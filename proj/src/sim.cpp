#include "cdqr/sim.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <thread>

#include "cdqr/csv.hpp"

namespace cdqr {

namespace {

constexpr double kDomainLo = 0.0;
constexpr double kDomainHi = 10.0;
constexpr int kDenseCount = 30;

// int mu(t) phi_k(t) dt on [0,10] by composite Simpson; the integrand is
// smooth so 4000 panels are far beyond the accuracy needed.
double mean_eigen_integral(int k) {
  const int panels = 4000;
  const double h = (kDomainHi - kDomainLo) / panels;
  double acc = mean_function(kDomainLo) * eigenfunction(k, kDomainLo) +
               mean_function(kDomainHi) * eigenfunction(k, kDomainHi);
  for (int i = 1; i < panels; ++i) {
    const double t = kDomainLo + h * i;
    acc += (i % 2 == 0 ? 2.0 : 4.0) * mean_function(t) * eigenfunction(k, t);
  }
  return acc * h / 3.0;
}

const Eigen::Vector4d& mean_beta_integrals() {
  static const Eigen::Vector4d c = [] {
    Eigen::Vector4d v;
    for (int k = 1; k <= 4; ++k) v[k - 1] = mean_eigen_integral(k);
    return v;
  }();
  return c;
}

double timer_seconds(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

Eigen::Vector4d generator_eigenvalues() { return Eigen::Vector4d(16.0, 9.0, 7.56, 5.06); }

double mean_function(double t) { return t + std::sin(t); }

double eigenfunction(int k, double t) {
  const double s = std::sqrt(5.0);
  if (k % 2 == 1) return std::cos((k + 1) * M_PI * t / 10.0) / s;
  return std::sin(k * M_PI * t / 10.0) / s;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 round over the combined state.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

GeneratedDataset generate_dataset(const SimulationScenario& scenario, std::uint64_t seed, int n) {
  if (n < 1) throw std::invalid_argument("generate_dataset: n must be positive");
  if (!(scenario.sigma_eps > 0.0))
    throw std::invalid_argument("generate_dataset: sigma_eps must be positive");
  if (!(scenario.x1_lo <= scenario.x1_hi))
    throw std::invalid_argument("generate_dataset: invalid x1 range");
  for (double t : scenario.tau)
    if (!(t > 0.0 && t < 1.0))
      throw std::invalid_argument("generate_dataset: tau levels must lie in (0,1)");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif01(0.0, 1.0);

  const Eigen::Vector4d lambda = generator_eigenvalues();
  const Eigen::Vector4d c = mean_beta_integrals();

  GeneratedDataset data;
  data.dense_times.resize(kDenseCount);
  for (int l = 0; l < kDenseCount; ++l)
    data.dense_times[l] =
        kDomainLo + (kDomainHi - kDomainLo) * double(l) / double(kDenseCount - 1);

  data.y.resize(n);
  data.x1.resize(n);
  data.xi.resize(n, 4);
  data.true_integral.resize(n);
  data.samples.reserve(size_t(n));

  for (int i = 0; i < n; ++i) {
    Eigen::Vector4d xi;
    for (int k = 0; k < 4; ++k) xi[k] = std::sqrt(lambda[k]) * std_normal(rng);
    data.xi.row(i) = xi.transpose();

    const double x1 = scenario.x1_lo == scenario.x1_hi
                          ? scenario.x1_lo
                          : scenario.x1_lo + (scenario.x1_hi - scenario.x1_lo) * unif01(rng);
    data.x1[i] = x1;

    // Observation times: full dense grid, or 15 of the 30 without replacement.
    std::vector<int> idx(kDenseCount);
    for (int l = 0; l < kDenseCount; ++l) idx[l] = l;
    int m = kDenseCount;
    if (scenario.design == SamplingDesign::sparse) {
      // Partial Fisher-Yates keeps the draw sequence stable across platforms.
      m = 15;
      for (int l = 0; l < m; ++l) {
        const int r = l + int(unif01(rng) * double(kDenseCount - l));
        std::swap(idx[l], idx[std::min(r, kDenseCount - 1)]);
      }
      idx.resize(size_t(m));
      std::sort(idx.begin(), idx.end());
    }

    FunctionalSample sample;
    sample.id = std::to_string(i + 1);
    sample.times.resize(m);
    sample.values.resize(m);
    for (int l = 0; l < m; ++l) {
      const double t = data.dense_times[idx[size_t(l)]];
      double x2 = mean_function(t);
      for (int k = 1; k <= 4; ++k) x2 += xi[k - 1] * eigenfunction(k, t);
      sample.times[l] = t;
      sample.values[l] = x2 + scenario.sigma_eps * std_normal(rng);
    }
    data.samples.push_back(std::move(sample));

    // Exact integral via orthonormality of the eigenfunctions on [0,10].
    const double integral = scenario.b.dot(c + xi);
    data.true_integral[i] = integral;
    const double m_i = integral + x1;

    if (scenario.distribution == ResponseDistribution::normal) {
      data.y[i] = 2.0 * m_i + 5.0 * std_normal(rng);
    } else {
      const bool first = unif01(rng) < 0.5;
      data.y[i] = first ? (m_i + std_normal(rng)) : (3.0 * m_i + 4.0 * std_normal(rng));
    }
  }
  return data;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must lie in (0,1)");
  // Acklam's rational approximation, then one Halley refinement.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1.0 - plow;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= phigh) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double true_quantile(ResponseDistribution distribution, double m, double tau,
                     bool exact_mixture) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("true_quantile: tau not in (0,1)");
  if (distribution == ResponseDistribution::normal) return 2.0 * m + 5.0 * normal_quantile(tau);
  if (!exact_mixture) return 2.0 * m + std::sqrt(m * m + 8.5) * normal_quantile(tau);

  // Solve 0.5 Phi(y - m) + 0.5 Phi((y - 3m)/4) = tau by bisection; the two
  // component quantiles bracket the root.
  const double z = normal_quantile(tau);
  double lo = std::min(m + z, 3.0 * m + 4.0 * z);
  double hi = std::max(m + z, 3.0 * m + 4.0 * z);
  auto g = [&](double y) { return 0.5 * normal_cdf(y - m) + 0.5 * normal_cdf((y - 3.0 * m) / 4.0); };
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double val = g(mid);
    if (std::abs(val - tau) < 1e-13 || (hi - lo) < 1e-12 * (1.0 + std::abs(mid))) return mid;
    (val < tau ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Eigen::VectorXd evaluate_mae(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& truths) {
  if (predictions.rows() != truths.rows() || predictions.cols() != truths.cols())
    throw std::invalid_argument("evaluate_mae: size mismatch");
  if (predictions.rows() == 0) throw std::invalid_argument("evaluate_mae: empty input");
  return (predictions - truths).cwiseAbs().colwise().mean();
}

PipelineData prepare_pipeline(const SimulationScenario& scenario, std::uint64_t rep_seed,
                              const PipelineSettings& settings) {
  PipelineData data;
  data.train = generate_dataset(scenario, mix_seed(rep_seed, 1), scenario.n_train);
  data.test = generate_dataset(scenario, mix_seed(rep_seed, 2), scenario.n_test);

  // FPCA presmoothing pools every observed curve (covariates only).
  std::vector<FunctionalSample> pooled;
  pooled.reserve(data.train.samples.size() + data.test.samples.size());
  for (size_t i = 0; i < data.train.samples.size(); ++i) {
    pooled.push_back(data.train.samples[i]);
    pooled.back().id = "train_" + std::to_string(i);
  }
  for (size_t i = 0; i < data.test.samples.size(); ++i) {
    pooled.push_back(data.test.samples[i]);
    pooled.back().id = "test_" + std::to_string(i);
  }
  Eigen::VectorXd t_grid(settings.fpca_grid_length);
  for (int l = 0; l < settings.fpca_grid_length; ++l)
    t_grid[l] = kDomainLo +
                (kDomainHi - kDomainLo) * double(l) / double(settings.fpca_grid_length - 1);
  FpcaModel fpca = fit_fpca(pooled, Grid{t_grid, GridRule::full_range}, settings.fpca);
  Eigen::MatrixXd curves = reconstruct_all(fpca);

  data.train_covs.n = scenario.n_train;
  data.train_covs.t_grid = fpca.grid;
  data.train_covs.scalars["x1"] = data.train.x1;
  data.train_covs.functionals["x2"] = curves.topRows(scenario.n_train);

  data.test_covs.n = scenario.n_test;
  data.test_covs.t_grid = fpca.grid;
  data.test_covs.scalars["x1"] = data.test.x1;
  data.test_covs.functionals["x2"] = curves.bottomRows(scenario.n_test);

  data.grid = build_response_grid(data.train.y, settings.grid_points, settings.grid_rule);
  data.Z = make_artificial_response(data.train.y, data.grid);

  BasisSpec y0 = make_basis(data.grid.min(), data.grid.max(), settings.kappa_intercept);
  BasisSpec y1 = make_basis(data.grid.min(), data.grid.max(), settings.kappa_scalar);
  BasisSpec yt = make_basis(data.grid.min(), data.grid.max(), settings.kappa_y);
  BasisSpec tt = make_basis(kDomainLo, kDomainHi, settings.kappa_t);
  data.terms = {intercept_term(y0), varying_scalar_term("x1", y1),
                functional_term("x2", tt, yt)};
  return data;
}

std::string to_string(ResponseDistribution d) {
  return d == ResponseDistribution::normal ? "normal" : "mixture";
}

std::string to_string(FitMode m) { return m == FitMode::joint ? "joint" : "pointwise"; }

namespace {

struct RepOutcome {
  bool ok = false;
  std::string message;
  double seconds = 0.0;
  Eigen::VectorXd mae;  // per tau
  long long crossings = 0;
};

RepOutcome run_replication(const SimulationScenario& scenario, std::uint64_t rep_seed,
                           FitMode method, const ExperimentConfig& config) {
  RepOutcome out;
  try {
    PipelineData data = prepare_pipeline(scenario, rep_seed, config.pipeline);

    FitOptions fit_opts = config.fit;
    fit_opts.threads = 1;  // replication-level parallelism only

    FittedCdfModel model;
    const auto start = std::chrono::steady_clock::now();
    if (method == FitMode::joint) {
      std::vector<DesignBlock> blocks =
          assemble_design(data.terms, data.train_covs, data.grid, config.pipeline.integration);
      model = fit_joint(blocks, data.Z, data.grid, data.terms, data.train_covs.t_grid, fit_opts);
    } else {
      std::vector<DesignBlock> blocks =
          assemble_pointwise_design(data.terms, data.train_covs, config.pipeline.integration);
      model =
          fit_pointwise(blocks, data.Z, data.grid, data.terms, data.train_covs.t_grid, fit_opts);
    }
    out.seconds = timer_seconds(start);

    std::vector<ConditionalCdf> cdfs = predict_cdf(model, data.test_covs);
    const Eigen::Index T = Eigen::Index(scenario.tau.size());
    Eigen::VectorXd tau(T);
    for (Eigen::Index k = 0; k < T; ++k) tau[k] = scenario.tau[size_t(k)];

    Eigen::MatrixXd qhat(scenario.n_test, T), qtrue(scenario.n_test, T);
    for (int i = 0; i < scenario.n_test; ++i) {
      ConditionalCdf mono = monotonize(cdfs[size_t(i)], config.trim);
      QuantilePrediction pred = invert(mono, tau);
      qhat.row(i) = pred.q.transpose();
      const double m_i = data.test.true_integral[i] + data.test.x1[i];
      for (Eigen::Index k = 0; k < T; ++k)
        qtrue(i, k) = true_quantile(scenario.distribution, m_i, tau[k], config.exact_mixture);
      for (Eigen::Index k1 = 0; k1 < T; ++k1)
        for (Eigen::Index k2 = k1 + 1; k2 < T; ++k2)
          if (tau[k1] < tau[k2] && pred.q[k1] > pred.q[k2]) ++out.crossings;
    }
    out.mae = evaluate_mae(qhat, qtrue);
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.message = e.what();
  }
  return out;
}

}  // namespace

ExperimentSummary run_experiment(const ExperimentConfig& config) {
  if (config.scenarios.empty()) throw std::invalid_argument("run_experiment: no scenarios");
  if (config.methods.empty()) throw std::invalid_argument("run_experiment: no methods");

  struct Task {
    size_t scenario = 0;
    size_t method = 0;
    int rep = 0;
  };
  std::vector<Task> tasks;
  for (size_t s = 0; s < config.scenarios.size(); ++s)
    for (size_t m = 0; m < config.methods.size(); ++m)
      for (int r = 0; r < config.scenarios[s].replications; ++r) tasks.push_back({s, m, r});

  std::vector<RepOutcome> outcomes(tasks.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const size_t t = next.fetch_add(1);
      if (t >= tasks.size()) break;
      const Task& task = tasks[t];
      const SimulationScenario& sc = config.scenarios[task.scenario];
      const std::uint64_t rep_seed = mix_seed(sc.seed, std::uint64_t(task.rep));
      outcomes[t] = run_replication(sc, rep_seed, config.methods[task.method], config);
    }
  };
  const int threads = std::max(1, config.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ExperimentSummary summary;
  size_t cursor = 0;
  for (size_t s = 0; s < config.scenarios.size(); ++s) {
    const SimulationScenario& sc = config.scenarios[s];
    for (size_t m = 0; m < config.methods.size(); ++m) {
      const std::string method = to_string(config.methods[m]);
      const Eigen::Index T = Eigen::Index(sc.tau.size());
      Eigen::MatrixXd rep_mae(sc.replications, T);
      std::vector<int> ok_reps;
      double seconds_sum = 0.0;
      for (int r = 0; r < sc.replications; ++r) {
        const RepOutcome& o = outcomes[cursor++];
        ReplicationRow rr;
        rr.distribution = to_string(sc.distribution);
        rr.sigma_eps = sc.sigma_eps;
        rr.n = sc.n_train;
        rr.method = method;
        rr.rep = r;
        rr.status = o.ok ? "ok" : "failed";
        rr.seconds = o.seconds;
        rr.tau = sc.tau;
        if (o.ok) {
          rep_mae.row(ok_reps.size()) = o.mae.transpose();
          ok_reps.push_back(r);
          seconds_sum += o.seconds;
          summary.crossings += o.crossings;
          rr.mae.assign(o.mae.data(), o.mae.data() + o.mae.size());
        }
        summary.replications.push_back(std::move(rr));
      }
      const int R = int(ok_reps.size());
      for (Eigen::Index k = 0; k < T; ++k) {
        SummaryRow row;
        row.distribution = to_string(sc.distribution);
        row.sigma_eps = sc.sigma_eps;
        row.n = sc.n_train;
        row.method = method;
        row.tau = sc.tau[size_t(k)];
        if (R > 0) {
          const Eigen::VectorXd col = rep_mae.col(k).head(R);
          row.mae = col.mean();
          row.se = R > 1 ? std::sqrt((col.array() - row.mae).square().sum() / (R - 1.0) / R)
                         : 0.0;
        } else {
          row.mae = std::numeric_limits<double>::quiet_NaN();
          row.se = std::numeric_limits<double>::quiet_NaN();
        }
        summary.rows.push_back(std::move(row));
      }
      TimingRow tr;
      tr.distribution = to_string(sc.distribution);
      tr.sigma_eps = sc.sigma_eps;
      tr.n = sc.n_train;
      tr.method = method;
      tr.seconds = R > 0 ? seconds_sum / R : std::numeric_limits<double>::quiet_NaN();
      summary.timings.push_back(std::move(tr));
    }
  }

  if (!config.output_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(config.output_dir);
    const std::string dir = config.output_dir + "/";

    csv::Table st;
    st.header = {"distribution", "sigma_eps", "n", "method", "tau", "mae", "se"};
    for (const auto& r : summary.rows)
      st.rows.push_back({r.distribution, csv::format_double(r.sigma_eps), std::to_string(r.n),
                         r.method, csv::format_double(r.tau), csv::format_double(r.mae),
                         csv::format_double(r.se)});
    csv::write_file(dir + "summary.csv", st);

    csv::Table tt;
    tt.header = {"distribution", "sigma_eps", "n", "method", "seconds"};
    for (const auto& r : summary.timings)
      tt.rows.push_back({r.distribution, csv::format_double(r.sigma_eps), std::to_string(r.n),
                         r.method, csv::format_double(r.seconds)});
    csv::write_file(dir + "timings.csv", tt);

    csv::Table rt;
    rt.header = {"distribution", "sigma_eps", "n", "method", "rep", "status", "seconds", "tau",
                 "mae"};
    for (const auto& r : summary.replications)
      for (size_t k = 0; k < r.tau.size(); ++k)
        rt.rows.push_back({r.distribution, csv::format_double(r.sigma_eps), std::to_string(r.n),
                           r.method, std::to_string(r.rep), r.status,
                           csv::format_double(r.seconds), csv::format_double(r.tau[k]),
                           r.mae.empty() ? "" : csv::format_double(r.mae[k])});
    csv::write_file(dir + "replications.csv", rt);
  }
  return summary;
}

}  // namespace cdqr
