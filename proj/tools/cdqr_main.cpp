// cdqr command line: fit / predict / simulate / experiment.
//
// Inputs are CSV files: scalar covariates and the response in a wide
// per-subject table keyed by a subject column, functional covariates in long
// (subject_id, time, value) form. Configuration is a JSON file (--config),
// with a few common overrides exposed as flags.

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cdqr/csv.hpp"
#include "cdqr/fpca.hpp"
#include "cdqr/model.hpp"
#include "cdqr/model_io.hpp"
#include "cdqr/quantile.hpp"
#include "cdqr/sim.hpp"
#include "cdqr/solver.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<double>> tau;
  std::optional<int> grid_points;
  std::optional<int> trim;
  std::optional<std::string> smoothing;
  std::optional<double> pve;
};

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("config '" + path + "' is not valid JSON: " + e.what());
  }
  return j;
}

void apply_overrides(json& config, const Overrides& ov) {
  if (ov.seed) config["seed"] = *ov.seed;
  if (ov.tau) config["tau"] = *ov.tau;
  if (ov.grid_points) config["grid"]["points"] = *ov.grid_points;
  if (ov.trim) config["trim"] = *ov.trim;
  if (ov.smoothing) config["smoothing"]["mode"] = *ov.smoothing;
  if (ov.pve) config["fpca"]["pve"] = *ov.pve;
}

// ---- config pieces ----------------------------------------------------------

cdqr::GridRule parse_grid_rule(const std::string& s) {
  if (s == "full_range") return cdqr::GridRule::full_range;
  if (s == "trimmed") return cdqr::GridRule::trimmed_order_statistics;
  throw std::runtime_error("config: unknown grid rule '" + s + "'");
}

cdqr::SmoothingRule parse_smoothing(const std::string& s) {
  if (s == "reml") return cdqr::SmoothingRule::reml;
  if (s == "gcv") return cdqr::SmoothingRule::gcv;
  if (s == "fixed") return cdqr::SmoothingRule::fixed;
  throw std::runtime_error("config: unknown smoothing mode '" + s + "'");
}

cdqr::FitOptions parse_fit_options(const json& config) {
  cdqr::FitOptions opts;
  if (config.contains("smoothing")) {
    const json& s = config.at("smoothing");
    opts.smoothing = parse_smoothing(s.value("mode", "reml"));
    if (opts.smoothing == cdqr::SmoothingRule::fixed) {
      if (!s.contains("lambda"))
        throw std::runtime_error("config: smoothing mode 'fixed' needs a lambda array");
      if (s.at("lambda").is_number())
        opts.fixed_lambdas = {s.at("lambda").get<double>()};
      else
        opts.fixed_lambdas = s.at("lambda").get<std::vector<double>>();
    }
  }
  opts.threads = config.value("threads", 1);
  return opts;
}

cdqr::FpcaOptions parse_fpca_options(const json& config) {
  cdqr::FpcaOptions opts;
  if (config.contains("fpca")) {
    const json& f = config.at("fpca");
    opts.pve = f.value("pve", 0.99);
    opts.mean_basis_dim = f.value("mean_basis_dim", 15);
    opts.cov_basis_dim = f.value("cov_basis_dim", 15);
  }
  return opts;
}

int fpca_grid_length(const json& config) {
  if (config.contains("fpca")) return config.at("fpca").value("grid_length", 101);
  return 101;
}

std::vector<double> parse_tau(const json& config) {
  std::vector<double> tau = {0.05, 0.1, 0.25, 0.5};
  if (config.contains("tau")) tau = config.at("tau").get<std::vector<double>>();
  for (double t : tau)
    if (!(t > 0.0 && t < 1.0)) throw std::runtime_error("config: tau levels must lie in (0,1)");
  return tau;
}

// ---- data ingestion ----------------------------------------------------------

struct SubjectTable {
  std::vector<std::string> ids;
  std::map<std::string, Eigen::VectorXd> columns;
};

SubjectTable read_subjects(const std::string& path, const std::string& subject_column) {
  cdqr::csv::Table table = cdqr::csv::read_file(path);
  int id_col = table.column(subject_column);
  if (id_col < 0)
    throw std::runtime_error(path + ": missing subject column '" + subject_column + "'");
  SubjectTable out;
  out.ids.reserve(table.rows.size());
  for (const auto& row : table.rows) out.ids.push_back(row[size_t(id_col)]);
  for (size_t c = 0; c < table.header.size(); ++c) {
    if (int(c) == id_col) continue;
    Eigen::VectorXd v(Eigen::Index(table.rows.size()));
    for (size_t r = 0; r < table.rows.size(); ++r)
      v[Eigen::Index(r)] = cdqr::csv::parse_double(table.rows[r][c], path, r + 2);
    out.columns[table.header[c]] = std::move(v);
  }
  return out;
}

std::vector<cdqr::FunctionalSample> read_functional(const std::string& path,
                                                    const std::vector<std::string>& ids) {
  cdqr::csv::Table table = cdqr::csv::read_file(path);
  int id_col = table.column("subject_id");
  int t_col = table.column("time");
  int v_col = table.column("value");
  if (id_col < 0 || t_col < 0 || v_col < 0)
    throw std::runtime_error(path + ": functional CSV needs subject_id, time, value columns");

  std::map<std::string, std::vector<std::pair<double, double>>> per_subject;
  for (size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    per_subject[row[size_t(id_col)]].emplace_back(
        cdqr::csv::parse_double(row[size_t(t_col)], path, r + 2),
        cdqr::csv::parse_double(row[size_t(v_col)], path, r + 2));
  }
  std::vector<cdqr::FunctionalSample> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    auto it = per_subject.find(id);
    if (it == per_subject.end())
      throw std::runtime_error(path + ": no observations for subject '" + id + "'");
    auto obs = it->second;
    std::sort(obs.begin(), obs.end());
    cdqr::FunctionalSample s;
    s.id = id;
    s.times.resize(Eigen::Index(obs.size()));
    s.values.resize(Eigen::Index(obs.size()));
    for (size_t k = 0; k < obs.size(); ++k) {
      s.times[Eigen::Index(k)] = obs[k].first;
      s.values[Eigen::Index(k)] = obs[k].second;
    }
    out.push_back(std::move(s));
  }
  return out;
}

// Presmooths every functional covariate by FPCA onto a shared grid and fills
// the covariate set. Prediction passes the model's stored grid.
void add_functional_covariates(cdqr::CovariateSet& covs, const json& data_cfg,
                               const std::vector<std::string>& ids,
                               const cdqr::FpcaOptions& fpca_opts, int grid_length,
                               const Eigen::VectorXd* fixed_grid) {
  if (!data_cfg.contains("functional_csv")) return;
  const auto files = data_cfg.at("functional_csv").get<std::map<std::string, std::string>>();
  if (files.empty()) return;

  std::map<std::string, std::vector<cdqr::FunctionalSample>> samples;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& [name, path] : files) {
    samples[name] = read_functional(path, ids);
    for (const auto& s : samples[name]) {
      lo = std::min(lo, s.times.minCoeff());
      hi = std::max(hi, s.times.maxCoeff());
    }
  }
  Eigen::VectorXd grid_points;
  if (fixed_grid && fixed_grid->size() > 0) {
    grid_points = *fixed_grid;
  } else {
    if (!(lo < hi)) throw std::runtime_error("functional covariates: degenerate time range");
    grid_points = Eigen::VectorXd::LinSpaced(grid_length, lo, hi);
  }
  cdqr::Grid grid{grid_points, cdqr::GridRule::full_range};
  for (const auto& [name, sample_set] : samples) {
    cdqr::FpcaModel fpca = cdqr::fit_fpca(sample_set, grid, fpca_opts);
    covs.functionals[name] = cdqr::reconstruct_all(fpca);
  }
  covs.t_grid = grid_points;
}

// Terms are declared in config; basis domains come from the realized grids.
std::vector<cdqr::TermSpec> parse_terms(const json& config, const cdqr::Grid& grid,
                                        const cdqr::CovariateSet& covs) {
  if (!config.contains("terms") || config.at("terms").empty())
    throw std::runtime_error("config: no terms defined");
  const double ylo = grid.min(), yhi = grid.max();
  double tlo = 0.0, thi = 1.0;
  if (covs.t_grid.size() > 0) {
    tlo = covs.t_grid[0];
    thi = covs.t_grid[covs.t_grid.size() - 1];
  }
  std::vector<cdqr::TermSpec> terms;
  for (const json& tj : config.at("terms")) {
    const std::string kind = tj.value("kind", "");
    if (kind == "intercept") {
      terms.push_back(cdqr::intercept_term(cdqr::make_basis(ylo, yhi, tj.value("basis_dim", 20))));
    } else if (kind == "constant") {
      terms.push_back(
          cdqr::constant_vector_term(tj.at("columns").get<std::vector<std::string>>()));
    } else if (kind == "scalar") {
      terms.push_back(cdqr::varying_scalar_term(
          tj.at("column").get<std::string>(),
          cdqr::make_basis(ylo, yhi, tj.value("basis_dim", 5))));
    } else if (kind == "functional") {
      terms.push_back(cdqr::functional_term(
          tj.at("covariate").get<std::string>(),
          cdqr::make_basis(tlo, thi, tj.value("basis_dim_t", 5)),
          cdqr::make_basis(ylo, yhi, tj.value("basis_dim_y", 5))));
    } else if (kind == "interaction") {
      terms.push_back(cdqr::functional_interaction_term(
          tj.at("covariate").get<std::string>(), tj.at("modifier").get<std::string>(),
          cdqr::make_basis(tlo, thi, tj.value("basis_dim_t", 5)),
          cdqr::make_basis(ylo, yhi, tj.value("basis_dim_y", 5))));
    } else {
      throw std::runtime_error("config: unknown term kind '" + kind + "'");
    }
    const cdqr::TermSpec& t = terms.back();
    for (size_t c = 0; c < t.columns.size(); ++c) {
      const std::string& name = t.columns[c];
      const bool functional_slot = (t.kind == cdqr::TermKind::functional ||
                                    t.kind == cdqr::TermKind::functional_interaction) &&
                                   c == 0;
      if (functional_slot) {
        if (covs.functionals.find(name) == covs.functionals.end())
          throw std::runtime_error("config: unknown functional covariate '" + name + "'");
      } else if (covs.scalars.find(name) == covs.scalars.end()) {
        throw std::runtime_error("config: unknown column '" + name + "'");
      }
    }
  }
  return terms;
}

std::string out_path(const json& config, const std::string& file) {
  const std::string dir = config.value("output_dir", ".");
  fs::create_directories(dir);
  return dir + "/" + file;
}

// ---- commands ----------------------------------------------------------------

int run_fit(const json& config) {
  const json& data_cfg = config.at("data");
  const std::string subjects_path = data_cfg.at("subjects_csv").get<std::string>();
  const std::string subject_column = data_cfg.value("subject_column", "subject_id");
  const std::string response_column = data_cfg.value("response_column", "y");

  SubjectTable subjects = read_subjects(subjects_path, subject_column);
  auto yit = subjects.columns.find(response_column);
  if (yit == subjects.columns.end())
    throw std::runtime_error(subjects_path + ": missing response column '" + response_column +
                             "'");
  Eigen::VectorXd y = yit->second;

  cdqr::CovariateSet covs;
  covs.n = Eigen::Index(subjects.ids.size());
  for (const auto& [name, v] : subjects.columns)
    if (name != response_column) covs.scalars[name] = v;
  add_functional_covariates(covs, data_cfg, subjects.ids, parse_fpca_options(config),
                            fpca_grid_length(config), nullptr);

  const json grid_cfg = config.value("grid", json::object());
  cdqr::Grid grid = cdqr::build_response_grid(
      y, grid_cfg.value("points", 100), parse_grid_rule(grid_cfg.value("rule", "full_range")));
  Eigen::MatrixXd Z = cdqr::make_artificial_response(y, grid);
  std::vector<cdqr::TermSpec> terms = parse_terms(config, grid, covs);

  cdqr::FitOptions opts = parse_fit_options(config);
  const std::string mode = config.value("fit_mode", "joint");
  cdqr::FittedCdfModel model;
  if (mode == "joint") {
    model = cdqr::fit_joint(cdqr::assemble_design(terms, covs, grid), Z, grid, terms, covs.t_grid,
                            opts);
  } else if (mode == "pointwise") {
    model = cdqr::fit_pointwise(cdqr::assemble_pointwise_design(terms, covs), Z, grid, terms,
                                covs.t_grid, opts);
  } else {
    throw std::runtime_error("config: unknown fit_mode '" + mode + "'");
  }
  if (!model.convergence.converged)
    std::cerr << "warning: fit did not reach the convergence tolerances\n";

  cdqr::save_model(model, out_path(config, "model.json"));

  // Coefficient-function evaluations (joint mode has smooth coefficients).
  cdqr::csv::Table coef;
  coef.header = {"term", "t", "y", "value"};
  if (model.mode == cdqr::FitMode::joint) {
    for (size_t k = 0; k < terms.size(); ++k) {
      const cdqr::TermSpec& term = terms[k];
      const std::string label =
          term.label.empty() ? "term" + std::to_string(k) : term.label;
      const Eigen::VectorXd& theta = model.coefficients[k];
      if (term.kind == cdqr::TermKind::constant_vector) {
        for (size_t c = 0; c < term.columns.size(); ++c)
          coef.rows.push_back({"constant(" + term.columns[c] + ")", "", "",
                               cdqr::csv::format_double(theta[Eigen::Index(c)])});
        continue;
      }
      if (term.kind == cdqr::TermKind::intercept ||
          term.kind == cdqr::TermKind::varying_scalar) {
        Eigen::VectorXd beta = cdqr::eval_basis(term.y_basis, grid.points) * theta;
        for (Eigen::Index j = 0; j < grid.size(); ++j)
          coef.rows.push_back({label, "", cdqr::csv::format_double(grid.points[j]),
                               cdqr::csv::format_double(beta[j])});
        continue;
      }
      Eigen::MatrixXd bt = cdqr::eval_basis(term.t_basis, covs.t_grid);
      Eigen::MatrixXd by = cdqr::eval_basis(term.y_basis, grid.points);
      Eigen::MatrixXd theta_ty =
          Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                         Eigen::RowMajor>>(theta.data(), term.t_basis.dimension,
                                                           term.y_basis.dimension);
      Eigen::MatrixXd surface = bt * theta_ty * by.transpose();  // L x J
      for (Eigen::Index l = 0; l < covs.t_grid.size(); ++l)
        for (Eigen::Index j = 0; j < grid.size(); ++j)
          coef.rows.push_back({label, cdqr::csv::format_double(covs.t_grid[l]),
                               cdqr::csv::format_double(grid.points[j]),
                               cdqr::csv::format_double(surface(l, j))});
    }
  }
  cdqr::csv::write_file(out_path(config, "coefficients.csv"), coef);
  std::cout << "fit: wrote model.json and coefficients.csv\n";
  return 0;
}

int run_predict(const json& config) {
  const std::string model_path = config.at("model").get<std::string>();
  cdqr::FittedCdfModel model = cdqr::load_model(model_path);

  const json& data_cfg = config.at("data");
  const std::string subjects_path = data_cfg.at("subjects_csv").get<std::string>();
  const std::string subject_column = data_cfg.value("subject_column", "subject_id");
  SubjectTable subjects = read_subjects(subjects_path, subject_column);

  cdqr::CovariateSet covs;
  covs.n = Eigen::Index(subjects.ids.size());
  for (const auto& [name, v] : subjects.columns) covs.scalars[name] = v;
  add_functional_covariates(covs, data_cfg, subjects.ids, parse_fpca_options(config),
                            fpca_grid_length(config), &model.t_grid);

  std::vector<cdqr::ConditionalCdf> cdfs = cdqr::predict_cdf(model, covs);

  cdqr::csv::Table cdf_table;
  cdf_table.header = {"subject_id", "y", "cdf"};
  for (size_t i = 0; i < cdfs.size(); ++i)
    for (Eigen::Index j = 0; j < cdfs[i].values.size(); ++j)
      cdf_table.rows.push_back({subjects.ids[i], cdqr::csv::format_double(cdfs[i].y[j]),
                                cdqr::csv::format_double(cdfs[i].values[j])});
  cdqr::csv::write_file(out_path(config, "cdf.csv"), cdf_table);

  const std::vector<double> tau_vec = parse_tau(config);
  Eigen::VectorXd tau(Eigen::Index(tau_vec.size()));
  for (size_t k = 0; k < tau_vec.size(); ++k) tau[Eigen::Index(k)] = tau_vec[k];
  const int trim = config.value("trim", 10);

  cdqr::csv::Table q_table;
  q_table.header = {"subject_id", "tau", "quantile", "boundary"};
  for (size_t i = 0; i < cdfs.size(); ++i) {
    cdqr::ConditionalCdf mono = cdqr::monotonize(cdfs[i], trim);
    cdqr::QuantilePrediction pred = cdqr::invert(mono, tau);
    for (Eigen::Index k = 0; k < tau.size(); ++k)
      q_table.rows.push_back({subjects.ids[i], cdqr::csv::format_double(tau[k]),
                              cdqr::csv::format_double(pred.q[k]),
                              pred.boundary[size_t(k)] ? "1" : "0"});
  }
  cdqr::csv::write_file(out_path(config, "quantiles.csv"), q_table);
  std::cout << "predict: wrote cdf.csv and quantiles.csv\n";
  return 0;
}

cdqr::SimulationScenario parse_scenario(const json& sc, std::uint64_t seed) {
  cdqr::SimulationScenario scenario;
  const std::string dist = sc.value("distribution", "normal");
  if (dist == "normal")
    scenario.distribution = cdqr::ResponseDistribution::normal;
  else if (dist == "mixture")
    scenario.distribution = cdqr::ResponseDistribution::mixture;
  else
    throw std::runtime_error("config: unknown distribution '" + dist + "'");
  scenario.n_train = sc.value("n", 100);
  scenario.n_test = sc.value("n_test", 100);
  const std::string design = sc.value("design", "dense");
  if (design == "dense")
    scenario.design = cdqr::SamplingDesign::dense;
  else if (design == "sparse")
    scenario.design = cdqr::SamplingDesign::sparse;
  else
    throw std::runtime_error("config: unknown design '" + design + "'");
  scenario.sigma_eps = sc.value("sigma_eps", 0.50);
  if (sc.contains("b")) {
    const auto b = sc.at("b").get<std::vector<double>>();
    if (b.size() != 4) throw std::runtime_error("config: b must have 4 entries");
    for (int k = 0; k < 4; ++k) scenario.b[k] = b[size_t(k)];
  }
  if (sc.contains("x1_range")) {
    const auto r = sc.at("x1_range").get<std::vector<double>>();
    if (r.size() != 2) throw std::runtime_error("config: x1_range must be [lo, hi]");
    scenario.x1_lo = r[0];
    scenario.x1_hi = r[1];
  }
  scenario.seed = seed;
  return scenario;
}

int run_simulate(const json& config) {
  const std::uint64_t seed = config.value("seed", std::uint64_t(1));
  cdqr::SimulationScenario scenario =
      parse_scenario(config.value("scenario", json::object()), seed);
  cdqr::GeneratedDataset data = cdqr::generate_dataset(scenario, seed, scenario.n_train);

  cdqr::csv::Table subjects;
  subjects.header = {"subject_id", "y", "x1"};
  for (int i = 0; i < scenario.n_train; ++i)
    subjects.rows.push_back({std::to_string(i + 1), cdqr::csv::format_double(data.y[i]),
                             cdqr::csv::format_double(data.x1[i])});
  cdqr::csv::write_file(out_path(config, "subjects.csv"), subjects);

  cdqr::csv::Table w;
  w.header = {"subject_id", "time", "value"};
  for (const auto& s : data.samples)
    for (Eigen::Index j = 0; j < s.times.size(); ++j)
      w.rows.push_back(
          {s.id, cdqr::csv::format_double(s.times[j]), cdqr::csv::format_double(s.values[j])});
  cdqr::csv::write_file(out_path(config, "functional.csv"), w);

  cdqr::csv::Table truth;
  truth.header = {"subject_id", "xi1", "xi2", "xi3", "xi4", "integral"};
  for (int i = 0; i < scenario.n_train; ++i)
    truth.rows.push_back({std::to_string(i + 1), cdqr::csv::format_double(data.xi(i, 0)),
                          cdqr::csv::format_double(data.xi(i, 1)),
                          cdqr::csv::format_double(data.xi(i, 2)),
                          cdqr::csv::format_double(data.xi(i, 3)),
                          cdqr::csv::format_double(data.true_integral[i])});
  cdqr::csv::write_file(out_path(config, "truth.csv"), truth);
  std::cout << "simulate: wrote subjects.csv, functional.csv, truth.csv\n";
  return 0;
}

int run_experiment_cmd(const json& config) {
  cdqr::ExperimentConfig ec;
  const std::uint64_t master_seed = config.value("seed", std::uint64_t(1));

  std::vector<std::string> distributions =
      config.value("distributions", std::vector<std::string>{"normal"});
  std::vector<double> sigmas = config.value("sigma_eps", std::vector<double>{0.50});
  std::vector<int> ns = config.value("n", std::vector<int>{100});
  const std::vector<double> tau = parse_tau(config);
  const int replications = config.value("replications", 50);

  std::uint64_t index = 0;
  for (const std::string& dist : distributions)
    for (double sigma : sigmas)
      for (int n : ns) {
        json sc;
        sc["distribution"] = dist;
        sc["sigma_eps"] = sigma;
        sc["n"] = n;
        sc["n_test"] = config.value("n_test", 100);
        sc["design"] = config.value("design", "dense");
        if (config.contains("b")) sc["b"] = config.at("b");
        cdqr::SimulationScenario scenario =
            parse_scenario(sc, cdqr::mix_seed(master_seed, index++));
        scenario.tau = tau;
        scenario.replications = replications;
        ec.scenarios.push_back(scenario);
      }

  ec.methods.clear();
  for (const std::string& m :
       config.value("methods", std::vector<std::string>{"joint", "pointwise"})) {
    if (m == "joint")
      ec.methods.push_back(cdqr::FitMode::joint);
    else if (m == "pointwise")
      ec.methods.push_back(cdqr::FitMode::pointwise);
    else
      throw std::runtime_error("config: unknown method '" + m + "'");
  }

  const json grid_cfg = config.value("grid", json::object());
  ec.pipeline.grid_points = grid_cfg.value("points", 100);
  ec.pipeline.grid_rule = parse_grid_rule(grid_cfg.value("rule", "full_range"));
  const json kappa = config.value("kappa", json::object());
  ec.pipeline.kappa_intercept = kappa.value("intercept", 20);
  ec.pipeline.kappa_scalar = kappa.value("scalar", 5);
  ec.pipeline.kappa_t = kappa.value("t", 5);
  ec.pipeline.kappa_y = kappa.value("y", 5);
  ec.pipeline.fpca = parse_fpca_options(config);
  ec.pipeline.fpca_grid_length = fpca_grid_length(config);
  ec.fit = parse_fit_options(config);
  ec.fit.threads = 1;
  ec.trim = config.value("trim", 0);
  ec.exact_mixture = config.value("exact_mixture", false);
  ec.threads = config.value("threads", 1);
  ec.output_dir = config.value("output_dir", ".");

  cdqr::ExperimentSummary summary = cdqr::run_experiment(ec);
  int failures = 0;
  for (const auto& r : summary.replications)
    if (r.status != "ok") ++failures;
  std::cout << "experiment: " << summary.rows.size() << " summary rows, " << failures
            << " failed replications, " << summary.crossings
            << " quantile crossings; wrote summary.csv, timings.csv, replications.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conditional-distribution quantile regression"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;
  std::string tau_csv;
  std::uint64_t seed_val = 0;
  int grid_points_val = 0, trim_val = -1;
  std::string smoothing_val;
  double pve_val = 0.0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON configuration file")->required();
    auto* s = cmd->add_option("--seed", seed_val, "override config seed");
    s->each([&](const std::string&) { ov.seed = seed_val; });
    cmd->add_option("--tau", tau_csv, "override tau levels (comma separated)");
    auto* g = cmd->add_option("--grid-points", grid_points_val, "override response grid size");
    g->each([&](const std::string&) { ov.grid_points = grid_points_val; });
    auto* t = cmd->add_option("--trim", trim_val, "override boundary trim");
    t->each([&](const std::string&) { ov.trim = trim_val; });
    auto* sm = cmd->add_option("--smoothing", smoothing_val, "smoothing mode (reml|gcv|fixed)");
    sm->each([&](const std::string&) { ov.smoothing = smoothing_val; });
    auto* p = cmd->add_option("--pve", pve_val, "override FPCA explained-variance cutoff");
    p->each([&](const std::string&) { ov.pve = pve_val; });
  };

  CLI::App* fit = app.add_subcommand("fit", "fit a conditional CDF model");
  CLI::App* predict = app.add_subcommand("predict", "predict CDFs and quantiles");
  CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic dataset");
  CLI::App* experiment = app.add_subcommand("experiment", "run the simulation benchmark");
  for (CLI::App* cmd : {fit, predict, simulate, experiment}) add_common(cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    json config = load_config(config_path);
    if (!tau_csv.empty()) {
      std::vector<double> tau;
      std::stringstream ss(tau_csv);
      std::string item;
      while (std::getline(ss, item, ',')) tau.push_back(std::stod(item));
      ov.tau = tau;
    }
    apply_overrides(config, ov);

    if (app.got_subcommand(fit)) return run_fit(config);
    if (app.got_subcommand(predict)) return run_predict(config);
    if (app.got_subcommand(simulate)) return run_simulate(config);
    if (app.got_subcommand(experiment)) return run_experiment_cmd(config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
