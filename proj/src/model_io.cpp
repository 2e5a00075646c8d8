#include "cdqr/model_io.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace cdqr {

namespace {

using nlohmann::json;

json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vec_from_json(const json& a) {
  Eigen::VectorXd v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v[Eigen::Index(i)] = a[i].get<double>();
  return v;
}

json mat_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec_to_json(m.row(i)));
  return rows;
}

Eigen::MatrixXd mat_from_json(const json& rows, Eigen::Index cols_hint = 0) {
  if (rows.empty()) return Eigen::MatrixXd(0, cols_hint);
  Eigen::MatrixXd m(rows.size(), rows[0].size());
  for (size_t i = 0; i < rows.size(); ++i) m.row(Eigen::Index(i)) = vec_from_json(rows[i]);
  return m;
}

json basis_to_json(const BasisSpec& b) {
  return json{{"degree", b.degree}, {"dimension", b.dimension}, {"lo", b.lo}, {"hi", b.hi}};
}

BasisSpec basis_from_json(const json& j) {
  if (j.value("dimension", 0) == 0) return BasisSpec{};
  return make_basis(j.at("lo").get<double>(), j.at("hi").get<double>(),
                    j.at("dimension").get<int>(), j.at("degree").get<int>());
}

std::string kind_to_string(TermKind k) {
  switch (k) {
    case TermKind::intercept: return "intercept";
    case TermKind::constant_vector: return "constant";
    case TermKind::varying_scalar: return "scalar";
    case TermKind::functional: return "functional";
    case TermKind::functional_interaction: return "interaction";
  }
  return "intercept";
}

TermKind kind_from_string(const std::string& s) {
  if (s == "intercept") return TermKind::intercept;
  if (s == "constant") return TermKind::constant_vector;
  if (s == "scalar") return TermKind::varying_scalar;
  if (s == "functional") return TermKind::functional;
  if (s == "interaction") return TermKind::functional_interaction;
  throw std::runtime_error("unknown term kind '" + s + "'");
}

}  // namespace

void save_model(const FittedCdfModel& model, const std::string& path) {
  json j;
  j["format"] = "cdqr-model";
  j["version"] = 1;
  j["mode"] = model.mode == FitMode::joint ? "joint" : "pointwise";
  j["link"] = model.link;
  j["grid"] = {{"points", vec_to_json(model.response_grid.points)},
               {"rule", model.response_grid.rule == GridRule::full_range ? "full_range"
                                                                         : "trimmed"}};
  j["t_grid"] = vec_to_json(model.t_grid);
  j["integration"] =
      model.integration == IntegrationRule::riemann_left ? "riemann_left" : "trapezoid";

  json terms = json::array();
  for (const auto& t : model.terms) {
    json tj;
    tj["kind"] = kind_to_string(t.kind);
    tj["columns"] = t.columns;
    tj["label"] = t.label;
    tj["y_basis"] = basis_to_json(t.y_basis);
    tj["t_basis"] = basis_to_json(t.t_basis);
    terms.push_back(tj);
  }
  j["terms"] = terms;

  if (model.mode == FitMode::joint) {
    json coefs = json::array();
    for (const auto& c : model.coefficients) coefs.push_back(vec_to_json(c));
    j["coefficients"] = coefs;
    j["lambdas"] = model.lambdas;
  } else {
    j["pointwise"] = {{"coefficients", mat_to_json(model.pointwise_coefficients)},
                      {"lambdas", mat_to_json(model.pointwise_lambdas)},
                      {"degenerate_points", model.degenerate_points},
                      {"point_converged", model.point_converged}};
  }
  j["convergence"] = {{"inner_iterations", model.convergence.inner_iterations},
                      {"outer_iterations", model.convergence.outer_iterations},
                      {"final_rel_change", model.convergence.final_rel_change},
                      {"gradient_norm", model.convergence.gradient_norm},
                      {"converged", model.convergence.converged}};

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model file '" + path + "'");
  out << j.dump(1) << "\n";
  if (!out) throw std::runtime_error("write failed for model file '" + path + "'");
}

FittedCdfModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("model file '" + path + "' is not valid JSON: " + e.what());
  }
  if (j.value("format", "") != "cdqr-model")
    throw std::runtime_error("'" + path + "' is not a cdqr model file");
  if (j.value("version", 0) != 1)
    throw std::runtime_error("unsupported model version in '" + path + "'");

  FittedCdfModel model;
  model.mode = j.at("mode").get<std::string>() == "joint" ? FitMode::joint : FitMode::pointwise;
  model.link = j.value("link", "logit");
  model.response_grid.points = vec_from_json(j.at("grid").at("points"));
  model.response_grid.rule = j.at("grid").at("rule").get<std::string>() == "full_range"
                                 ? GridRule::full_range
                                 : GridRule::trimmed_order_statistics;
  model.t_grid = vec_from_json(j.at("t_grid"));
  model.integration = j.value("integration", "riemann_left") == "trapezoid"
                          ? IntegrationRule::trapezoid
                          : IntegrationRule::riemann_left;

  for (const auto& tj : j.at("terms")) {
    TermSpec t;
    t.kind = kind_from_string(tj.at("kind").get<std::string>());
    t.columns = tj.at("columns").get<std::vector<std::string>>();
    t.label = tj.value("label", "");
    t.y_basis = basis_from_json(tj.at("y_basis"));
    t.t_basis = basis_from_json(tj.at("t_basis"));
    model.terms.push_back(std::move(t));
  }

  if (model.mode == FitMode::joint) {
    for (const auto& c : j.at("coefficients")) model.coefficients.push_back(vec_from_json(c));
    model.lambdas = j.at("lambdas").get<std::vector<double>>();
  } else {
    const json& pw = j.at("pointwise");
    model.pointwise_coefficients = mat_from_json(pw.at("coefficients"));
    model.pointwise_lambdas = mat_from_json(pw.at("lambdas"));
    model.degenerate_points = pw.at("degenerate_points").get<std::vector<int>>();
    model.point_converged = pw.at("point_converged").get<std::vector<std::uint8_t>>();
  }
  const json& cv = j.at("convergence");
  model.convergence.inner_iterations = cv.value("inner_iterations", 0);
  model.convergence.outer_iterations = cv.value("outer_iterations", 0);
  model.convergence.final_rel_change = cv.value("final_rel_change", 0.0);
  model.convergence.gradient_norm = cv.value("gradient_norm", 0.0);
  model.convergence.converged = cv.value("converged", false);
  return model;
}

}  // namespace cdqr
