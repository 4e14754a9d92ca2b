#include "dualctl/io.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>

#include "dualctl/error.hpp"

namespace dualctl {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "A", "B", "sigma_w", "Q", "R", "delta", "chi_square", "T", "T_e", "F", "n_init_rollouts",
      "init_rollout_len", "mc_runs", "master_seed", "pilot_runs", "greedy_target", "lambda2_grid", "jobs",
      "prune_lambda2", "robust_fallback", "solver.feas_tol", "solver.gap_tol", "solver.max_iterations", "data",
      "model", "A_hat", "B_hat", "D", "c_delta"};
  return keys;
}

bool get_bool(const KeyValueDoc& doc, const std::string& key, bool fallback) {
  if (!doc.has(key)) return fallback;
  const std::string v = doc.get_string(key);
  if (v == "true") return true;
  if (v == "false") return false;
  throw ValidationError(key, "expected true or false, got '" + v + "'");
}

int get_int(const KeyValueDoc& doc, const std::string& key) {
  const long v = doc.get_int(key);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw ValidationError(key, "out of range");
  }
  return static_cast<int>(v);
}

int get_int_or(const KeyValueDoc& doc, const std::string& key, int fallback) {
  return doc.has(key) ? get_int(doc, key) : fallback;
}

std::uint64_t get_seed(const KeyValueDoc& doc, const std::string& key, std::uint64_t fallback) {
  if (!doc.has(key)) return fallback;
  const std::string s = doc.get_string(key);
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw ValidationError(key, "expected a non-negative integer");
  }
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw ValidationError(key, "out of range");
  }
}

void put(std::ostream& out, const std::string& key, const std::string& value) {
  out << key << " = " << value << '\n';
}

void put(std::ostream& out, const std::string& key, double value) { put(out, key, format_double(value)); }

void put_taps(std::ostream& out, const std::string& prefix, const FIRPair& phi) {
  for (int k = 0; k < phi.length(); ++k) put(out, prefix + "Phi_x." + std::to_string(k + 1), format_matrix(phi.phi_x[k]));
  for (int k = 0; k < phi.length(); ++k) put(out, prefix + "Phi_u." + std::to_string(k + 1), format_matrix(phi.phi_u[k]));
}

void put_solver(std::ostream& out, const std::string& prefix, const SolveReport& r) {
  put(out, prefix + "status", sdp::to_string(r.status));
  put(out, prefix + "iterations", std::to_string(r.iterations));
  put(out, prefix + "equality_residual", r.equality_residual);
  put(out, prefix + "min_psd_eigenvalue", r.min_psd_eigenvalue);
}

double min_eigenvalue(const Eigen::MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace

ToolConfig::ToolConfig(KeyValueDoc doc, std::string base_dir) : doc_(std::move(doc)), base_dir_(std::move(base_dir)) {}

ToolConfig ToolConfig::load(const std::string& path) {
  const std::filesystem::path p(path);
  const std::string dir = p.has_parent_path() ? p.parent_path().string() : ".";
  return ToolConfig(KeyValueDoc::load(path), dir);
}

std::string ToolConfig::resolve(const std::string& path) const {
  const std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(base_dir_) / p).lexically_normal().string();
}

void ToolConfig::check_keys() const {
  for (const auto& [k, v] : doc_.entries()) {
    if (k.rfind("manifest.", 0) == 0) continue;
    if (!known_keys().count(k)) throw ValidationError(k, "unknown configuration key");
  }
}

double ToolConfig::delta() const {
  const double d = doc_.get_double("delta");
  if (!(d > 0.0 && d < 1.0)) throw ValidationError("delta", "must lie in (0, 1)");
  return d;
}

double ToolConfig::sigma_w() const {
  const double s = doc_.get_double("sigma_w");
  if (!(s > 0.0)) throw ValidationError("sigma_w", "must be positive");
  return s;
}

ChiSquareConvention ToolConfig::convention() const {
  if (!doc_.has("chi_square")) return ChiSquareConvention::kCoverage;
  const std::string v = doc_.get_string("chi_square");
  if (v == "coverage") return ChiSquareConvention::kCoverage;
  if (v == "literal") return ChiSquareConvention::kLiteral;
  throw ValidationError("chi_square", "expected coverage or literal, got '" + v + "'");
}

CostWeights ToolConfig::weights() const {
  const Eigen::MatrixXd Q = doc_.get_matrix("Q"), R = doc_.get_matrix("R");
  if (Q.rows() != Q.cols()) throw ValidationError("Q", "must be square");
  if (R.rows() != R.cols()) throw ValidationError("R", "must be square");
  for (const auto& [name, M] : {std::pair<const char*, const Eigen::MatrixXd&>{"Q", Q}, {"R", R}}) {
    if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, M.cwiseAbs().maxCoeff())) {
      throw ValidationError(name, "must be symmetric");
    }
    if (min_eigenvalue(M) < -1e-10 * std::max(1.0, M.cwiseAbs().maxCoeff())) {
      throw ValidationError(name, "must be positive semidefinite");
    }
  }
  return CostWeights(Q, R);
}

sdp::SolverSettings ToolConfig::solver() const {
  sdp::SolverSettings s;
  if (doc_.has("solver.feas_tol")) s.feas_tol = doc_.get_double("solver.feas_tol");
  if (doc_.has("solver.gap_tol")) s.gap_tol = doc_.get_double("solver.gap_tol");
  s.max_iterations = get_int_or(doc_, "solver.max_iterations", s.max_iterations);
  if (!(s.feas_tol > 0.0)) throw ValidationError("solver.feas_tol", "must be positive");
  if (!(s.gap_tol > 0.0)) throw ValidationError("solver.gap_tol", "must be positive");
  if (s.max_iterations < 1) throw ValidationError("solver.max_iterations", "must be at least 1");
  return s;
}

RobustOptions ToolConfig::robust_options() const {
  RobustOptions o;
  o.solver = solver();
  o.fallback = get_bool(doc_, "robust_fallback", false);
  return o;
}

DualOptions ToolConfig::dual_options() const {
  DualOptions o;
  o.solver = solver();
  o.prune_infeasible = get_bool(doc_, "prune_lambda2", true);
  o.jobs = get_int_or(doc_, "jobs", 1);
  if (o.jobs < 1) throw ValidationError("jobs", "must be at least 1");
  return o;
}

std::vector<double> ToolConfig::lambda2_grid() const {
  if (!doc_.has("lambda2_grid") || doc_.get_string("lambda2_grid") == "default") return {};
  std::vector<double> g = doc_.get_vector("lambda2_grid");
  if (g.empty()) throw ValidationError("lambda2_grid", "must not be empty");
  for (double l : g) {
    if (!(l > 0.0 && l <= 1.0)) throw ValidationError("lambda2_grid", "values must lie in (0, 1]");
  }
  return g;
}

LTISystem ToolConfig::plant() const {
  const Eigen::MatrixXd A = doc_.get_matrix("A"), B = doc_.get_matrix("B");
  if (A.rows() != A.cols()) throw ValidationError("A", "must be square");
  if (B.rows() != A.rows()) throw ValidationError("B", "must have as many rows as A");
  return LTISystem(A, B, sigma_w());
}

std::uint64_t ToolConfig::master_seed() const { return get_seed(doc_, "master_seed", ExperimentConfig{}.master_seed); }

ExperimentConfig ToolConfig::experiment() const {
  check_keys();
  ExperimentConfig c;
  c.true_system = plant();
  c.weights = weights();
  c.delta = delta();
  c.convention = convention();
  c.T = get_int(doc_, "T");
  c.T_e = get_int(doc_, "T_e");
  c.F = get_int(doc_, "F");
  c.n_init_rollouts = get_int_or(doc_, "n_init_rollouts", c.n_init_rollouts);
  c.init_rollout_len = get_int_or(doc_, "init_rollout_len", c.init_rollout_len);
  c.mc_runs = get_int_or(doc_, "mc_runs", c.mc_runs);
  c.master_seed = master_seed();
  c.pilot_runs = get_int_or(doc_, "pilot_runs", c.pilot_runs);
  if (doc_.has("greedy_target")) c.greedy_target = doc_.get_double("greedy_target");
  c.lambda2_grid = lambda2_grid();
  c.jobs = get_int_or(doc_, "jobs", c.jobs);
  c.solver = solver();
  c.prune_lambda2 = get_bool(doc_, "prune_lambda2", true);
  c.robust_fallback = get_bool(doc_, "robust_fallback", false);
  c.validate();
  return c;
}

bool ToolConfig::has_inline_model() const { return doc_.has("A_hat"); }

Model ToolConfig::inline_model() const { return read_model(doc_); }

void write_model(const Model& model, std::ostream& out) {
  out << "# identified model: credibility region X^T D X <= I, X = [A_hat - A, B_hat - B]^T\n";
  put(out, "A_hat", format_matrix(model.A_hat));
  put(out, "B_hat", format_matrix(model.B_hat));
  put(out, "D", format_matrix(model.D));
  put(out, "delta", model.delta);
  put(out, "sigma_w", model.sigma_w);
  put(out, "c_delta", model.c_delta);
}

Model read_model(const KeyValueDoc& doc) {
  Model m;
  m.A_hat = doc.get_matrix("A_hat");
  m.B_hat = doc.get_matrix("B_hat");
  m.D = doc.get_matrix("D");
  m.delta = doc.get_double("delta");
  m.sigma_w = doc.get_double("sigma_w");
  m.c_delta = doc.get_double("c_delta");
  const int nx = m.n_x(), nu = m.n_u();
  if (m.A_hat.rows() != m.A_hat.cols()) throw ValidationError("A_hat", "must be square");
  if (m.B_hat.rows() != nx) throw ValidationError("B_hat", "must have as many rows as A_hat");
  if (m.D.rows() != nx + nu || m.D.cols() != nx + nu) throw ValidationError("D", "must be (n_x + n_u) square");
  if ((m.D - m.D.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, m.D.cwiseAbs().maxCoeff())) {
    throw ValidationError("D", "must be symmetric");
  }
  if (min_eigenvalue(m.D) < -1e-9 * std::max(1.0, m.D.cwiseAbs().maxCoeff())) {
    throw ValidationError("D", "must be positive semidefinite");
  }
  if (!(m.delta > 0.0 && m.delta < 1.0)) throw ValidationError("delta", "must lie in (0, 1)");
  if (!(m.sigma_w > 0.0)) throw ValidationError("sigma_w", "must be positive");
  if (!(m.c_delta > 0.0)) throw ValidationError("c_delta", "must be positive");
  return m;
}

Model load_model(const std::string& path) { return read_model(KeyValueDoc::load(path)); }

void write_synthesis_report(const std::string& mode, const SynthesisResult& result, const Model& model,
                            std::ostream& out) {
  put(out, "mode", mode);
  put(out, "n_x", std::to_string(model.n_x()));
  put(out, "n_u", std::to_string(model.n_u()));
  put(out, "F", std::to_string(result.phi.length()));
  put(out, "cost", result.cost);
  put_solver(out, "solver.", result.solver);
  put(out, "affine_residual", affine_residual(result.phi, model.A_hat, model.B_hat));
  if (result.lambda) put(out, "lambda", *result.lambda);
  if (result.certificate) {
    put(out, "certificate.structure_residual", hinf_structure_residual(*result.certificate, model.n_x()));
    put(out, "certificate.lmi_min_eigenvalue",
        min_eigenvalue(robust_lmi_value(model.n_x(), stack(result.phi), result.certificate->P,
                                        result.lambda.value_or(1.0), result.d_scale * model.D)));
    put(out, "heuristic", result.heuristic ? "true" : "false");
    put(out, "d_scale", result.d_scale);
  }
  put_taps(out, "", result.phi);
}

void write_dual_report(const DualPlan& plan, const Model& model, int T, int T_e, std::ostream& out) {
  put(out, "mode", "dual");
  put(out, "n_x", std::to_string(model.n_x()));
  put(out, "n_u", std::to_string(model.n_u()));
  put(out, "F", std::to_string(plan.phi1.length()));
  put(out, "T", std::to_string(T));
  put(out, "T_e", std::to_string(T_e));
  put(out, "objective", plan.objective);
  put(out, "cost.explore", plan.cost1);
  put(out, "cost.exploit_planned", plan.cost2);
  put(out, "lambda1", plan.lambda1);
  put(out, "lambda2", plan.lambda2);
  put_solver(out, "solver.", plan.solver);
  put(out, "affine_residual.explore", affine_residual(plan.phi1, model.A_hat, model.B_hat));
  put(out, "affine_residual.exploit_planned", affine_residual(plan.phi2_planned, model.A_hat, model.B_hat));
  put(out, "grid.count", std::to_string(plan.table.size()));
  for (std::size_t i = 0; i < plan.table.size(); ++i) {
    const GridPoint& g = plan.table[i];
    const std::string p = "grid." + std::to_string(i + 1) + ".";
    put(out, p + "lambda2", g.lambda2);
    put(out, p + "objective", g.objective);
    put(out, p + "status", sdp::to_string(g.status));
    put(out, p + "pruned", g.pruned ? "true" : "false");
  }
  put_taps(out, "explore.", plan.phi1);
  put_taps(out, "exploit_planned.", plan.phi2_planned);
}

}  // namespace dualctl
