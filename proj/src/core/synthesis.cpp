#include "dualctl/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <sstream>

#include "dualctl/error.hpp"

namespace dualctl {

using sdp::AffineMatrix;
using sdp::ConicProgram;
using sdp::Status;

namespace {

SolveReport report_of(const sdp::Solution& s) {
  SolveReport r;
  r.status = s.status;
  r.iterations = s.iterations;
  r.equality_residual = s.equality_residual;
  r.min_psd_eigenvalue = s.min_psd_eigenvalue;
  r.message = s.message;
  return r;
}

bool usable(const sdp::Solution& s) {
  if (s.status == Status::kOptimal) return true;
  return s.status == Status::kInaccurate && s.equality_residual <= 1e-6 && s.min_psd_eigenvalue >= -1e-6;
}

std::string describe(const sdp::Solution& s) {
  std::ostringstream os;
  os << sdp::to_string(s.status) << " (" << s.message;
  if (s.status == Status::kInaccurate) {
    os << "; equality residual " << s.equality_residual << ", min PSD eigenvalue " << s.min_psd_eigenvalue;
  }
  os << ")";
  return os.str();
}

void check_model(const Model& model, int F) {
  if (F < 1) throw ContractViolation("F must be at least 1");
  if (model.A_hat.rows() != model.A_hat.cols() || model.B_hat.rows() != model.A_hat.rows()) {
    throw ContractViolation("model dimensions are inconsistent");
  }
}

struct RobustProgram {
  ConicProgram program;
  FIRVariables vars;
  int P = -1;
  int lambda = -1;
};

RobustProgram build_robust(const Model& model, const CostWeights& weights, int F, const Eigen::MatrixXd& D) {
  RobustProgram rp;
  const int nx = model.n_x(), nu = model.n_u();
  rp.vars = declare_fir(rp.program, nx, nu, F);
  add_affine_constraints(rp.program, rp.vars, model.A_hat, model.B_hat);
  add_h2_objective(rp.program, rp.vars, weights, model.sigma_w);
  rp.P = declare_certificate(rp.program, nx, F, "P");
  add_hinf_structure(rp.program, rp.P, nx, F, 1.0);
  rp.lambda = rp.program.add_variable("lambda", 1, 1);
  add_robust_stability_lmi(rp.program, nx, rp.vars.stacked(rp.program), rp.P, rp.program.entry(rp.lambda, 0, 0),
                           AffineMatrix::constant(D));
  return rp;
}

}  // namespace

SynthesisResult nominal_synthesis(const Model& model, const CostWeights& weights, int F,
                                  const sdp::SolverSettings& settings) {
  check_model(model, F);
  ConicProgram prog;
  const FIRVariables vars = declare_fir(prog, model.n_x(), model.n_u(), F);
  add_affine_constraints(prog, vars, model.A_hat, model.B_hat);
  add_h2_objective(prog, vars, weights, model.sigma_w);
  const sdp::Solution sol = sdp::solve(prog, settings);
  if (!usable(sol)) throw Infeasible("nominal synthesis: " + describe(sol));
  SynthesisResult r;
  r.phi = vars.value(sol, prog);
  r.cost = h2_cost(r.phi, weights, model.sigma_w);
  r.solver = report_of(sol);
  return r;
}

SynthesisResult robust_synthesis(const Model& model, const CostWeights& weights, int F,
                                 const RobustOptions& options) {
  check_model(model, F);
  const int attempts = options.fallback ? options.fallback_attempts : 0;
  std::string first_failure;
  for (int i = 0; i <= attempts; ++i) {
    const double scale = std::pow(options.fallback_factor, i);
    RobustProgram rp = build_robust(model, weights, F, scale * model.D);
    const sdp::Solution sol = sdp::solve(rp.program, options.solver);
    if (!usable(sol)) {
      if (i == 0) first_failure = describe(sol);
      continue;
    }
    SynthesisResult r;
    r.phi = rp.vars.value(sol, rp.program);
    r.cost = h2_cost(r.phi, weights, model.sigma_w);
    r.lambda = std::clamp(sol.scalar("lambda"), 0.0, 1.0);
    HinfCertificate cert;
    cert.P = sol.value("P");
    cert.gamma = 1.0;
    r.certificate = cert;
    r.solver = report_of(sol);
    r.heuristic = i > 0;
    r.d_scale = scale;
    return r;
  }
  throw Infeasible("robust synthesis: " + first_failure);
}

std::vector<double> default_lambda2_grid(double lambda_nom) {
  std::vector<double> g;
  for (int i = 0; i < 24; ++i) g.push_back(std::pow(10.0, -3.0 + 3.0 * i / 23.0));
  g.back() = 1.0;
  if (lambda_nom > 0.0 && lambda_nom <= 1.0) g.push_back(lambda_nom);
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

namespace {

struct DualSolve {
  GridPoint point;
  sdp::Solution solution;
  DualPlan plan;
};

DualSolve solve_dual_point(const Model& model, const CostWeights& weights, int F, int T, int T_e, double lambda2,
                           const UncertaintyExpr& D_lin, const sdp::SolverSettings& settings) {
  const int nx = model.n_x(), nu = model.n_u();
  ConicProgram prog;
  const FIRVariables v1 = declare_fir(prog, nx, nu, F, "explore.");
  const FIRVariables v2 = declare_fir(prog, nx, nu, F, "exploit.");
  add_affine_constraints(prog, v1, model.A_hat, model.B_hat);
  add_affine_constraints(prog, v2, model.A_hat, model.B_hat);
  add_h2_objective(prog, v1, weights, model.sigma_w, static_cast<double>(T_e));
  add_h2_objective(prog, v2, weights, model.sigma_w, static_cast<double>(T - T_e));
  const int P1 = declare_certificate(prog, nx, F, "explore.P");
  const int P2 = declare_certificate(prog, nx, F, "exploit.P");
  add_hinf_structure(prog, P1, nx, F, 1.0);
  add_hinf_structure(prog, P2, nx, F, 1.0);
  const int lam1 = prog.add_variable("lambda1", 1, 1);
  const AffineMatrix S1 = v1.stacked(prog);
  add_robust_stability_lmi(prog, nx, S1, P1, prog.entry(lam1, 0, 0), AffineMatrix::constant(model.D), "explore");
  add_robust_stability_lmi(prog, nx, v2.stacked(prog), P2, lambda2, D_lin.affine(S1), "exploit");

  DualSolve out;
  out.point.lambda2 = lambda2;
  out.solution = sdp::solve(prog, settings);
  out.point.status = out.solution.status;
  out.point.objective = std::numeric_limits<double>::infinity();
  if (usable(out.solution)) {
    DualPlan& p = out.plan;
    p.phi1 = v1.value(out.solution, prog);
    p.phi2_planned = v2.value(out.solution, prog);
    p.lambda1 = std::clamp(out.solution.scalar("lambda1"), 0.0, 1.0);
    p.lambda2 = lambda2;
    p.cost1 = h2_cost(p.phi1, weights, model.sigma_w);
    p.cost2 = h2_cost(p.phi2_planned, weights, model.sigma_w);
    p.objective = T_e * p.cost1 + (T - T_e) * p.cost2;
    p.solver = report_of(out.solution);
    out.point.objective = p.objective;
  } else if (out.solution.status == Status::kInaccurate) {
    out.point.status = Status::kInaccurate;
  }
  return out;
}

}  // namespace

DualPlan dual_synthesis(const Model& model, const CostWeights& weights, int F, int T, int T_e,
                        const std::vector<double>& grid, const SynthesisResult& robust_nominal,
                        const DualOptions& options) {
  check_model(model, F);
  if (grid.empty()) throw ContractViolation("dual synthesis: empty lambda2 grid");
  if (!(T_e >= 1 && T_e < T)) throw ContractViolation("dual synthesis: need 1 <= T_e < T");
  for (double l : grid) {
    if (!(l > 0.0 && l <= 1.0)) throw ContractViolation("dual synthesis: lambda2 grid values must lie in (0, 1]");
  }
  std::vector<double> order = grid;
  std::sort(order.begin(), order.end(), std::greater<>());
  order.erase(std::unique(order.begin(), order.end()), order.end());

  const UncertaintyExpr D_lin = linearized_uncertainty(model.D, stack(robust_nominal.phi), T_e, model.c_delta);

  std::vector<DualSolve> results(order.size());
  if (options.prune_infeasible || options.jobs <= 1) {
    bool infeasible_seen = false;
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (infeasible_seen && options.prune_infeasible) {
        results[i].point.lambda2 = order[i];
        results[i].point.status = Status::kInfeasible;
        results[i].point.objective = std::numeric_limits<double>::infinity();
        results[i].point.pruned = true;
        continue;
      }
      results[i] = solve_dual_point(model, weights, F, T, T_e, order[i], D_lin, options.solver);
      if (results[i].point.status == Status::kInfeasible) infeasible_seen = true;
    }
  } else {
    for (std::size_t start = 0; start < order.size(); start += options.jobs) {
      std::vector<std::future<DualSolve>> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + options.jobs); ++i) {
        batch.push_back(std::async(std::launch::async, solve_dual_point, std::cref(model), std::cref(weights), F, T,
                                   T_e, order[i], std::cref(D_lin), std::cref(options.solver)));
      }
      for (std::size_t k = 0; k < batch.size(); ++k) results[start + k] = batch[k].get();
    }
  }

  const DualSolve* best = nullptr;
  for (const DualSolve& r : results) {
    if (!std::isfinite(r.point.objective)) continue;
    if (best == nullptr || r.point.objective < best->point.objective ||
        (r.point.objective == best->point.objective && r.point.lambda2 < best->point.lambda2)) {
      best = &r;
    }
  }
  if (best == nullptr) {
    throw Infeasible("dual synthesis: every lambda2 grid point is infeasible or unsolved");
  }
  DualPlan plan = best->plan;
  for (auto it = results.rbegin(); it != results.rend(); ++it) plan.table.push_back(it->point);
  return plan;
}

DualPlan dual_synthesis(const Model& model, const CostWeights& weights, int F, int T, int T_e,
                        const std::vector<double>& grid, const DualOptions& options) {
  RobustOptions ro;
  ro.solver = options.solver;
  const SynthesisResult nom = robust_synthesis(model, weights, F, ro);
  return dual_synthesis(model, weights, F, T, T_e, grid, nom, options);
}

}  // namespace dualctl
