#include "dualctl/sls.hpp"

#include <cmath>
#include <complex>

#include "dualctl/error.hpp"

namespace dualctl {

using sdp::AffineMatrix;
using sdp::AffineScalar;
using sdp::ConicProgram;

namespace {

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& M) { return 0.5 * (M + M.transpose()); }

}  // namespace

AffineMatrix FIRVariables::stacked(const ConicProgram& program) const {
  AffineMatrix S(n_x * F, n_x + n_u);
  for (int k = 0; k < F; ++k) {
    S.set_block(k * n_x, 0, program.var(phi_x[k]).transpose());
    S.set_block(k * n_x, n_x, program.var(phi_u[k]).transpose());
  }
  return S;
}

FIRPair FIRVariables::value(const sdp::Solution& solution, const ConicProgram& program) const {
  FIRPair phi = FIRPair::zeros(n_x, n_u, F);
  for (int k = 0; k < F; ++k) {
    phi.phi_x[k] = solution.value(program.variables()[phi_x[k]].name);
    phi.phi_u[k] = solution.value(program.variables()[phi_u[k]].name);
  }
  return phi;
}

FIRVariables declare_fir(ConicProgram& program, int n_x, int n_u, int F, const std::string& prefix) {
  if (F < 1) throw ContractViolation("FIR length F must be at least 1");
  if (n_x < 1 || n_u < 1) throw ContractViolation("FIR dimensions must be positive");
  FIRVariables v;
  v.n_x = n_x;
  v.n_u = n_u;
  v.F = F;
  for (int k = 1; k <= F; ++k) {
    v.phi_x.push_back(program.add_variable(prefix + "Phi_x[" + std::to_string(k) + "]", n_x, n_x));
  }
  for (int k = 1; k <= F; ++k) {
    v.phi_u.push_back(program.add_variable(prefix + "Phi_u[" + std::to_string(k) + "]", n_u, n_x));
  }
  return v;
}

int add_affine_constraints(ConicProgram& program, const FIRVariables& vars, const Eigen::MatrixXd& A_hat,
                           const Eigen::MatrixXd& B_hat) {
  const int nx = vars.n_x, F = vars.F;
  if (F < 1) throw ContractViolation("affine_constraints: F must be at least 1");
  if (A_hat.rows() != nx || A_hat.cols() != nx || B_hat.rows() != nx || B_hat.cols() != vars.n_u) {
    throw ContractViolation("affine_constraints: model dimensions do not match the responses");
  }
  int count = 0;
  auto emit = [&](const AffineMatrix& E, const std::string& label) {
    program.add_equality(E, label);
    count += E.rows() * E.cols();
  };
  emit(program.var(vars.phi_x[0]) - AffineMatrix::constant(Eigen::MatrixXd::Identity(nx, nx)), "Phi_x(1)=I");
  for (int k = 0; k + 1 < F; ++k) {
    emit(program.var(vars.phi_x[k + 1]) - A_hat * program.var(vars.phi_x[k]) - B_hat * program.var(vars.phi_u[k]),
         "recursion k=" + std::to_string(k + 1));
  }
  emit(A_hat * program.var(vars.phi_x[F - 1]) + B_hat * program.var(vars.phi_u[F - 1]), "terminal");
  return count;
}

double affine_residual(const FIRPair& phi, const Eigen::MatrixXd& A_hat, const Eigen::MatrixXd& B_hat) {
  const int F = phi.length();
  const int nx = phi.n_x();
  double r = (phi.phi_x[0] - Eigen::MatrixXd::Identity(nx, nx)).cwiseAbs().maxCoeff();
  for (int k = 0; k + 1 < F; ++k) {
    r = std::max(r, (phi.phi_x[k + 1] - A_hat * phi.phi_x[k] - B_hat * phi.phi_u[k]).cwiseAbs().maxCoeff());
  }
  r = std::max(r, (A_hat * phi.phi_x[F - 1] + B_hat * phi.phi_u[F - 1]).cwiseAbs().maxCoeff());
  return r;
}

double h2_cost(const FIRPair& phi, const CostWeights& weights, double sigma_w) {
  double J = 0.0;
  for (int k = 0; k < phi.length(); ++k) {
    J += (phi.phi_x[k].transpose() * weights.Q * phi.phi_x[k]).trace();
    J += (phi.phi_u[k].transpose() * weights.R * phi.phi_u[k]).trace();
  }
  return sigma_w * sigma_w * J;
}

void add_h2_objective(ConicProgram& program, const FIRVariables& vars, const CostWeights& weights,
                      double sigma_w, double scale) {
  auto add_weighted = [&](const Eigen::MatrixXd& W, const std::vector<int>& ids) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(W));
    for (int i = 0; i < W.rows(); ++i) {
      const double mu = es.eigenvalues()(i);
      if (mu <= 0.0) continue;
      const Eigen::MatrixXd v = es.eigenvectors().col(i).transpose();
      for (int id : ids) program.add_objective_squares(v * program.var(id), scale * sigma_w * sigma_w * mu);
    }
  };
  add_weighted(weights.Q, vars.phi_x);
  add_weighted(weights.R, vars.phi_u);
}

int declare_certificate(ConicProgram& program, int p, int F, const std::string& name) {
  return program.add_variable(name, p * F, p * F, true);
}

void add_hinf_structure(ConicProgram& program, int P, int p, int F, const AffineScalar& gamma) {
  const AffineMatrix Pm = program.var(P);
  AffineMatrix diag(p, p);
  for (int i = 0; i < F; ++i) diag += Pm.block(i * p, i * p, p, p);
  for (int r = 0; r < p; ++r) {
    for (int c = r; c < p; ++c) {
      AffineScalar e = diag(r, c);
      if (r == c) e -= gamma;
      program.add_equality(e, "sum P_ii = gamma I");
    }
  }
  for (int k = 1; k < F; ++k) {
    AffineMatrix band(p, p);
    for (int i = 0; i + k < F; ++i) band += Pm.block(i * p, (i + k) * p, p, p);
    program.add_equality(band, "band sum k=" + std::to_string(k));
  }
}

double hinf_structure_residual(const HinfCertificate& cert, int p) {
  const int F = static_cast<int>(cert.P.rows()) / p;
  Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < F; ++i) diag += cert.P.block(i * p, i * p, p, p);
  double r = (diag - cert.gamma * Eigen::MatrixXd::Identity(p, p)).cwiseAbs().maxCoeff();
  for (int k = 1; k < F; ++k) {
    Eigen::MatrixXd band = Eigen::MatrixXd::Zero(p, p);
    for (int i = 0; i + k < F; ++i) band += cert.P.block(i * p, (i + k) * p, p, p);
    r = std::max(r, band.cwiseAbs().maxCoeff());
  }
  return r;
}

void add_hinf_coupling(ConicProgram& program, int P, const AffineMatrix& Hbar) {
  const AffineMatrix Pm = program.var(P);
  if (Hbar.rows() != Pm.rows()) throw ContractViolation("hinf coupling: Hbar rows must match P");
  const int n = Pm.rows(), m = Hbar.cols();
  AffineMatrix M(n + m, n + m);
  M.set_block(0, 0, Pm);
  M.set_block(0, n, Hbar);
  M.set_block(n, 0, Hbar.transpose());
  M.set_block(n, n, AffineMatrix::constant(Eigen::MatrixXd::Identity(m, m)));
  program.add_psd(M, "hinf coupling");
}

HinfBound certify_hinf_norm(const std::vector<Eigen::MatrixXd>& taps, const sdp::SolverSettings& settings) {
  if (taps.empty()) throw ContractViolation("certify_hinf_norm: no taps");
  const int F = static_cast<int>(taps.size());
  const int p = static_cast<int>(taps[0].rows()), m = static_cast<int>(taps[0].cols());
  Eigen::MatrixXd Hbar(p * F, m);
  for (int k = 0; k < F; ++k) Hbar.block(k * p, 0, p, m) = taps[k];
  ConicProgram prog;
  const int g = prog.add_variable("gamma", 1, 1);
  const int P = declare_certificate(prog, p, F);
  add_hinf_structure(prog, P, p, F, prog.entry(g, 0, 0));
  add_hinf_coupling(prog, P, AffineMatrix::constant(Hbar));
  prog.add_objective_linear(prog.entry(g, 0, 0));
  const sdp::Solution sol = sdp::solve(prog, settings);
  HinfBound out;
  out.status = sol.status;
  if (sol.status == sdp::Status::kOptimal || sol.status == sdp::Status::kInaccurate) {
    out.certificate.gamma = sol.scalar("gamma");
    out.certificate.P = sol.value("P");
    out.norm_bound = std::sqrt(std::max(0.0, out.certificate.gamma));
  }
  return out;
}

double sampled_hinf_norm(const std::vector<Eigen::MatrixXd>& taps, int samples) {
  if (taps.empty()) return 0.0;
  const int p = static_cast<int>(taps[0].rows()), m = static_cast<int>(taps[0].cols());
  double best = 0.0;
  for (int s = 0; s < samples; ++s) {
    const double w = 2.0 * M_PI * s / samples;
    Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(p, m);
    for (std::size_t k = 0; k < taps.size(); ++k) {
      H += std::polar(1.0, -w * static_cast<double>(k + 1)) * taps[k].cast<std::complex<double>>();
    }
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(H);
    best = std::max(best, svd.singularValues()(0));
  }
  return best;
}

Eigen::MatrixXd UncertaintyExpr::constant_part() const {
  return symmetrize(D1 - scale * stack_nom.transpose() * stack_nom);
}

Eigen::MatrixXd UncertaintyExpr::evaluate(const Eigen::MatrixXd& stack) const {
  const Eigen::MatrixXd cross = stack.transpose() * stack_nom;
  return symmetrize(constant_part() + scale * (cross + cross.transpose()));
}

AffineMatrix UncertaintyExpr::affine(const AffineMatrix& stack) const {
  AffineMatrix out = AffineMatrix::constant(constant_part());
  out += scale * (stack.transpose() * stack_nom);
  out += scale * (Eigen::MatrixXd(stack_nom.transpose()) * stack);
  return out;
}

Eigen::MatrixXd propagated_uncertainty(const Eigen::MatrixXd& D1, const Eigen::MatrixXd& stack, int T_e,
                                       double c_delta) {
  if (T_e < 0 || !(c_delta > 0.0)) throw ContractViolation("propagated_uncertainty: need T_e >= 0, c_delta > 0");
  return symmetrize(D1 + (T_e / c_delta) * stack.transpose() * stack);
}

UncertaintyExpr linearized_uncertainty(const Eigen::MatrixXd& D1, const Eigen::MatrixXd& stack_nom, int T_e,
                                       double c_delta) {
  if (T_e < 0 || !(c_delta > 0.0)) throw ContractViolation("linearized_uncertainty: need T_e >= 0, c_delta > 0");
  UncertaintyExpr e;
  e.D1 = symmetrize(D1);
  e.stack_nom = stack_nom;
  e.scale = T_e / c_delta;
  return e;
}

void add_robust_stability_lmi(ConicProgram& program, int n_x, const AffineMatrix& stack, int P,
                              const AffineScalar& lambda, const AffineMatrix& D, const std::string& label) {
  const AffineMatrix Pm = program.var(P);
  const int np = Pm.rows(), nz = stack.cols();
  if (stack.rows() != np || D.rows() != nz || D.cols() != nz) {
    throw ContractViolation("robust_stability_lmi: inconsistent block dimensions");
  }
  bool d_constant = true;
  for (int i = 0; i < nz && d_constant; ++i)
    for (int j = 0; j < nz && d_constant; ++j) d_constant = D(i, j).is_constant();
  AffineMatrix lamD(nz, nz);
  if (lambda.is_constant()) {
    lamD = lambda.constant * D;
  } else if (d_constant) {
    for (int i = 0; i < nz; ++i)
      for (int j = 0; j < nz; ++j) lamD(i, j) = D(i, j).constant * lambda;
  } else {
    throw ContractViolation(
        "robust_stability_lmi: multiplier and uncertainty matrix are both variables (bilinear); fix lambda");
  }
  AffineMatrix M(np + n_x + nz, np + n_x + nz);
  M.set_block(0, 0, Pm);
  M.set_block(0, np + n_x, stack);
  M.set_block(np + n_x, 0, stack.transpose());
  M.set_block(np + n_x, np + n_x, lamD);
  for (int i = 0; i < n_x; ++i) M(np + i, np + i) = 1.0 - lambda;
  program.add_psd(M, label);
  if (!lambda.is_constant()) {
    AffineMatrix nonneg(1, 1);
    nonneg(0, 0) = lambda;
    program.add_psd(nonneg, label + " multiplier");
  }
}

Eigen::MatrixXd robust_lmi_value(int n_x, const Eigen::MatrixXd& stack, const Eigen::MatrixXd& P,
                                 double lambda, const Eigen::MatrixXd& D) {
  const int np = static_cast<int>(P.rows()), nz = static_cast<int>(stack.cols());
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(np + n_x + nz, np + n_x + nz);
  M.block(0, 0, np, np) = P;
  M.block(0, np + n_x, np, nz) = stack;
  M.block(np + n_x, 0, nz, np) = stack.transpose();
  M.block(np, np, n_x, n_x) = (1.0 - lambda) * Eigen::MatrixXd::Identity(n_x, n_x);
  M.block(np + n_x, np + n_x, nz, nz) = lambda * D;
  return symmetrize(M);
}

}  // namespace dualctl
