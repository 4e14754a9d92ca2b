#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "dualctl/error.hpp"
#include "dualctl/sls.hpp"
#include "dualctl/synthesis.hpp"

namespace dualctl {
namespace {

using sdp::AffineMatrix;
using sdp::ConicProgram;
using sdp::Status;

Eigen::MatrixXd random_matrix(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g;
  return Eigen::MatrixXd::NullaryExpr(r, c, [&] { return scale * g(rng); });
}

double min_eig(const Eigen::MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double sigma_max_at(const std::vector<Eigen::MatrixXd>& taps, double w) {
  Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(taps[0].rows(), taps[0].cols());
  for (std::size_t k = 0; k < taps.size(); ++k) {
    H += taps[k].cast<std::complex<double>>() * std::polar(1.0, -w * static_cast<double>(k + 1));
  }
  return Eigen::JacobiSVD<Eigen::MatrixXcd>(H).singularValues()(0);
}

// Dense frequency grid followed by golden-section refinement around the best
// sample, giving the peak gain to near machine precision.
double refined_hinf_norm(const std::vector<Eigen::MatrixXd>& taps) {
  const int n = 4096;
  int best = 0;
  double best_val = -1;
  for (int i = 0; i < n; ++i) {
    const double v = sigma_max_at(taps, 2 * std::numbers::pi * i / n);
    if (v > best_val) best_val = v, best = i;
  }
  double a = 2 * std::numbers::pi * (best - 1) / n, b = 2 * std::numbers::pi * (best + 1) / n;
  const double r = (std::sqrt(5.0) - 1) / 2;
  for (int it = 0; it < 100; ++it) {
    const double c = b - r * (b - a), d = a + r * (b - a);
    if (sigma_max_at(taps, c) > sigma_max_at(taps, d)) b = d; else a = c;
  }
  return std::max(best_val, sigma_max_at(taps, 0.5 * (a + b)));
}

TEST(AffineConstraints, DeadbeatModelStructure) {
  ConicProgram prog;
  const FIRVariables v = declare_fir(prog, 2, 2, 2);
  EXPECT_EQ(add_affine_constraints(prog, v, Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Identity(2, 2)), 12);
  std::mt19937_64 rng(1);
  FIRPair phi = FIRPair::zeros(2, 2, 2);
  phi.phi_x[0] = Eigen::MatrixXd::Identity(2, 2);
  phi.phi_u[0] = random_matrix(2, 2, rng);
  phi.phi_x[1] = phi.phi_u[0];
  EXPECT_EQ(affine_residual(phi, Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Identity(2, 2)), 0.0);
  phi.phi_u[1](0, 1) = 0.25;
  EXPECT_DOUBLE_EQ(affine_residual(phi, Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Identity(2, 2)), 0.25);
}

TEST(AffineConstraints, EquationCount) {
  ConicProgram prog;
  const FIRVariables v = declare_fir(prog, 2, 2, 12);
  EXPECT_EQ(add_affine_constraints(prog, v, Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2)), 52);
}

TEST(AffineConstraints, UnactuatedModeIsInfeasible) {
  Model m;
  m.A_hat = Eigen::MatrixXd::Constant(1, 1, 0.5);
  m.B_hat = Eigen::MatrixXd::Zero(1, 1);
  m.D = Eigen::MatrixXd::Identity(2, 2);
  const CostWeights w(Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 1));
  for (int F : {1, 4, 10}) EXPECT_THROW(nominal_synthesis(m, w, F), Infeasible);
}

TEST(H2Cost, Examples) {
  FIRPair phi = FIRPair::zeros(2, 2, 3);
  phi.phi_x[0] = Eigen::MatrixXd::Identity(2, 2);
  const CostWeights w(Eigen::Vector2d(1, 0.001).asDiagonal(), 1000 * Eigen::MatrixXd::Identity(2, 2));
  EXPECT_NEAR(h2_cost(phi, w, 1.0), 1.001, 1e-12);
  phi.phi_u[0] = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_NEAR(h2_cost(phi, w, 1.0), 2001.001, 1e-9);
  EXPECT_NEAR(h2_cost(phi, w, 2.0), 4 * 2001.001, 1e-8);
}

TEST(H2Cost, ObjectiveMatchesDirectEvaluation) {
  std::mt19937_64 rng(3);
  ConicProgram prog;
  const FIRVariables v = declare_fir(prog, 2, 3, 4);
  Eigen::MatrixXd Lq = random_matrix(2, 2, rng), Lr = random_matrix(3, 3, rng);
  const CostWeights w(Lq * Lq.transpose(), Lr * Lr.transpose());
  add_h2_objective(prog, v, w, 1.5, 3.0);
  // Minimizing with Phi fixed by equalities reads the objective back.
  FIRPair phi = FIRPair::zeros(2, 3, 4);
  for (int k = 0; k < 4; ++k) {
    phi.phi_x[k] = random_matrix(2, 2, rng);
    phi.phi_u[k] = random_matrix(3, 2, rng);
    prog.add_equality(prog.var(v.phi_x[k]) - AffineMatrix::constant(phi.phi_x[k]));
    prog.add_equality(prog.var(v.phi_u[k]) - AffineMatrix::constant(phi.phi_u[k]));
  }
  const sdp::Solution s = sdp::solve(prog);
  ASSERT_EQ(s.status, Status::kOptimal);
  EXPECT_NEAR(s.objective_value, 3.0 * h2_cost(phi, w, 1.5), 1e-8 * s.objective_value);
}

TEST(HinfStructure, SingleTapIsSpectralNorm) {
  std::mt19937_64 rng(4);
  const std::vector<Eigen::MatrixXd> taps = {random_matrix(3, 2, rng)};
  const HinfBound b = certify_hinf_norm(taps);
  ASSERT_EQ(b.status, Status::kOptimal);
  const double smax = Eigen::JacobiSVD<Eigen::MatrixXd>(taps[0]).singularValues()(0);
  EXPECT_NEAR(b.norm_bound, smax, 1e-6 * smax);
}

TEST(HinfStructure, ZeroTransferAdmitsScaledIdentity) {
  const int p = 2, F = 4;
  const double gamma = 0.7;
  HinfCertificate c;
  c.gamma = gamma;
  c.P = (gamma / F) * Eigen::MatrixXd::Identity(p * F, p * F);
  EXPECT_LT(hinf_structure_residual(c, p), 1e-15);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(p * F + p, p * F + p);
  M.topLeftCorner(p * F, p * F) = c.P;
  M.bottomRightCorner(p, p).setIdentity();
  EXPECT_GE(min_eig(M), 0.0);
}

TEST(HinfStructure, CertifiedBoundMatchesFrequencySweep) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(1, 3), len(1, 12);
  for (int trial = 0; trial < 20; ++trial) {
    const int rows = dim(rng), cols = dim(rng), F = len(rng);
    std::vector<Eigen::MatrixXd> taps;
    for (int k = 0; k < F; ++k) taps.push_back(random_matrix(rows, cols, rng, 1.0 / std::sqrt(F)));
    const HinfBound b = certify_hinf_norm(taps);
    ASSERT_EQ(b.status, Status::kOptimal) << "trial " << trial;
    const double sampled = sampled_hinf_norm(taps, 512);
    const double peak = refined_hinf_norm(taps);
    EXPECT_LE(sampled, b.norm_bound + 1e-6) << "trial " << trial;
    EXPECT_LE(std::abs(b.norm_bound - peak), 1e-5 * peak) << "trial " << trial;
    EXPECT_LT(hinf_structure_residual(b.certificate, rows), 1e-6);
  }
}

TEST(RobustLmi, ZeroMultiplierForcesZeroResponse) {
  ConicProgram prog;
  const FIRVariables v = declare_fir(prog, 1, 1, 2);
  add_affine_constraints(prog, v, Eigen::MatrixXd::Constant(1, 1, 0.5), Eigen::MatrixXd::Ones(1, 1));
  const int P = declare_certificate(prog, 1, 2);
  add_hinf_structure(prog, P, 1, 2, 1.0);
  add_robust_stability_lmi(prog, 1, v.stacked(prog), P, 0.0, AffineMatrix::constant(Eigen::MatrixXd::Identity(2, 2)));
  EXPECT_EQ(sdp::solve(prog).status, Status::kInfeasible);
}

TEST(RobustLmi, BilinearUseIsRejected) {
  ConicProgram prog;
  const FIRVariables v = declare_fir(prog, 1, 1, 2);
  const int P = declare_certificate(prog, 1, 2);
  const int lam = prog.add_variable("lambda", 1, 1);
  const AffineMatrix S = v.stacked(prog);
  const UncertaintyExpr D = linearized_uncertainty(Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Ones(2, 2), 5, 3.0);
  EXPECT_THROW(add_robust_stability_lmi(prog, 1, S, P, prog.entry(lam, 0, 0), D.affine(S)), ContractViolation);
}

// Feasibility only grows when D is scaled up.
TEST(RobustLmi, FeasibilityMonotoneInD) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    Model m;
    m.A_hat = random_matrix(2, 2, rng, 0.5);
    m.B_hat = Eigen::MatrixXd::Identity(2, 2) + random_matrix(2, 2, rng, 0.2);
    const Eigen::MatrixXd L = random_matrix(4, 4, rng);
    m.D = 20.0 * (L * L.transpose() + Eigen::MatrixXd::Identity(4, 4));
    const CostWeights w(Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2));
    bool feasible_before = false;
    for (double alpha : {0.01, 0.1, 1.0, 10.0, 100.0}) {
      Model scaled = m;
      scaled.D = alpha * m.D;
      bool feasible = true;
      try {
        const SynthesisResult r = robust_synthesis(scaled, w, 6);
        EXPECT_GE(*r.lambda, 0.0);
        EXPECT_LE(*r.lambda, 1.0);
      } catch (const Infeasible&) {
        feasible = false;
      }
      if (feasible_before) EXPECT_TRUE(feasible) << "trial " << trial << " alpha " << alpha;
      feasible_before = feasible_before || feasible;
    }
  }
}

TEST(RobustLmi, ValueMatchesBlockLayout) {
  std::mt19937_64 rng(6);
  const int nx = 2, nu = 1, F = 3;
  const Eigen::MatrixXd S = random_matrix(nx * F, nx + nu, rng);
  const Eigen::MatrixXd Pr = random_matrix(nx * F, nx * F, rng), Dr = random_matrix(nx + nu, nx + nu, rng);
  const Eigen::MatrixXd P = Pr + Pr.transpose(), D = Dr + Dr.transpose();
  const Eigen::MatrixXd M = robust_lmi_value(nx, S, P, 0.3, D);
  ASSERT_EQ(M.rows(), nx * F + nx + nx + nu);
  EXPECT_EQ(M.topLeftCorner(nx * F, nx * F), P);
  EXPECT_EQ(M.block(0, nx * F + nx, nx * F, nx + nu), S);
  EXPECT_EQ(M.block(nx * F, nx * F, nx, nx), 0.7 * Eigen::MatrixXd::Identity(nx, nx));
  EXPECT_EQ(M.bottomRightCorner(nx + nu, nx + nu), 0.3 * D);
  EXPECT_EQ(M.block(nx * F, 0, nx, nx * F).norm(), 0.0);
}

TEST(Uncertainty, PropagatedExamples) {
  std::mt19937_64 rng(7);
  const Eigen::MatrixXd L = random_matrix(4, 4, rng);
  const Eigen::MatrixXd D1 = L * L.transpose();
  const Eigen::MatrixXd S = random_matrix(2 * 5, 4, rng);
  EXPECT_EQ(propagated_uncertainty(D1, S, 0, 13.36), D1);
  EXPECT_EQ(propagated_uncertainty(D1, Eigen::MatrixXd::Zero(10, 4), 20, 13.36), D1);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd St = random_matrix(2 * 5, 4, rng);
    const Eigen::MatrixXd diff = propagated_uncertainty(D1, St, 20, 13.36) - D1;
    EXPECT_GE(min_eig(diff), -1e-9 * diff.norm());
    Eigen::FullPivLU<Eigen::MatrixXd> lu(diff);
    lu.setThreshold(1e-10);
    EXPECT_LE(lu.rank(), 4);
  }
}

TEST(Uncertainty, LinearizationUnderestimates) {
  std::mt19937_64 rng(8);
  const int nx = 2, nu = 2, F = 12;
  const Eigen::MatrixXd L = random_matrix(nx + nu, nx + nu, rng);
  const Eigen::MatrixXd D1 = L * L.transpose();
  const Eigen::MatrixXd S_nom = random_matrix(nx * F, nx + nu, rng, 0.3);
  const UncertaintyExpr lin = linearized_uncertainty(D1, S_nom, 20, 13.36);
  const Eigen::MatrixXd exact_nom = propagated_uncertainty(D1, S_nom, 20, 13.36);
  EXPECT_LT((lin.evaluate(S_nom) - exact_nom).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((lin.evaluate(Eigen::MatrixXd::Zero(nx * F, nx + nu)) -
             (D1 - (20 / 13.36) * S_nom.transpose() * S_nom))
                .cwiseAbs()
                .maxCoeff(),
            1e-10);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::MatrixXd S = random_matrix(nx * F, nx + nu, rng, 0.5);
    EXPECT_GE(min_eig(propagated_uncertainty(D1, S, 20, 13.36) - lin.evaluate(S)), -1e-9);
  }
}

TEST(Uncertainty, AffineFormAgreesWithEvaluate) {
  std::mt19937_64 rng(9);
  const int nx = 2, nu = 1, F = 3;
  ConicProgram prog;
  const FIRVariables v = declare_fir(prog, nx, nu, F);
  const Eigen::MatrixXd D1 = Eigen::MatrixXd::Identity(nx + nu, nx + nu);
  const UncertaintyExpr lin = linearized_uncertainty(D1, random_matrix(nx * F, nx + nu, rng), 10, 4.0);
  const AffineMatrix expr = lin.affine(v.stacked(prog));
  FIRPair phi = FIRPair::zeros(nx, nu, F);
  for (int k = 0; k < F; ++k) {
    phi.phi_x[k] = random_matrix(nx, nx, rng);
    phi.phi_u[k] = random_matrix(nu, nx, rng);
    prog.add_equality(prog.var(v.phi_x[k]) - AffineMatrix::constant(phi.phi_x[k]));
    prog.add_equality(prog.var(v.phi_u[k]) - AffineMatrix::constant(phi.phi_u[k]));
  }
  const sdp::Solution s = sdp::solve(prog);
  ASSERT_EQ(s.status, Status::kOptimal);
  Eigen::MatrixXd value(expr.rows(), expr.cols());
  for (int i = 0; i < expr.rows(); ++i) {
    for (int j = 0; j < expr.cols(); ++j) {
      value(i, j) = expr(i, j).constant;
      for (const sdp::Term& t : expr(i, j).terms) {
        value(i, j) += t.coef * s.value(prog.variables()[t.var].name)(t.row, t.col);
      }
    }
  }
  EXPECT_LT((value - lin.evaluate(stack(phi))).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Stack, RoundTrip) {
  std::mt19937_64 rng(10);
  FIRPair phi = FIRPair::zeros(2, 3, 4);
  for (int k = 0; k < 4; ++k) {
    phi.phi_x[k] = random_matrix(2, 2, rng);
    phi.phi_u[k] = random_matrix(3, 2, rng);
  }
  const Eigen::MatrixXd S = stack(phi);
  ASSERT_EQ(S.rows(), 8);
  ASSERT_EQ(S.cols(), 5);
  EXPECT_EQ(S.block(2, 0, 2, 2), phi.phi_x[1].transpose());
  EXPECT_EQ(S.block(2, 2, 2, 3), phi.phi_u[1].transpose());
  const FIRPair back = unstack(S, 2, 3);
  for (int k = 0; k < 4; ++k) {
    EXPECT_EQ(back.phi_x[k], phi.phi_x[k]);
    EXPECT_EQ(back.phi_u[k], phi.phi_u[k]);
  }
}

}  // namespace
}  // namespace dualctl
