#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dualctl/fir.hpp"
#include "dualctl/lin_sys.hpp"
#include "dualctl/sdp.hpp"

namespace dualctl {

/// Response variables Phi_x(k), Phi_u(k), k = 1..F, declared in a program.
struct FIRVariables {
  int n_x = 0;
  int n_u = 0;
  int F = 0;
  std::vector<int> phi_x;  // variable ids, lag k at index k - 1
  std::vector<int> phi_u;

  /// Affine view of the stacked responses (see stack()).
  sdp::AffineMatrix stacked(const sdp::ConicProgram& program) const;
  FIRPair value(const sdp::Solution& solution, const sdp::ConicProgram& program) const;
};

/// Declares variables named `<prefix>Phi_x[k]` and `<prefix>Phi_u[k]`.
FIRVariables declare_fir(sdp::ConicProgram& program, int n_x, int n_u, int F,
                         const std::string& prefix = "");

/// Adds the coefficient-matched equalities of the nominal closed-loop
/// subspace:
///   Phi_x(1) = I,
///   Phi_x(k+1) = A_hat Phi_x(k) + B_hat Phi_u(k),  k = 1..F-1,
///   A_hat Phi_x(F) + B_hat Phi_u(F) = 0.
/// Returns the number of scalar equations added, n_x^2 (F + 1).
int add_affine_constraints(sdp::ConicProgram& program, const FIRVariables& vars,
                           const Eigen::MatrixXd& A_hat, const Eigen::MatrixXd& B_hat);

/// Largest absolute violation of the equalities above by a concrete pair.
double affine_residual(const FIRPair& phi, const Eigen::MatrixXd& A_hat, const Eigen::MatrixXd& B_hat);

/// sigma_w^2 sum_k ||Q^{1/2} Phi_x(k)||_F^2 + ||R^{1/2} Phi_u(k)||_F^2.
double h2_cost(const FIRPair& phi, const CostWeights& weights, double sigma_w);

/// Adds scale * h2_cost to the program objective.
void add_h2_objective(sdp::ConicProgram& program, const FIRVariables& vars, const CostWeights& weights,
                      double sigma_w, double scale = 1.0);

/// Positive-real certificate for an F-tap FIR transfer matrix with p rows:
/// P is (p F) x (p F), viewed as an F x F grid of p x p blocks.
struct HinfCertificate {
  Eigen::MatrixXd P;
  double gamma = 1.0;
};

/// Declares the symmetric certificate variable `name`.
int declare_certificate(sdp::ConicProgram& program, int p, int F, const std::string& name = "P");

/// sum_i P_ii = gamma I and sum_i P_{i,i+k} = 0 for k = 1..F-1. `gamma` may
/// be a constant or an affine expression.
void add_hinf_structure(sdp::ConicProgram& program, int P, int p, int F, const sdp::AffineScalar& gamma);

/// Largest violation of the block-sum conditions by a concrete certificate.
double hinf_structure_residual(const HinfCertificate& cert, int p);

/// [P, Hbar; Hbar^T, I] >= 0 where Hbar stacks the taps H(1), ..., H(F).
void add_hinf_coupling(sdp::ConicProgram& program, int P, const sdp::AffineMatrix& Hbar);

/// Result of minimizing gamma over the certificate for a fixed FIR.
struct HinfBound {
  double norm_bound = 0.0;  // sqrt(gamma): bounds max_w sigma_max(H(e^jw))
  HinfCertificate certificate;
  sdp::Status status = sdp::Status::kInaccurate;
};

/// Smallest certified bound for H(z) = sum_{k=1}^F taps[k-1] z^{-k}.
HinfBound certify_hinf_norm(const std::vector<Eigen::MatrixXd>& taps,
                            const sdp::SolverSettings& settings = {});

/// max over `samples` equispaced frequencies of sigma_max(H(e^{jw})).
double sampled_hinf_norm(const std::vector<Eigen::MatrixXd>& taps, int samples = 512);

/// Affine under-approximation of the post-exploration uncertainty matrix:
///   D_l(S) = D_1 + s (S^T S_nom + S_nom^T S - S_nom^T S_nom),  s = T_e / c_delta.
struct UncertaintyExpr {
  Eigen::MatrixXd D1;
  Eigen::MatrixXd stack_nom;
  double scale = 0.0;

  /// D_1 - s S_nom^T S_nom.
  Eigen::MatrixXd constant_part() const;
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& stack) const;
  sdp::AffineMatrix affine(const sdp::AffineMatrix& stack) const;
};

/// D_1 + (T_e / c_delta) S^T S.
Eigen::MatrixXd propagated_uncertainty(const Eigen::MatrixXd& D1, const Eigen::MatrixXd& stack, int T_e,
                                       double c_delta);

UncertaintyExpr linearized_uncertainty(const Eigen::MatrixXd& D1, const Eigen::MatrixXd& stack_nom, int T_e,
                                       double c_delta);

/// Adds [P, 0, S; 0, (1 - lambda) I, 0; S^T, 0, lambda D] >= 0 with an n_x
/// middle block, plus lambda >= 0 when lambda is a variable. Throws
/// ContractViolation when both lambda and D depend on program variables.
void add_robust_stability_lmi(sdp::ConicProgram& program, int n_x, const sdp::AffineMatrix& stack, int P,
                              const sdp::AffineScalar& lambda, const sdp::AffineMatrix& D,
                              const std::string& label = "robust");

/// Numerical value of that block matrix for concrete data.
Eigen::MatrixXd robust_lmi_value(int n_x, const Eigen::MatrixXd& stack, const Eigen::MatrixXd& P,
                                 double lambda, const Eigen::MatrixXd& D);

}  // namespace dualctl
