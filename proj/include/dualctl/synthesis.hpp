#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dualctl/fir.hpp"
#include "dualctl/identify.hpp"
#include "dualctl/lin_sys.hpp"
#include "dualctl/sdp.hpp"
#include "dualctl/sls.hpp"

namespace dualctl {

/// Solver diagnostics kept with every synthesis result.
struct SolveReport {
  sdp::Status status = sdp::Status::kInaccurate;
  int iterations = 0;
  double equality_residual = 0.0;
  double min_psd_eigenvalue = 0.0;
  std::string message;
};

struct SynthesisResult {
  FIRPair phi;
  double cost = 0.0;  // per-step H2 cost of phi on the model
  std::optional<double> lambda;
  std::optional<HinfCertificate> certificate;
  SolveReport solver;
  /// Set when the robust fallback had to inflate D; such results carry no
  /// robustness guarantee for the original model.
  bool heuristic = false;
  double d_scale = 1.0;
};

struct RobustOptions {
  sdp::SolverSettings solver;
  /// On infeasibility, retry with D multiplied by fallback_factor^i,
  /// i = 1..fallback_attempts, and label the result heuristic.
  bool fallback = false;
  double fallback_factor = 10.0;
  int fallback_attempts = 3;
};

/// min H2 cost over the nominal affine subspace of (A_hat, B_hat).
/// Throws Infeasible when the subspace is empty.
SynthesisResult nominal_synthesis(const Model& model, const CostWeights& weights, int F,
                                  const sdp::SolverSettings& settings = {});

/// Nominal problem plus the certificate that every model in the credibility
/// region is stabilized. Throws Infeasible when no certificate exists.
SynthesisResult robust_synthesis(const Model& model, const CostWeights& weights, int F,
                                 const RobustOptions& options = {});

struct GridPoint {
  double lambda2 = 0.0;
  double objective = 0.0;  // +inf when infeasible
  sdp::Status status = sdp::Status::kInfeasible;
  bool pruned = false;  // not solved: a larger lambda2 was already infeasible
};

struct DualPlan {
  FIRPair phi1;          // exploration policy
  FIRPair phi2_planned;  // planned exploitation policy (never executed)
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double cost1 = 0.0;  // H2 cost of phi1
  double cost2 = 0.0;  // H2 cost of phi2_planned
  double objective = 0.0;  // T_e cost1 + (T - T_e) cost2
  std::vector<GridPoint> table;  // ascending lambda2
  SolveReport solver;            // of the selected point
};

struct DualOptions {
  sdp::SolverSettings solver;
  /// Feasibility of the exploitation constraint grows with lambda2, so once a
  /// grid point is infeasible every smaller one is too.
  bool prune_infeasible = true;
  int jobs = 1;
};

/// 24 geometric points from 1e-3 to 1, plus lambda_nom, sorted and deduplicated.
std::vector<double> default_lambda2_grid(double lambda_nom);

/// Joint design of the exploration policy and the planned exploitation
/// policy, searching lambda2 over `grid`. `robust_nominal` is the robust
/// solution on the same model (the linearization point).
DualPlan dual_synthesis(const Model& model, const CostWeights& weights, int F, int T, int T_e,
                        const std::vector<double>& grid, const SynthesisResult& robust_nominal,
                        const DualOptions& options = {});

/// Same, solving the robust problem first.
DualPlan dual_synthesis(const Model& model, const CostWeights& weights, int F, int T, int T_e,
                        const std::vector<double>& grid, const DualOptions& options = {});

}  // namespace dualctl
