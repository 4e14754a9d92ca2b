#pragma once

#include <iosfwd>
#include <string>

#include "dualctl/experiments.hpp"
#include "dualctl/identify.hpp"
#include "dualctl/synthesis.hpp"
#include "dualctl/text_format.hpp"

namespace dualctl {

/// Settings read from a configuration document. Only the keys a command
/// needs are required; the rest keep their defaults.
///
/// Plant: A, B, sigma_w. Cost: Q, R. Identification: delta, chi_square
/// (coverage | literal). Horizons: T, T_e, F. Protocol: n_init_rollouts,
/// init_rollout_len, mc_runs, master_seed, pilot_runs, greedy_target,
/// lambda2_grid (bracket list or `default`), jobs, prune_lambda2,
/// robust_fallback. Solver: solver.feas_tol, solver.gap_tol,
/// solver.max_iterations. Paths: data, model (relative to the document).
/// Inline model: A_hat, B_hat, D, c_delta. Keys starting with `manifest.`
/// are ignored.
class ToolConfig {
 public:
  ToolConfig() = default;
  explicit ToolConfig(KeyValueDoc doc, std::string base_dir = ".");

  static ToolConfig load(const std::string& path);

  const KeyValueDoc& doc() const { return doc_; }
  KeyValueDoc& doc() { return doc_; }
  /// Resolves a path relative to the directory of the loaded document.
  std::string resolve(const std::string& path) const;

  /// Rejects unknown keys.
  void check_keys() const;

  double delta() const;
  double sigma_w() const;
  ChiSquareConvention convention() const;
  CostWeights weights() const;
  sdp::SolverSettings solver() const;
  RobustOptions robust_options() const;
  DualOptions dual_options() const;
  /// Empty when `lambda2_grid` is absent or `default`.
  std::vector<double> lambda2_grid() const;

  LTISystem plant() const;
  std::uint64_t master_seed() const;

  /// Every experiment field; the plant, weights, delta, T, T_e and F are
  /// required. Validated.
  ExperimentConfig experiment() const;

  bool has_inline_model() const;
  Model inline_model() const;

 private:
  KeyValueDoc doc_;
  std::string base_dir_ = ".";
};

/// Model files are configuration documents with keys A_hat, B_hat, D,
/// delta, sigma_w, c_delta; doubles are written so that they reload exactly.
void write_model(const Model& model, std::ostream& out);
Model read_model(const KeyValueDoc& doc);
Model load_model(const std::string& path);

/// Human- and machine-readable synthesis reports in the same format.
void write_synthesis_report(const std::string& mode, const SynthesisResult& result, const Model& model,
                            std::ostream& out);
void write_dual_report(const DualPlan& plan, const Model& model, int T, int T_e, std::ostream& out);

}  // namespace dualctl
