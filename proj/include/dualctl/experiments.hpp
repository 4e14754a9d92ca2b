#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dualctl/identify.hpp"
#include "dualctl/lin_sys.hpp"
#include "dualctl/synthesis.hpp"

namespace dualctl {

enum class Strategy { kNominal, kDual, kGreedy };
const char* to_string(Strategy s);
Strategy parse_strategy(const std::string& s);

struct ExperimentConfig {
  LTISystem true_system;
  CostWeights weights;
  double delta = 0.1;
  int T = 100;
  int T_e = 20;
  int F = 12;
  int n_init_rollouts = 10;
  int init_rollout_len = 6;
  /// Empty: the default grid plus the multiplier of each run's robust solve.
  std::vector<double> lambda2_grid;
  int mc_runs = 200;
  std::uint64_t master_seed = 1;
  /// Dual episodes whose mean exploration cost sets the greedy target.
  int pilot_runs = 50;
  /// Overrides the pilot estimate when set.
  std::optional<double> greedy_target;
  int jobs = 1;
  ChiSquareConvention convention = ChiSquareConvention::kCoverage;
  sdp::SolverSettings solver;
  bool prune_lambda2 = true;
  bool robust_fallback = false;

  /// Throws ValidationError naming the offending field.
  void validate() const;
};

/// Open-loop rollouts from x_0 = 0 with u_t ~ N(0, input_scale^2 I).
Dataset generate_initial_data(const LTISystem& sys, int n_rollouts, int rollout_len, std::uint64_t seed,
                              double input_scale = 1.0);

struct EpisodeResult {
  Strategy strategy = Strategy::kNominal;
  int run_id = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string failure_stage;  // identify0, synth1, tune, identify1, synth2
  std::string message;
  double explore_cost = 0.0;  // t in [1, T_e]
  double exploit_cost = 0.0;  // t in [T_e + 1, T]
  double total_cost = 0.0;
  sdp::Status phase2_resynth_status = sdp::Status::kInaccurate;
  double greedy_sigma = 0.0;
  double lambda2 = 0.0;
  Eigen::MatrixXd D_initial;  // uncertainty matrix from the initial data
  Eigen::MatrixXd D_updated;  // after adding the exploration data
};

/// Per-run quantities shared by all strategies.
struct RunContext {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string failure_stage;
  std::string message;
  Model model0;
  Dataset data0{1, 1};
  SynthesisResult robust0;
};

std::uint64_t run_seed(std::uint64_t master_seed, int run_id);

RunContext prepare_run(const ExperimentConfig& cfg, std::uint64_t seed);

/// Plays one strategy on the true system: phase 1 with the strategy's
/// policy, re-identification, phase 2 with the robust policy of the updated
/// model. Greedy needs `greedy_sigma`.
EpisodeResult run_episode(Strategy strategy, const ExperimentConfig& cfg, const RunContext& ctx,
                          double greedy_sigma = 0.0);
EpisodeResult run_episode(Strategy strategy, const ExperimentConfig& cfg, std::uint64_t seed);

struct GreedyTuning {
  double sigma = 0.0;
  bool below_floor = false;  // target under the sigma = 0 cost; sigma is 0
};

/// Bisection on sigma so that T_e * stationary cost = target (relative tol 1e-4).
GreedyTuning tune_greedy_sigma(const ExperimentConfig& cfg, const Eigen::MatrixXd& K_nominal, double target);
GreedyTuning tune_greedy_sigma(const ExperimentConfig& cfg, const FIRPair& phi_nominal, double target);

struct AggregateRow {
  Strategy strategy;
  std::string phase;  // explore, exploit, total
  double mean = 0.0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  int n = 0;
  int failures = 0;
};

struct NormalizedCosts {
  double explore = 0.0;
  double exploit = 0.0;
  double total = 0.0;
  bool valid = false;
};

struct MonteCarloResult {
  std::vector<EpisodeResult> episodes;      // run-major, strategies in enum order
  std::vector<NormalizedCosts> normalized;  // parallel to episodes
  std::vector<AggregateRow> aggregate;      // 3 strategies x 3 phases
  double greedy_target = 0.0;
  std::vector<std::string> warnings;
};

/// Runs every strategy on mc_runs paired runs. Throws Error when every
/// episode failed.
MonteCarloResult monte_carlo(const ExperimentConfig& cfg);

void write_results_csv(const MonteCarloResult& r, std::ostream& out);
void write_aggregate_csv(const MonteCarloResult& r, std::ostream& out);
void write_plot_data_csv(const MonteCarloResult& r, std::ostream& out);

/// Linear-interpolation quantile of unsorted data.
double quantile(std::vector<double> v, double p);

struct OneSidedTest {
  int n = 0;
  double mean = 0.0;
  double t = 0.0;
  double p_value = 1.0;  // for H1: mean < 0
};

/// One-sided one-sample t test on paired differences.
OneSidedTest paired_less_than_zero(const std::vector<double>& diffs);

}  // namespace dualctl
