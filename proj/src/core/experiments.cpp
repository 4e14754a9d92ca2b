#include "dualctl/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <ostream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "dualctl/error.hpp"
#include "dualctl/text_format.hpp"

namespace dualctl {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kExploreStream = 2;
constexpr std::uint64_t kExploitStream = 3;
constexpr std::uint64_t kExciteStream = 4;

const Strategy kStrategies[] = {Strategy::kNominal, Strategy::kDual, Strategy::kGreedy};
const char* const kPhases[] = {"explore", "exploit", "total"};

bool is_psd(const Eigen::MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -1e-10 * std::max(1.0, M.cwiseAbs().maxCoeff());
}

template <typename Fn>
void parallel_for(int n, int jobs, Fn&& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::kNominal: return "nominal";
    case Strategy::kDual: return "dual";
    case Strategy::kGreedy: return "greedy";
  }
  return "unknown";
}

Strategy parse_strategy(const std::string& s) {
  if (s == "nominal") return Strategy::kNominal;
  if (s == "dual") return Strategy::kDual;
  if (s == "greedy") return Strategy::kGreedy;
  throw ValidationError("strategy", "unknown strategy '" + s + "'");
}

void ExperimentConfig::validate() const {
  if (T < 2) throw ValidationError("T", "must be at least 2");
  if (T_e < 1 || T_e >= T) throw ValidationError("T_e", "must satisfy 1 <= T_e < T");
  if (F < 1) throw ValidationError("F", "must be at least 1");
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("delta", "must lie in (0, 1)");
  if (mc_runs < 1) throw ValidationError("mc_runs", "must be at least 1");
  if (n_init_rollouts < 1) throw ValidationError("n_init_rollouts", "must be at least 1");
  if (init_rollout_len < 2) throw ValidationError("init_rollout_len", "must be at least 2");
  if (pilot_runs < 1) throw ValidationError("pilot_runs", "must be at least 1");
  if (jobs < 1) throw ValidationError("jobs", "must be at least 1");
  for (double l : lambda2_grid) {
    if (!(l > 0.0 && l <= 1.0)) throw ValidationError("lambda2_grid", "values must lie in (0, 1]");
  }
  const int nx = true_system.n_x(), nu = true_system.n_u();
  if (weights.Q.rows() != nx) throw ValidationError("Q", "must be n_x by n_x");
  if (weights.R.rows() != nu) throw ValidationError("R", "must be n_u by n_u");
  if (!is_psd(weights.Q)) throw ValidationError("Q", "must be positive semidefinite");
  if (!is_psd(weights.R)) throw ValidationError("R", "must be positive semidefinite");
  if (!(true_system.sigma_w > 0.0)) throw ValidationError("sigma_w", "must be positive");
}

Dataset generate_initial_data(const LTISystem& sys, int n_rollouts, int rollout_len, std::uint64_t seed,
                              double input_scale) {
  if (rollout_len < 2) throw ContractViolation("generate_initial_data: rollout_len must be >= 2");
  Dataset data(sys.n_x(), sys.n_u());
  for (int i = 0; i < n_rollouts; ++i) {
    const auto id = static_cast<std::uint64_t>(i);
    WhiteInputController input(sys.n_x(), sys.n_u(), input_scale, GaussianStream(derive_seed({seed, id, 0})));
    data.add_rollout(simulate(sys, input, rollout_len, derive_seed({seed, id, 1})));
  }
  return data;
}

std::uint64_t run_seed(std::uint64_t master_seed, int run_id) {
  return derive_seed({master_seed, static_cast<std::uint64_t>(run_id)});
}

namespace {

RobustOptions robust_options(const ExperimentConfig& cfg) {
  RobustOptions o;
  o.solver = cfg.solver;
  o.fallback = cfg.robust_fallback;
  return o;
}

}  // namespace

RunContext prepare_run(const ExperimentConfig& cfg, std::uint64_t seed) {
  RunContext ctx;
  ctx.seed = seed;
  ctx.data0 = generate_initial_data(cfg.true_system, cfg.n_init_rollouts, cfg.init_rollout_len,
                                    derive_seed({seed, kInitStream}));
  try {
    ctx.model0 = build_model(ctx.data0, cfg.true_system.sigma_w, cfg.delta, cfg.convention);
  } catch (const Error& e) {
    ctx.failure_stage = "identify0";
    ctx.message = e.what();
    return ctx;
  }
  try {
    ctx.robust0 = robust_synthesis(ctx.model0, cfg.weights, cfg.F, robust_options(cfg));
  } catch (const Error& e) {
    ctx.failure_stage = "synth1";
    ctx.message = e.what();
    return ctx;
  }
  ctx.ok = true;
  return ctx;
}

EpisodeResult run_episode(Strategy strategy, const ExperimentConfig& cfg, const RunContext& ctx,
                          double greedy_sigma) {
  EpisodeResult res;
  res.strategy = strategy;
  res.seed = ctx.seed;
  res.greedy_sigma = strategy == Strategy::kGreedy ? greedy_sigma : 0.0;
  auto fail = [&](const std::string& stage, const std::string& msg) {
    res.failed = true;
    res.failure_stage = stage;
    res.message = msg;
    res.explore_cost = res.exploit_cost = res.total_cost = std::numeric_limits<double>::quiet_NaN();
    return res;
  };
  if (!ctx.ok) return fail(ctx.failure_stage, ctx.message);
  res.D_initial = ctx.model0.D;
  const LTISystem& sys = cfg.true_system;

  std::unique_ptr<Controller> policy;
  try {
    switch (strategy) {
      case Strategy::kNominal:
        policy = std::make_unique<SLSController>(realize_controller(ctx.robust0.phi));
        break;
      case Strategy::kDual: {
        DualOptions o;
        o.solver = cfg.solver;
        o.prune_infeasible = cfg.prune_lambda2;
        const std::vector<double> grid =
            cfg.lambda2_grid.empty() ? default_lambda2_grid(ctx.robust0.lambda.value_or(1.0)) : cfg.lambda2_grid;
        const DualPlan plan = dual_synthesis(ctx.model0, cfg.weights, cfg.F, cfg.T, cfg.T_e, grid, ctx.robust0, o);
        res.lambda2 = plan.lambda2;
        policy = std::make_unique<SLSController>(realize_controller(plan.phi1));
        break;
      }
      case Strategy::kGreedy:
        policy = std::make_unique<ExcitedController>(
            std::make_unique<SLSController>(realize_controller(ctx.robust0.phi)), greedy_sigma,
            GaussianStream(derive_seed({ctx.seed, kExciteStream})));
        break;
    }
  } catch (const Error& e) {
    return fail("synth1", e.what());
  }

  // Phase 1 from x_0 = 0.
  GaussianStream explore_noise(derive_seed({ctx.seed, kExploreStream}));
  const Eigen::VectorXd x1 = sys.sigma_w * explore_noise.vector(sys.n_x());
  const Rollout phase1 = rollout(sys, *policy, x1, cfg.T_e, explore_noise);
  res.explore_cost = evaluate_cost(phase1.traj, cfg.weights, 1, cfg.T_e);

  Dataset explore_data(sys.n_x(), sys.n_u());
  explore_data.add_rollout(phase1.traj);
  Model model1;
  try {
    model1 = build_model(merge(ctx.data0, explore_data), sys.sigma_w, cfg.delta, cfg.convention);
  } catch (const Error& e) {
    return fail("identify1", e.what());
  }
  res.D_updated = model1.D;

  SynthesisResult phi2;
  try {
    phi2 = robust_synthesis(model1, cfg.weights, cfg.F, robust_options(cfg));
  } catch (const Error& e) {
    res.phase2_resynth_status = sdp::Status::kInfeasible;
    return fail("synth2", e.what());
  }
  res.phase2_resynth_status = phi2.solver.status;

  // Phase 2 continues the same state trajectory with fresh controller memory.
  GaussianStream exploit_noise(derive_seed({ctx.seed, kExploitStream}));
  const Eigen::VectorXd x_next = phase1.drift + sys.sigma_w * exploit_noise.vector(sys.n_x());
  SLSController policy2 = realize_controller(phi2.phi);
  const Rollout phase2 = rollout(sys, policy2, x_next, cfg.T - cfg.T_e, exploit_noise);
  res.exploit_cost = evaluate_cost(phase2.traj, cfg.weights, 1, cfg.T - cfg.T_e);
  res.total_cost = res.explore_cost + res.exploit_cost;
  return res;
}

EpisodeResult run_episode(Strategy strategy, const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (strategy == Strategy::kGreedy && !cfg.greedy_target) {
    throw ContractViolation("run_episode: greedy needs cfg.greedy_target");
  }
  RunContext ctx = prepare_run(cfg, seed);
  double sigma = 0.0;
  if (strategy == Strategy::kGreedy && ctx.ok) {
    try {
      sigma = tune_greedy_sigma(cfg, ctx.robust0.phi, *cfg.greedy_target).sigma;
    } catch (const Error& e) {
      ctx.ok = false;
      ctx.failure_stage = "tune";
      ctx.message = e.what();
    }
  }
  return run_episode(strategy, cfg, ctx, sigma);
}

namespace {

template <typename CostFn>
GreedyTuning bisect_sigma(const ExperimentConfig& cfg, double target, CostFn&& cost_of) {
  const double T_e = cfg.T_e;
  GreedyTuning out;
  const double floor = T_e * cost_of(0.0);
  if (target <= floor) {
    out.below_floor = target < floor;
    return out;
  }
  double hi = 1.0;
  for (int i = 0; i < 200 && T_e * cost_of(hi) < target; ++i) hi *= 2.0;
  double lo = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double c = T_e * cost_of(mid);
    if (std::abs(c - target) <= 1e-4 * target) return {mid, false};
    (c < target ? lo : hi) = mid;
  }
  out.sigma = 0.5 * (lo + hi);
  return out;
}

}  // namespace

GreedyTuning tune_greedy_sigma(const ExperimentConfig& cfg, const Eigen::MatrixXd& K_nominal, double target) {
  return bisect_sigma(cfg, target, [&](double s) {
    return stationary_cost_with_excitation(cfg.true_system, K_nominal, s, cfg.weights);
  });
}

GreedyTuning tune_greedy_sigma(const ExperimentConfig& cfg, const FIRPair& phi_nominal, double target) {
  return bisect_sigma(cfg, target, [&](double s) {
    return stationary_cost_with_excitation(cfg.true_system, phi_nominal, s, cfg.weights);
  });
}

double quantile(std::vector<double> v, double p) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double h = p * (static_cast<double>(v.size()) - 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

MonteCarloResult monte_carlo(const ExperimentConfig& cfg) {
  cfg.validate();
  const int runs = cfg.mc_runs;
  MonteCarloResult out;
  out.episodes.resize(static_cast<std::size_t>(runs) * 3);
  std::vector<RunContext> contexts(runs);

  // Nominal and dual first; the dual pilot sets the greedy target.
  parallel_for(runs, cfg.jobs, [&](int r) {
    contexts[r] = prepare_run(cfg, run_seed(cfg.master_seed, r));
    for (int s = 0; s < 2; ++s) {
      EpisodeResult e = run_episode(kStrategies[s], cfg, contexts[r]);
      e.run_id = r;
      out.episodes[static_cast<std::size_t>(r) * 3 + s] = std::move(e);
    }
  });

  if (cfg.greedy_target) {
    out.greedy_target = *cfg.greedy_target;
  } else {
    double sum = 0.0;
    int n = 0;
    for (int r = 0; r < std::min(runs, cfg.pilot_runs); ++r) {
      const EpisodeResult& d = out.episodes[static_cast<std::size_t>(r) * 3 + 1];
      if (!d.failed) {
        sum += d.explore_cost;
        ++n;
      }
    }
    out.greedy_target = n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
    if (n == 0) out.warnings.push_back("no successful dual pilot episode; greedy runs fail");
  }

  std::vector<std::string> tune_warnings(runs);
  parallel_for(runs, cfg.jobs, [&](int r) {
    RunContext ctx = contexts[r];
    double sigma = 0.0;
    if (ctx.ok) {
      if (!std::isfinite(out.greedy_target)) {
        ctx.ok = false;
        ctx.failure_stage = "tune";
        ctx.message = "no greedy target";
      } else {
        try {
          const GreedyTuning g = tune_greedy_sigma(cfg, ctx.robust0.phi, out.greedy_target);
          sigma = g.sigma;
          if (g.below_floor) {
            tune_warnings[r] = "run " + std::to_string(r) +
                               ": greedy target below the unexcited nominal cost, sigma set to 0";
          }
        } catch (const Error& e) {
          ctx.ok = false;
          ctx.failure_stage = "tune";
          ctx.message = e.what();
        }
      }
    }
    EpisodeResult e = run_episode(Strategy::kGreedy, cfg, ctx, sigma);
    e.run_id = r;
    out.episodes[static_cast<std::size_t>(r) * 3 + 2] = std::move(e);
  });
  for (auto& w : tune_warnings)
    if (!w.empty()) out.warnings.push_back(w);

  out.normalized.resize(out.episodes.size());
  for (int r = 0; r < runs; ++r) {
    const EpisodeResult& nom = out.episodes[static_cast<std::size_t>(r) * 3];
    for (int s = 0; s < 3; ++s) {
      const std::size_t i = static_cast<std::size_t>(r) * 3 + s;
      const EpisodeResult& e = out.episodes[i];
      NormalizedCosts& n = out.normalized[i];
      if (e.failed || nom.failed) continue;
      n.explore = e.explore_cost / nom.explore_cost;
      n.exploit = e.exploit_cost / nom.exploit_cost;
      n.total = e.total_cost / nom.total_cost;
      n.valid = std::isfinite(n.explore) && std::isfinite(n.exploit) && std::isfinite(n.total);
    }
  }

  bool any_ok = false;
  for (const auto& e : out.episodes) any_ok = any_ok || !e.failed;
  if (!any_ok) throw Error("monte carlo: every episode failed");

  for (int s = 0; s < 3; ++s) {
    for (int ph = 0; ph < 3; ++ph) {
      std::vector<double> vals;
      for (int r = 0; r < runs; ++r) {
        const NormalizedCosts& n = out.normalized[static_cast<std::size_t>(r) * 3 + s];
        if (!n.valid) continue;
        vals.push_back(ph == 0 ? n.explore : ph == 1 ? n.exploit : n.total);
      }
      AggregateRow row;
      row.strategy = kStrategies[s];
      row.phase = kPhases[ph];
      row.n = static_cast<int>(vals.size());
      row.failures = runs - row.n;
      if (!vals.empty()) {
        double sum = 0.0;
        for (double v : vals) sum += v;
        row.mean = sum / static_cast<double>(vals.size());
        row.median = quantile(vals, 0.5);
        row.q25 = quantile(vals, 0.25);
        row.q75 = quantile(vals, 0.75);
      } else {
        row.mean = row.median = row.q25 = row.q75 = std::numeric_limits<double>::quiet_NaN();
      }
      out.aggregate.push_back(row);
    }
  }
  return out;
}

void write_results_csv(const MonteCarloResult& r, std::ostream& out) {
  out << "run_id,strategy,explore_cost,exploit_cost,total_cost,norm_explore,norm_exploit,norm_total,status,seed\n";
  for (std::size_t i = 0; i < r.episodes.size(); ++i) {
    const EpisodeResult& e = r.episodes[i];
    const NormalizedCosts& n = r.normalized[i];
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out << e.run_id << ',' << to_string(e.strategy) << ',' << format_double(e.explore_cost) << ','
        << format_double(e.exploit_cost) << ',' << format_double(e.total_cost) << ','
        << format_double(n.valid ? n.explore : nan) << ',' << format_double(n.valid ? n.exploit : nan) << ','
        << format_double(n.valid ? n.total : nan) << ',' << (e.failed ? "failed:" + e.failure_stage : "ok") << ','
        << e.seed << '\n';
  }
}

void write_aggregate_csv(const MonteCarloResult& r, std::ostream& out) {
  out << "strategy,phase,mean,median,q25,q75,n,failures\n";
  for (const AggregateRow& a : r.aggregate) {
    out << to_string(a.strategy) << ',' << a.phase << ',' << format_double(a.mean) << ','
        << format_double(a.median) << ',' << format_double(a.q25) << ',' << format_double(a.q75) << ',' << a.n
        << ',' << a.failures << '\n';
  }
}

void write_plot_data_csv(const MonteCarloResult& r, std::ostream& out) {
  out << "panel,strategy,run_id,normalized_cost\n";
  for (int ph = 0; ph < 3; ++ph) {
    for (std::size_t i = 0; i < r.episodes.size(); ++i) {
      const NormalizedCosts& n = r.normalized[i];
      if (!n.valid) continue;
      const double v = ph == 0 ? n.explore : ph == 1 ? n.exploit : n.total;
      out << kPhases[ph] << ',' << to_string(r.episodes[i].strategy) << ',' << r.episodes[i].run_id << ','
          << format_double(v) << '\n';
    }
  }
}

OneSidedTest paired_less_than_zero(const std::vector<double>& diffs) {
  OneSidedTest t;
  t.n = static_cast<int>(diffs.size());
  if (t.n < 2) return t;
  double sum = 0.0;
  for (double d : diffs) sum += d;
  t.mean = sum / t.n;
  double ss = 0.0;
  for (double d : diffs) ss += (d - t.mean) * (d - t.mean);
  const double sd = std::sqrt(ss / (t.n - 1));
  if (sd == 0.0) {
    t.t = t.mean < 0 ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
    t.p_value = t.mean < 0 ? 0.0 : 1.0;
    return t;
  }
  t.t = t.mean / (sd / std::sqrt(static_cast<double>(t.n)));
  boost::math::students_t dist(t.n - 1);
  t.p_value = boost::math::cdf(dist, t.t);
  return t;
}

}  // namespace dualctl
