#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dualctl/dualctl.h"

namespace {

struct Failure {
  dualctl_status status;
};

int exit_code(dualctl_status s) {
  switch (s) {
    case DUALCTL_OK: return 0;
    case DUALCTL_ERROR_VALIDATION:
    case DUALCTL_ERROR_CONTRACT:
    case DUALCTL_ERROR_IO: return 2;
    case DUALCTL_ERROR_UNDERDETERMINED: return 3;
    case DUALCTL_ERROR_INFEASIBLE: return 4;
    default: return 1;
  }
}

void check(dualctl_status s) {
  if (s == DUALCTL_OK) return;
  std::cerr << "dualctl: " << dualctl_status_name(s) << ": " << dualctl_last_error();
  const std::string field = dualctl_last_error_field();
  if (!field.empty()) std::cerr << " [field: " << field << "]";
  std::cerr << "\n";
  throw Failure{s};
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Config = std::unique_ptr<dualctl_config, Deleter<dualctl_config, dualctl_config_free>>;
using Dataset = std::unique_ptr<dualctl_dataset, Deleter<dualctl_dataset, dualctl_dataset_free>>;
using Model = std::unique_ptr<dualctl_model, Deleter<dualctl_model, dualctl_model_free>>;
using Synthesis = std::unique_ptr<dualctl_synthesis, Deleter<dualctl_synthesis, dualctl_synthesis_free>>;
using Experiment = std::unique_ptr<dualctl_experiment, Deleter<dualctl_experiment, dualctl_experiment_free>>;

struct Options {
  std::string config;
  std::string out;
  std::string data;
  std::string model;
  std::string mode = "robust";
  std::optional<std::string> seed;
  std::optional<int> jobs;
  std::optional<int> mc_runs;
  std::optional<std::string> lambda2_grid;
};

Config load_config(const Options& o) {
  dualctl_config* raw = nullptr;
  check(dualctl_config_load(o.config.c_str(), &raw));
  Config c(raw);
  if (o.seed) check(dualctl_config_set(c.get(), "master_seed", o.seed->c_str()));
  if (o.jobs) check(dualctl_config_set(c.get(), "jobs", std::to_string(*o.jobs).c_str()));
  if (o.mc_runs) check(dualctl_config_set(c.get(), "mc_runs", std::to_string(*o.mc_runs).c_str()));
  if (o.lambda2_grid) check(dualctl_config_set(c.get(), "lambda2_grid", o.lambda2_grid->c_str()));
  return c;
}

std::string out_or_stdout(const Options& o) { return o.out.empty() ? "/dev/stdout" : o.out; }

void generate_data(const Options& o) {
  Config c = load_config(o);
  dualctl_dataset* raw = nullptr;
  check(dualctl_generate_data(c.get(), &raw));
  Dataset d(raw);
  check(dualctl_dataset_save_csv(d.get(), out_or_stdout(o).c_str()));
  if (!o.out.empty()) std::cout << dualctl_dataset_num_pairs(d.get()) << " transitions written to " << o.out << "\n";
}

void identify(const Options& o) {
  Config c = load_config(o);
  dualctl_dataset* raw = nullptr;
  check(o.data.empty() ? dualctl_dataset_from_config(c.get(), &raw) : dualctl_dataset_load_csv(o.data.c_str(), &raw));
  Dataset d(raw);
  dualctl_model* m = nullptr;
  check(dualctl_identify(c.get(), d.get(), &m));
  Model model(m);
  check(dualctl_model_save(model.get(), out_or_stdout(o).c_str()));
}

void synth(const Options& o, dualctl_synth_mode mode) {
  Config c = load_config(o);
  dualctl_model* m = nullptr;
  check(o.model.empty() ? dualctl_model_from_config(c.get(), &m) : dualctl_model_load(o.model.c_str(), &m));
  Model model(m);
  dualctl_synthesis* s = nullptr;
  check(dualctl_synthesize(c.get(), model.get(), mode, &s));
  Synthesis syn(s);
  check(dualctl_synthesis_save(syn.get(), out_or_stdout(o).c_str()));
}

void experiment(const Options& o) {
  Config c = load_config(o);
  std::string dir = o.out;
  if (dir.empty()) {
    const char* env = std::getenv("DUALCTL_OUT_DIR");
    dir = env ? env : "results";
  }
  dualctl_experiment* e = nullptr;
  check(dualctl_experiment_run(c.get(), &e));
  Experiment ex(e);
  for (size_t i = 0; i < dualctl_experiment_num_warnings(ex.get()); ++i) {
    std::cerr << "warning: " << dualctl_experiment_warning(ex.get(), i) << "\n";
  }
  check(dualctl_experiment_write(ex.get(), dir.c_str()));
  std::printf("%-8s %-8s %10s %10s %5s %8s\n", "strategy", "phase", "mean", "median", "n", "failed");
  for (const char* strategy : {"nominal", "dual", "greedy"}) {
    for (const char* phase : {"explore", "exploit", "total"}) {
      double mean = 0, median = 0;
      int n = 0, failures = 0;
      check(dualctl_experiment_aggregate(ex.get(), strategy, phase, &mean, &median, &n, &failures));
      std::printf("%-8s %-8s %10.4f %10.4f %5d %8d\n", strategy, phase, mean, median, n, failures);
    }
  }
  std::cout << "results written to " << dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust and dual-control SLS synthesis for LQR"};
  app.set_version_flag("--version", std::string(dualctl_version()));
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* cmd) {
    cmd->add_option("--config,-c", o.config, "configuration file")->required();
    cmd->add_option("--seed", o.seed, "override master_seed");
  };

  auto* gen = app.add_subcommand("generate-data", "open-loop rollouts of the configured plant");
  common(gen);
  gen->add_option("--out,-o", o.out, "CSV output (default stdout)");

  auto* ident = app.add_subcommand("identify", "least-squares model and credibility region");
  common(ident);
  ident->add_option("--data,-d", o.data, "transition CSV (default: `data` key)");
  ident->add_option("--out,-o", o.out, "model output (default stdout)");

  auto* syn = app.add_subcommand("synth", "nominal, robust or dual controller synthesis");
  common(syn);
  syn->add_option("--mode,-m", o.mode, "nominal | robust | dual")
      ->check(CLI::IsMember({"nominal", "robust", "dual"}));
  syn->add_option("--model", o.model, "model file (default: `model` key or inline model)");
  syn->add_option("--lambda2-grid", o.lambda2_grid, "dual grid, e.g. [0.1, 0.5, 1]");
  syn->add_option("--jobs,-j", o.jobs, "threads for the dual grid search");
  syn->add_option("--out,-o", o.out, "report output (default stdout)");

  auto* plan = app.add_subcommand("dual-plan", "same as synth --mode dual");
  common(plan);
  plan->add_option("--model", o.model, "model file (default: `model` key or inline model)");
  plan->add_option("--lambda2-grid", o.lambda2_grid, "dual grid, e.g. [0.1, 0.5, 1]");
  plan->add_option("--jobs,-j", o.jobs, "threads for the dual grid search");
  plan->add_option("--out,-o", o.out, "report output (default stdout)");

  auto* exp = app.add_subcommand("experiment", "Monte Carlo comparison of nominal, dual and greedy");
  common(exp);
  exp->add_option("--out,-o", o.out, "output directory (default $DUALCTL_OUT_DIR or ./results)");
  exp->add_option("--jobs,-j", o.jobs, "worker threads");
  exp->add_option("--mc-runs", o.mc_runs, "number of runs");
  exp->add_option("--lambda2-grid", o.lambda2_grid, "dual grid, e.g. [0.1, 0.5, 1]");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) generate_data(o);
    if (ident->parsed()) identify(o);
    if (syn->parsed()) {
      synth(o, o.mode == "nominal" ? DUALCTL_SYNTH_NOMINAL
               : o.mode == "dual"  ? DUALCTL_SYNTH_DUAL
                                   : DUALCTL_SYNTH_ROBUST);
    }
    if (plan->parsed()) synth(o, DUALCTL_SYNTH_DUAL);
    if (exp->parsed()) experiment(o);
  } catch (const Failure& f) {
    return exit_code(f.status);
  }
  return 0;
}
