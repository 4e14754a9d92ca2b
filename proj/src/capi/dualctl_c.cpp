#include "dualctl/dualctl.h"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <variant>

#include "dualctl/error.hpp"
#include "dualctl/experiments.hpp"
#include "dualctl/io.hpp"

using namespace dualctl;

struct dualctl_config {
  ToolConfig cfg;
};

struct dualctl_dataset {
  Dataset data;
};

struct dualctl_model {
  Model model;
};

struct dualctl_synthesis {
  std::string mode;
  Model model;
  std::variant<SynthesisResult, DualPlan> result;
  int T = 0;
  int T_e = 0;
};

struct dualctl_experiment {
  KeyValueDoc config_snapshot;
  MonteCarloResult result;
  std::string started;
  std::string finished;
  double seconds = 0.0;
  std::uint64_t master_seed = 0;
};

namespace {

constexpr const char* kVersion = "0.1.0";

thread_local std::string last_error;
thread_local std::string last_field;

dualctl_status fail(dualctl_status s, const std::string& msg, const std::string& field = "") {
  last_error = msg;
  last_field = field;
  return s;
}

template <typename Fn>
dualctl_status guarded(Fn&& fn) {
  last_error.clear();
  last_field.clear();
  try {
    fn();
    return DUALCTL_OK;
  } catch (const ValidationError& e) {
    return fail(DUALCTL_ERROR_VALIDATION, e.what(), e.field());
  } catch (const UnderdeterminedData& e) {
    return fail(DUALCTL_ERROR_UNDERDETERMINED, e.what());
  } catch (const Infeasible& e) {
    return fail(DUALCTL_ERROR_INFEASIBLE, e.what());
  } catch (const Instability& e) {
    return fail(DUALCTL_ERROR_INSTABILITY, e.what());
  } catch (const InvalidResponse& e) {
    return fail(DUALCTL_ERROR_INVALID_RESPONSE, e.what());
  } catch (const ContractViolation& e) {
    return fail(DUALCTL_ERROR_CONTRACT, e.what());
  } catch (const Error& e) {
    // Library-level aggregate failures (every episode failed).
    return fail(DUALCTL_ERROR_INFEASIBLE, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(DUALCTL_ERROR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(DUALCTL_ERROR_INTERNAL, e.what());
  } catch (...) {
    return fail(DUALCTL_ERROR_INTERNAL, "unknown error");
  }
}

template <typename T>
void require(const T* p, const char* what) {
  if (p == nullptr) throw ContractViolation(std::string(what) + " must not be null");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::filesystem::filesystem_error("cannot write", path, std::make_error_code(std::errc::io_error));
  return out;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void check_weights(const CostWeights& w, const Model& m) {
  if (w.Q.rows() != m.n_x()) throw ValidationError("Q", "must be n_x by n_x for the model");
  if (w.R.rows() != m.n_u()) throw ValidationError("R", "must be n_u by n_u for the model");
}

}  // namespace

extern "C" {

const char* dualctl_version(void) { return kVersion; }

const char* dualctl_status_name(dualctl_status status) {
  switch (status) {
    case DUALCTL_OK: return "ok";
    case DUALCTL_ERROR_INTERNAL: return "internal error";
    case DUALCTL_ERROR_VALIDATION: return "validation error";
    case DUALCTL_ERROR_UNDERDETERMINED: return "underdetermined data";
    case DUALCTL_ERROR_INFEASIBLE: return "infeasible";
    case DUALCTL_ERROR_INSTABILITY: return "instability";
    case DUALCTL_ERROR_INVALID_RESPONSE: return "invalid response";
    case DUALCTL_ERROR_CONTRACT: return "contract violation";
    case DUALCTL_ERROR_IO: return "i/o error";
  }
  return "unknown status";
}

const char* dualctl_last_error(void) { return last_error.c_str(); }

const char* dualctl_last_error_field(void) { return last_field.c_str(); }

dualctl_status dualctl_config_load(const char* path, dualctl_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new dualctl_config{ToolConfig::load(path)};
  });
}

dualctl_status dualctl_config_parse(const char* text, dualctl_config** out) {
  return guarded([&] {
    require(text, "text");
    require(out, "out");
    std::istringstream in(text);
    *out = new dualctl_config{ToolConfig(KeyValueDoc::parse(in))};
  });
}

dualctl_status dualctl_config_set(dualctl_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    config->cfg.doc().set(key, value);
  });
}

dualctl_status dualctl_config_save(const dualctl_config* config, const char* path) {
  return guarded([&] {
    require(config, "config");
    require(path, "path");
    std::ofstream out = open_out(path);
    config->cfg.doc().write(out);
  });
}

dualctl_status dualctl_config_validate(const dualctl_config* config) {
  return guarded([&] {
    require(config, "config");
    (void)config->cfg.experiment();
  });
}

void dualctl_config_free(dualctl_config* config) { delete config; }

dualctl_status dualctl_generate_data(const dualctl_config* config, dualctl_dataset** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    const ToolConfig& c = config->cfg;
    c.check_keys();
    const KeyValueDoc& doc = c.doc();
    ExperimentConfig d;
    const int n = doc.has("n_init_rollouts") ? static_cast<int>(doc.get_int("n_init_rollouts")) : d.n_init_rollouts;
    const int len = doc.has("init_rollout_len") ? static_cast<int>(doc.get_int("init_rollout_len")) : d.init_rollout_len;
    if (n < 1) throw ValidationError("n_init_rollouts", "must be at least 1");
    if (len < 2) throw ValidationError("init_rollout_len", "must be at least 2");
    *out = new dualctl_dataset{generate_initial_data(c.plant(), n, len, c.master_seed())};
  });
}

dualctl_status dualctl_dataset_load_csv(const char* path, dualctl_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    std::ifstream in(path);
    if (!in) throw ValidationError("data", std::string("cannot open '") + path + "'");
    *out = new dualctl_dataset{read_dataset_csv(in)};
  });
}

dualctl_status dualctl_dataset_from_config(const dualctl_config* config, dualctl_dataset** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    const ToolConfig& c = config->cfg;
    const std::string path = c.resolve(c.doc().get_string("data"));
    std::ifstream in(path);
    if (!in) throw ValidationError("data", "cannot open '" + path + "'");
    *out = new dualctl_dataset{read_dataset_csv(in)};
  });
}

dualctl_status dualctl_dataset_save_csv(const dualctl_dataset* data, const char* path) {
  return guarded([&] {
    require(data, "data");
    require(path, "path");
    std::ofstream out = open_out(path);
    write_dataset_csv(data->data, out);
  });
}

int dualctl_dataset_num_pairs(const dualctl_dataset* data) { return data ? data->data.num_pairs() : -1; }

void dualctl_dataset_free(dualctl_dataset* data) { delete data; }

dualctl_status dualctl_identify(const dualctl_config* config, const dualctl_dataset* data, dualctl_model** out) {
  return guarded([&] {
    require(config, "config");
    require(data, "data");
    require(out, "out");
    config->cfg.check_keys();
    const ToolConfig& c = config->cfg;
    *out = new dualctl_model{build_model(data->data, c.sigma_w(), c.delta(), c.convention())};
  });
}

dualctl_status dualctl_model_load(const char* path, dualctl_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new dualctl_model{load_model(path)};
  });
}

dualctl_status dualctl_model_from_config(const dualctl_config* config, dualctl_model** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    const ToolConfig& c = config->cfg;
    if (c.doc().has("model")) {
      *out = new dualctl_model{load_model(c.resolve(c.doc().get_string("model")))};
    } else if (c.has_inline_model()) {
      *out = new dualctl_model{c.inline_model()};
    } else {
      throw ValidationError("model", "no model file and no inline A_hat/B_hat/D");
    }
  });
}

dualctl_status dualctl_model_save(const dualctl_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    std::ofstream out = open_out(path);
    write_model(model->model, out);
  });
}

dualctl_status dualctl_model_dims(const dualctl_model* model, int* n_x, int* n_u) {
  return guarded([&] {
    require(model, "model");
    if (n_x) *n_x = model->model.n_x();
    if (n_u) *n_u = model->model.n_u();
  });
}

dualctl_status dualctl_model_matrices(const dualctl_model* model, double* A_hat, double* B_hat, double* D) {
  return guarded([&] {
    require(model, "model");
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Model& m = model->model;
    if (A_hat) Eigen::Map<RowMajor>(A_hat, m.n_x(), m.n_x()) = m.A_hat;
    if (B_hat) Eigen::Map<RowMajor>(B_hat, m.n_x(), m.n_u()) = m.B_hat;
    if (D) Eigen::Map<RowMajor>(D, m.n_x() + m.n_u(), m.n_x() + m.n_u()) = m.D;
  });
}

void dualctl_model_free(dualctl_model* model) { delete model; }

dualctl_status dualctl_synthesize(const dualctl_config* config, const dualctl_model* model, dualctl_synth_mode mode,
                                  dualctl_synthesis** out) {
  return guarded([&] {
    require(config, "config");
    require(model, "model");
    require(out, "out");
    const ToolConfig& c = config->cfg;
    c.check_keys();
    const Model& m = model->model;
    const CostWeights w = c.weights();
    check_weights(w, m);
    const int F = static_cast<int>(c.doc().get_int("F"));
    if (F < 1) throw ValidationError("F", "must be at least 1");
    auto s = std::make_unique<dualctl_synthesis>();
    s->model = m;
    switch (mode) {
      case DUALCTL_SYNTH_NOMINAL:
        s->mode = "nominal";
        s->result = nominal_synthesis(m, w, F, c.solver());
        break;
      case DUALCTL_SYNTH_ROBUST:
        s->mode = "robust";
        s->result = robust_synthesis(m, w, F, c.robust_options());
        break;
      case DUALCTL_SYNTH_DUAL: {
        s->mode = "dual";
        s->T = static_cast<int>(c.doc().get_int("T"));
        s->T_e = static_cast<int>(c.doc().get_int("T_e"));
        if (s->T < 2) throw ValidationError("T", "must be at least 2");
        if (s->T_e < 1 || s->T_e >= s->T) throw ValidationError("T_e", "must satisfy 1 <= T_e < T");
        std::vector<double> grid = c.lambda2_grid();
        const SynthesisResult nominal = robust_synthesis(m, w, F, c.robust_options());
        if (grid.empty()) grid = default_lambda2_grid(nominal.lambda.value_or(1.0));
        s->result = dual_synthesis(m, w, F, s->T, s->T_e, grid, nominal, c.dual_options());
        break;
      }
      default:
        throw ContractViolation("unknown synthesis mode");
    }
    *out = s.release();
  });
}

double dualctl_synthesis_objective(const dualctl_synthesis* synthesis) {
  if (!synthesis) return std::numeric_limits<double>::quiet_NaN();
  if (const auto* r = std::get_if<SynthesisResult>(&synthesis->result)) return r->cost;
  return std::get<DualPlan>(synthesis->result).objective;
}

double dualctl_synthesis_lambda(const dualctl_synthesis* synthesis) {
  if (!synthesis) return -1.0;
  if (const auto* r = std::get_if<SynthesisResult>(&synthesis->result)) return r->lambda.value_or(-1.0);
  return std::get<DualPlan>(synthesis->result).lambda2;
}

dualctl_status dualctl_synthesis_save(const dualctl_synthesis* synthesis, const char* path) {
  return guarded([&] {
    require(synthesis, "synthesis");
    require(path, "path");
    std::ofstream out = open_out(path);
    if (const auto* r = std::get_if<SynthesisResult>(&synthesis->result)) {
      write_synthesis_report(synthesis->mode, *r, synthesis->model, out);
    } else {
      write_dual_report(std::get<DualPlan>(synthesis->result), synthesis->model, synthesis->T, synthesis->T_e, out);
    }
  });
}

void dualctl_synthesis_free(dualctl_synthesis* synthesis) { delete synthesis; }

dualctl_status dualctl_experiment_run(const dualctl_config* config, dualctl_experiment** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    const ExperimentConfig c = config->cfg.experiment();
    auto e = std::make_unique<dualctl_experiment>();
    for (const auto& [k, v] : config->cfg.doc().entries()) {
      if (k.rfind("manifest.", 0) != 0) e->config_snapshot.set(k, v);
    }
    e->master_seed = c.master_seed;
    e->started = utc_now();
    const auto t0 = std::chrono::steady_clock::now();
    e->result = monte_carlo(c);
    e->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    e->finished = utc_now();
    *out = e.release();
  });
}

dualctl_status dualctl_experiment_write(const dualctl_experiment* experiment, const char* out_dir) {
  return guarded([&] {
    require(experiment, "experiment");
    require(out_dir, "out_dir");
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    const MonteCarloResult& r = experiment->result;
    {
      std::ofstream out = open_out((dir / "results.csv").string());
      write_results_csv(r, out);
    }
    {
      std::ofstream out = open_out((dir / "aggregate.csv").string());
      write_aggregate_csv(r, out);
    }
    {
      std::ofstream out = open_out((dir / "plot_data.csv").string());
      write_plot_data_csv(r, out);
    }

    KeyValueDoc manifest = experiment->config_snapshot;
    manifest.set("manifest.tool", "dualctl");
    manifest.set("manifest.tool_version", kVersion);
    manifest.set("manifest.started", experiment->started);
    manifest.set("manifest.finished", experiment->finished);
    manifest.set("manifest.runtime_seconds", format_double(experiment->seconds));
    manifest.set("manifest.master_seed", std::to_string(experiment->master_seed));
    manifest.set("manifest.output.results", "results.csv");
    manifest.set("manifest.output.aggregate", "aggregate.csv");
    manifest.set("manifest.output.plot_data", "plot_data.csv");
    manifest.set("manifest.output.manifest", "manifest.txt");
    manifest.set("manifest.greedy_target", format_double(r.greedy_target));
    manifest.set("manifest.warnings", std::to_string(r.warnings.size()));

    std::map<std::string, int> by_stage;
    std::map<std::string, int> phase2_status;
    for (const EpisodeResult& e : r.episodes) {
      if (e.failed) {
        ++by_stage[e.failure_stage];
      } else {
        ++phase2_status[sdp::to_string(e.phase2_resynth_status)];
      }
    }
    for (const auto& [stage, n] : by_stage) manifest.set("manifest.failures." + stage, std::to_string(n));
    for (const auto& [status, n] : phase2_status) {
      manifest.set("manifest.phase2_solver." + status, std::to_string(n));
    }
    std::ofstream out = open_out((dir / "manifest.txt").string());
    out << "# experiment manifest; rerun with: dualctl experiment --config manifest.txt\n";
    manifest.write(out);
  });
}

dualctl_status dualctl_experiment_aggregate(const dualctl_experiment* experiment, const char* strategy,
                                            const char* phase, double* mean, double* median, int* n, int* failures) {
  return guarded([&] {
    require(experiment, "experiment");
    require(strategy, "strategy");
    require(phase, "phase");
    const Strategy s = parse_strategy(strategy);
    for (const AggregateRow& a : experiment->result.aggregate) {
      if (a.strategy == s && a.phase == phase) {
        if (mean) *mean = a.mean;
        if (median) *median = a.median;
        if (n) *n = a.n;
        if (failures) *failures = a.failures;
        return;
      }
    }
    throw ValidationError("phase", std::string("unknown phase '") + phase + "'");
  });
}

size_t dualctl_experiment_num_warnings(const dualctl_experiment* experiment) {
  return experiment ? experiment->result.warnings.size() : 0;
}

const char* dualctl_experiment_warning(const dualctl_experiment* experiment, size_t index) {
  if (!experiment || index >= experiment->result.warnings.size()) return nullptr;
  return experiment->result.warnings[index].c_str();
}

void dualctl_experiment_free(dualctl_experiment* experiment) { delete experiment; }

}  // extern "C"
