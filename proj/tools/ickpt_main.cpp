// Command-line front end: trace preparation, training, evaluation and
// sensitivity sweeps.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "ickpt/experiment.hpp"
#include "ickpt/text.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ickpt;

namespace {

enum Exit { kOk = 0, kUsage = 1, kRuntime = 2, kWatchdog = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

PowerLevelSet parse_levels(const std::string& text) {
  std::vector<double> v;
  for (auto part : split(text, ',')) {
    auto d = parse_double(part);
    if (!d) throw UsageError("--levels: not a number: '" + std::string(part) + "'");
    v.push_back(*d);
  }
  try {
    return PowerLevelSet(std::move(v));
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--levels: ") + e.what());
  }
}

std::vector<std::int64_t> parse_int_list(const std::string& text, const std::string& flag) {
  std::vector<std::int64_t> out;
  for (auto part : split(text, ',')) {
    auto d = parse_double(part);
    if (!d || *d != static_cast<double>(static_cast<std::int64_t>(*d)))
      throw UsageError(flag + ": not an integer: '" + std::string(part) + "'");
    out.push_back(static_cast<std::int64_t>(*d));
  }
  return out;
}

void write_manifest(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg,
                    const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs, json extra) {
  json m;
  m["tool_version"] = kToolVersion;
  m["command"] = command;
  m["config"] = cfg.to_json();
  json in = json::object();
  for (const auto& p : inputs) in[p.string()] = sha256_file(p);
  m["inputs"] = in;
  json out = json::object();
  for (const auto& p : outputs) out[p.filename().string()] = sha256_file(p);
  m["outputs"] = out;
  for (auto& [k, v] : extra.items()) m[k] = v;
  write_text_file(dir / "manifest.json", m.dump(2) + "\n");
}

ExperimentConfig load_config(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : read_experiment_config(path);
}

TransitionModel load_model(const std::string& path) { return path.empty() ? default_rf_model() : read_model_json(path); }

struct Common {
  std::string config;
  std::string model;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> seeds;
  std::optional<std::int64_t> episodes;
};

void apply_overrides(ExperimentConfig& cfg, const Common& c, bool seed_is_train) {
  if (c.episodes) cfg.train.episodes = *c.episodes;
  if (c.seed) (seed_is_train ? cfg.train.seed : cfg.eval_seed) = *c.seed;
  if (c.seeds) cfg.eval_seeds = *c.seeds;
  std::vector<std::string> p = cfg.train.problems();
  if (cfg.eval_seeds < 1) p.push_back("--seeds: must be at least 1");
  if (!p.empty()) throw ConfigError(std::move(p));
}

int cmd_trace_quantize(const std::string& in, const std::string& out, const std::string& levels) {
  const auto q = quantize_trace(read_trace_csv(fs::path(in)), parse_levels(levels));
  if (out.empty())
    write_trace_csv(std::cout, q);
  else
    write_trace_csv(fs::path(out), q);
  return kOk;
}

int cmd_trace_fit(const std::string& in, const std::string& out, const std::string& levels) {
  const auto lv = parse_levels(levels);
  const auto model = fit_transitions(quantize_trace(read_trace_csv(fs::path(in)), lv), lv);
  if (out.empty())
    std::cout << model_to_json(model);
  else
    write_model_json(out, model);
  return kOk;
}

int cmd_trace_gen(const std::string& model_path, const std::string& out, std::size_t n, std::uint64_t seed,
                  double period, std::size_t initial) {
  const auto t = generate_trace(read_model_json(model_path), n, period, seed, initial);
  if (out.empty())
    write_trace_csv(std::cout, t);
  else
    write_trace_csv(fs::path(out), t);
  return kOk;
}

int cmd_train(const Common& c) {
  auto cfg = load_config(c.config);
  apply_overrides(cfg, c, true);
  const auto model = load_model(c.model);
  const fs::path dir(c.out);
  fs::create_directories(dir);

  auto result = train(cfg.system, cfg.program, model, cfg.harvest, cfg.train);
  const auto bits = extract_action_bits(result.table);
  write_action_bits(dir / "actions.abt", bits);
  write_qtable(dir / "qtable.json", result.table,
               {result.table.S(), result.table.B(), cfg.train.episodes, cfg.train.seed, cfg.train.gamma});
  json report = result.report.summary_json();
  report["action_bits_set"] = bits.popcount();
  report["action_table_bytes"] = ActionBitTable::kHeaderBytes + bits.byte_count();
  write_text_file(dir / "train_report.json", report.dump(2) + "\n");

  std::ostringstream curve;
  curve << "episode,epsilon,cost,steps,failures\n";
  for (std::size_t i = 0; i < result.report.per_episode.size(); ++i) {
    const auto& e = result.report.per_episode[i];
    curve << i << ',' << format_double(e.epsilon) << ',' << format_double(e.cost) << ',' << e.steps << ','
          << e.failures << '\n';
  }
  write_text_file(dir / "train_curve.csv", curve.str());

  std::vector<fs::path> inputs;
  if (!c.config.empty()) inputs.push_back(c.config);
  if (!c.model.empty()) inputs.push_back(c.model);
  write_manifest(dir, "train", cfg, inputs,
                 {dir / "actions.abt", dir / "qtable.json", dir / "qtable.json.bin", dir / "train_report.json",
                  dir / "train_curve.csv"},
                 {{"train_seed", cfg.train.seed}, {"model", json::parse(model_to_json(model))}});
  std::cout << report.dump(2) << "\n";
  return kOk;
}

int cmd_eval(const Common& c, std::vector<std::string> policies, const std::string& actions_path,
             const std::string& trace_path, bool events) {
  auto cfg = load_config(c.config);
  apply_overrides(cfg, c, false);
  const auto model = load_model(c.model);
  const fs::path dir(c.out);

  if (policies.empty() || (policies.size() == 1 && policies[0] == "all"))
    policies = {"conservative", "periodic", "qlearn"};
  std::sort(policies.begin(), policies.end());
  policies.erase(std::unique(policies.begin(), policies.end()), policies.end());

  std::vector<NamedPolicy> named;
  for (const auto& p : policies) {
    if (p == "qlearn") {
      if (actions_path.empty()) throw UsageError("policy qlearn needs an action table (--actions)");
      auto table = std::make_shared<const ActionBitTable>(read_action_bits(actions_path));
      if (table->S() != cfg.system.super_interval || table->B() != cfg.system.battery_levels)
        throw UsageError("action table is " + std::to_string(table->S()) + " x " + std::to_string(table->B()) +
                         " (S x B) but the config has " + std::to_string(cfg.system.super_interval) + " x " +
                         std::to_string(cfg.system.battery_levels));
      named.push_back({p, QLearnPolicy{std::move(table)}});
    } else if (p == "periodic") {
      named.push_back({p, PeriodicPolicy{cfg.periodic}});
    } else if (p == "conservative") {
      named.push_back({p, ConservativePolicy{conservative_thresholds(cfg.system, cfg.program)}});
    } else {
      throw UsageError("unknown policy '" + p + "' (expected qlearn, periodic, conservative or all)");
    }
  }
  fs::create_directories(dir);

  RunConfig rc = make_run_config(cfg, model);
  std::vector<fs::path> inputs;
  if (!c.config.empty()) inputs.push_back(c.config);
  if (!c.model.empty()) inputs.push_back(c.model);
  if (!actions_path.empty()) inputs.push_back(actions_path);
  if (!trace_path.empty()) {
    rc.source = scale_trace(read_trace_csv(fs::path(trace_path)), cfg.harvest.mean_power_mw);
    inputs.push_back(trace_path);
  }
  const auto seeds = eval_seed_list(cfg);
  const auto rows = compare(cfg.program, named, cfg.system, rc, seeds);

  std::vector<EvalRow> eval_rows;
  json digests = json::object();
  for (const auto& r : rows) {
    eval_rows.push_back({cfg.program.name, r.policy, r.seed, r.result});
    const auto d = trace_path.empty() ? harvest_stream_digest(model, cfg.harvest, r.seed) : sha256_file(trace_path);
    digests[r.policy][std::to_string(r.seed)] = d;
  }
  write_results_csv(dir / "results.csv", eval_rows);
  std::vector<fs::path> outputs{dir / "results.csv"};

  json summary = json::array();
  for (const auto& s : summarize(rows))
    summary.push_back({{"policy", s.policy},
                       {"mean_normalized_runtime", s.mean_normalized_runtime},
                       {"mean_checkpoints", s.mean_checkpoints},
                       {"mean_rollback_cost_s", s.mean_rollback_cost_s},
                       {"mean_off_time_s", s.mean_off_time_s},
                       {"total_rollbacks", s.total_rollbacks}});
  write_text_file(dir / "summary.json", summary.dump(2) + "\n");
  outputs.push_back(dir / "summary.json");

  if (events) {
    // one full event log per policy for the first seed
    RunConfig one = rc;
    one.seed = seeds.front();
    for (const auto& np : named) {
      const auto r = run(cfg.program, np.policy, cfg.system, one);
      const auto path = dir / ("events_" + np.name + ".csv");
      std::ofstream out(path);
      write_events_csv(out, r);
      out.close();
      outputs.push_back(path);
    }
  }
  json seed_list = json::array();
  for (auto s : seeds) seed_list.push_back(s);
  write_manifest(dir, "eval", cfg, inputs, outputs,
                 {{"eval_seeds", seed_list}, {"trace_digests", digests}, {"policies", policies}});
  std::cout << summary.dump(2) << "\n";
  return kOk;
}

int cmd_sweep(const Common& c, const std::string& param, const std::string& values) {
  if (param != "B" && param != "S") throw UsageError("sweep parameter must be B or S");
  auto cfg = load_config(c.config);
  apply_overrides(cfg, c, false);
  const auto model = load_model(c.model);
  const auto vals = parse_int_list(values, "--values");
  const fs::path dir(c.out);
  fs::create_directories(dir);

  const auto rows = run_sweep(cfg, model, param, vals);
  const auto csv = dir / ("sweep_" + param + ".csv");
  write_sweep_csv(csv, rows);
  std::vector<fs::path> inputs;
  if (!c.config.empty()) inputs.push_back(c.config);
  if (!c.model.empty()) inputs.push_back(c.model);
  json seed_list = json::array();
  for (auto s : eval_seed_list(cfg)) seed_list.push_back(s);
  write_manifest(dir, "sweep " + param, cfg, inputs, {csv},
                 {{"values", vals}, {"eval_seeds", seed_list}, {"train_seed", cfg.train.seed}});
  std::cout << read_text_file(csv);
  return kOk;
}

void add_common(CLI::App* app, Common& c, bool with_eval_flags, bool trains) {
  app->add_option("--config", c.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  app->add_option("--model", c.model, "Transition model (JSON); default chain if omitted")->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "Output directory");
  app->add_option("--seed", c.seed, with_eval_flags ? "Base evaluation seed" : "Training seed");
  if (trains) app->add_option("--episodes", c.episodes, "Training episodes");
  if (with_eval_flags) app->add_option("--seeds", c.seeds, "Number of evaluation seeds");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Checkpoint scheduling for intermittently powered processors"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::string levels = "0,5,10,15,20,25";
  std::string in, out, model_in;
  std::size_t n_samples = 1000;
  std::uint64_t gen_seed = 1;
  double period = 5e-3;
  std::size_t initial = 0;

  auto* trace = app.add_subcommand("trace", "Trace preparation");
  trace->require_subcommand(1);
  auto* quant = trace->add_subcommand("quantize", "Snap samples to the nearest power level");
  quant->add_option("input", in, "Trace CSV")->required()->check(CLI::ExistingFile);
  quant->add_option("-o,--output", out, "Output CSV (stdout if omitted)");
  quant->add_option("--levels", levels, "Power levels in mW, comma separated");
  auto* fit = trace->add_subcommand("fit", "Fit a Markov chain to a trace");
  fit->add_option("input", in, "Trace CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("-o,--output", out, "Model JSON (stdout if omitted)");
  fit->add_option("--levels", levels, "Power levels in mW, comma separated");
  auto* gen = trace->add_subcommand("gen", "Generate a synthetic trace");
  gen->add_option("model", model_in, "Model JSON")->required()->check(CLI::ExistingFile);
  gen->add_option("-o,--output", out, "Output CSV (stdout if omitted)");
  gen->add_option("-n", n_samples, "Number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--period", period, "Sample period in seconds")->check(CLI::PositiveNumber);
  gen->add_option("--initial", initial, "Initial level index");

  Common train_opts, eval_opts, sweep_opts;
  auto* tr = app.add_subcommand("train", "Train a Q-table and write the action-bit table");
  add_common(tr, train_opts, false, true);

  std::vector<std::string> policies;
  std::string actions, trace_path;
  bool events = false;
  auto* ev = app.add_subcommand("eval", "Compare policies over paired seeds");
  add_common(ev, eval_opts, true, false);
  ev->add_option("--policy", policies, "qlearn, periodic, conservative or all (repeatable)");
  ev->add_option("--actions", actions, "Action-bit table for qlearn")->check(CLI::ExistingFile);
  ev->add_option("--trace", trace_path, "Replay this trace instead of the chain")->check(CLI::ExistingFile);
  ev->add_flag("--events", events, "Write per-policy event logs for the first seed");

  std::string param, values;
  auto* sw = app.add_subcommand("sweep", "Retrain and evaluate over B or S");
  add_common(sw, sweep_opts, true, true);
  sw->add_option("param", param, "B or S")->required();
  sw->add_option("--values", values, "Comma-separated values")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*trace) {
      if (*quant) return cmd_trace_quantize(in, out, levels);
      if (*fit) return cmd_trace_fit(in, out, levels);
      return cmd_trace_gen(model_in, out, n_samples, gen_seed, period, initial);
    }
    if (*tr) return cmd_train(train_opts);
    if (*ev) return cmd_eval(eval_opts, policies, actions, trace_path, events);
    if (*sw) return cmd_sweep(sweep_opts, param, values);
  } catch (const ConfigError& e) {
    std::cerr << "config error:\n" << e.what() << "\n";
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const NoProgressError& e) {
    std::cerr << "watchdog: " << e.what() << "\n";
    return kWatchdog;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
