#include "ickpt/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "ickpt/text.hpp"

namespace ickpt {

using nlohmann::json;

json ExperimentConfig::to_json() const {
  return json{{"system", ickpt::to_json(system)},
              {"program", ickpt::to_json(program)},
              {"train", ickpt::to_json(train)},
              {"harvest", ickpt::to_json(harvest)},
              {"periodic", ickpt::to_json(periodic)},
              {"run", {{"max_sim_time_s", max_sim_time_s}, {"initial_battery_fraction", initial_battery_fraction}}},
              {"eval", {{"seed", eval_seed}, {"seeds", eval_seeds}}}};
}

namespace {

template <class F>
void collect(std::vector<std::string>& problems, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    problems.insert(problems.end(), e.problems().begin(), e.problems().end());
  }
}

template <class T>
void number_field(const json& obj, const std::string& where, const char* key, T& out,
                  std::vector<std::string>& problems) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  const bool ok = std::is_integral_v<T> ? v.is_number_integer() : v.is_number();
  if (!ok) {
    problems.push_back(where + key + ": " + (std::is_integral_v<T> ? "integer" : "number") + " expected");
    return;
  }
  out = v.get<T>();
}

void known_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys,
                std::vector<std::string>& problems) {
  for (const auto& [k, _] : obj.items())
    if (std::none_of(keys.begin(), keys.end(), [&](const char* x) { return k == x; }))
      problems.push_back(where + k + ": unknown key");
}

}  // namespace

ExperimentConfig experiment_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError({"config: expected a JSON object"});
  ExperimentConfig c;
  std::vector<std::string> problems;
  known_keys(j, "", {"system", "program", "train", "harvest", "periodic", "run", "eval"}, problems);
  if (j.contains("system")) collect(problems, [&] { c.system = system_params_from_json(j.at("system")); });
  if (j.contains("program")) collect(problems, [&] { c.program = program_from_json(j.at("program")); });
  if (j.contains("train")) collect(problems, [&] { c.train = train_config_from_json(j.at("train")); });
  if (j.contains("harvest")) collect(problems, [&] { c.harvest = harvest_config_from_json(j.at("harvest")); });
  if (j.contains("periodic")) collect(problems, [&] { c.periodic = periodic_config_from_json(j.at("periodic")); });
  if (j.contains("run")) {
    const auto& r = j.at("run");
    if (!r.is_object()) {
      problems.push_back("run: expected a JSON object");
    } else {
      known_keys(r, "run.", {"max_sim_time_s", "initial_battery_fraction"}, problems);
      number_field(r, "run.", "max_sim_time_s", c.max_sim_time_s, problems);
      number_field(r, "run.", "initial_battery_fraction", c.initial_battery_fraction, problems);
    }
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    if (!e.is_object()) {
      problems.push_back("eval: expected a JSON object");
    } else {
      known_keys(e, "eval.", {"seed", "seeds"}, problems);
      number_field(e, "eval.", "seed", c.eval_seed, problems);
      number_field(e, "eval.", "seeds", c.eval_seeds, problems);
    }
  }
  if (!(c.max_sim_time_s > 0.0)) problems.push_back("run.max_sim_time_s: must be positive");
  if (!(c.initial_battery_fraction >= 0.0 && c.initial_battery_fraction <= 1.0))
    problems.push_back("run.initial_battery_fraction: must be in [0, 1]");
  if (c.eval_seeds < 1) problems.push_back("eval.seeds: must be at least 1");
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

ExperimentConfig read_experiment_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError({path.string() + ": " + e.what()});
  }
  return experiment_config_from_json(j);
}

std::vector<std::uint64_t> eval_seed_list(const ExperimentConfig& cfg) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; static_cast<int>(seeds.size()) < cfg.eval_seeds; ++i) {
    const auto s = derive_seed(cfg.eval_seed, 1000 + static_cast<std::uint64_t>(i));
    if (s != cfg.train.seed) seeds.push_back(s);
  }
  return seeds;
}

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return out.str();
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text_file(path)); }

std::string harvest_stream_digest(const TransitionModel& model, const HarvestConfig& h, std::uint64_t seed) {
  const json id{{"model", json::parse(model_to_json(model))}, {"harvest", to_json(h)}, {"seed", seed}};
  return sha256_hex(id.dump());
}

RunConfig make_run_config(const ExperimentConfig& cfg, const TransitionModel& model) {
  RunConfig rc;
  rc.seed = cfg.eval_seed;
  rc.source = MarkovSource{model, cfg.harvest};
  rc.max_sim_time_s = cfg.max_sim_time_s;
  rc.initial_battery_fraction = cfg.initial_battery_fraction;
  return rc;
}

void write_results_csv(const std::filesystem::path& path, std::vector<EvalRow> rows) {
  std::sort(rows.begin(), rows.end(), [](const EvalRow& a, const EvalRow& b) {
    return std::tie(a.benchmark, a.policy, a.seed) < std::tie(b.benchmark, b.policy, b.seed);
  });
  std::ostringstream out;
  out << "benchmark,policy,seed,normalized_runtime,n_cps,n_rollbacks,rollback_cost_s,off_time_s\n";
  for (const auto& r : rows)
    out << r.benchmark << ',' << r.policy << ',' << r.seed << ',' << format_double(r.result.normalized_runtime())
        << ',' << r.result.n_checkpoints << ',' << r.result.n_rollbacks << ','
        << format_double(r.result.rollback_cost_s) << ',' << format_double(r.result.off_time_s) << '\n';
  write_text_file(path, out.str());
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const TransitionModel& model, const std::string& param,
                                const std::vector<std::int64_t>& values) {
  if (param != "B" && param != "S") throw std::invalid_argument("sweep parameter must be B or S");
  if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
  for (auto v : values)
    if (v < 2) throw ConfigError({"sweep." + param + ": values must be at least 2"});

  const auto seeds = eval_seed_list(cfg);
  const auto n = static_cast<std::int64_t>(values.size());
  std::vector<SweepRow> rows(values.size());
  std::vector<std::exception_ptr> errors(values.size());

#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    try {
      ExperimentConfig c = cfg;
      (param == "B" ? c.system.battery_levels : c.system.super_interval) = values[i];
      c.system.validate();
      auto trained = train(c.system, c.program, model, c.harvest, c.train);
      auto bits = std::make_shared<const ActionBitTable>(extract_action_bits(trained.table));
      const std::vector<NamedPolicy> pol{{"qlearn", QLearnPolicy{bits}}};
      const auto cmp = compare_serial(c.program, pol, c.system, make_run_config(c, model), seeds);
      rows[i] = {param, values[i], summarize(cmp).front().mean_normalized_runtime, 1.0,
                 trained.report.reachable_coverage};
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (auto& r : rows) r.relative_speedup = rows.front().mean_normalized_runtime / r.mean_normalized_runtime;
  return rows;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "param,value,mean_normalized_runtime,relative_speedup,train_reachable_coverage\n";
  for (const auto& r : rows)
    out << r.param << ',' << r.value << ',' << format_double(r.mean_normalized_runtime) << ','
        << format_double(r.relative_speedup) << ',' << format_double(r.train_reachable_coverage) << '\n';
  write_text_file(path, out.str());
}

}  // namespace ickpt
