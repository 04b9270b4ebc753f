#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ickpt/energy_model.hpp"
#include "ickpt/policies.hpp"
#include "ickpt/qlearning.hpp"
#include "ickpt/simulator.hpp"
#include "ickpt/system_model.hpp"

namespace ickpt {

inline constexpr const char* kToolVersion = "ickpt 0.1.0";

/// Everything an experiment needs besides the harvest model and any
/// trained table. Mirrors the JSON config file section by section.
struct ExperimentConfig {
  SystemParams system;
  ProgramSpec program;
  TrainConfig train;
  HarvestConfig harvest;
  PeriodicConfig periodic;
  double max_sim_time_s = 3600.0;
  double initial_battery_fraction = 1.0;
  std::uint64_t eval_seed = 7;  // base of the evaluation seed stream
  int eval_seeds = 5;

  nlohmann::json to_json() const;
};

/// Sections: system, program, train, harvest, periodic, run, eval. Unknown
/// keys and bad values anywhere are reported together in one ConfigError.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig read_experiment_config(const std::filesystem::path& path);

/// Evaluation seeds; never equal to the training seed.
std::vector<std::uint64_t> eval_seed_list(const ExperimentConfig& cfg);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// Reads the whole file, failing with the path in the message.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Identifies the harvest stream one evaluation seed produces.
std::string harvest_stream_digest(const TransitionModel& model, const HarvestConfig& h, std::uint64_t seed);

RunConfig make_run_config(const ExperimentConfig& cfg, const TransitionModel& model);

struct EvalRow {
  std::string benchmark;
  std::string policy;
  std::uint64_t seed = 0;
  SimResult result;
};

/// Writes the results CSV; rows are sorted by (benchmark, policy, seed).
void write_results_csv(const std::filesystem::path& path, std::vector<EvalRow> rows);

struct SweepRow {
  std::string param;
  std::int64_t value = 0;
  double mean_normalized_runtime = 0.0;
  double relative_speedup = 1.0;  // first value's runtime / this runtime
  double train_reachable_coverage = 0.0;
};

/// Retrains and evaluates the Q-learning policy for each value of `param`
/// ("B" or "S"). Values are trained independently, in parallel.
std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const TransitionModel& model, const std::string& param,
                                const std::vector<std::int64_t>& values);

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

}  // namespace ickpt
