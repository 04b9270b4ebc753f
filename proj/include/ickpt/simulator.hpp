#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ickpt/dynamics.hpp"
#include "ickpt/energy_model.hpp"
#include "ickpt/policies.hpp"
#include "ickpt/qlearning.hpp"
#include "ickpt/system_model.hpp"

namespace ickpt {

struct BatteryState {
  double energy_nj = 0.0;
  double capacity_nj = 0.0;

  /// floor(energy / quantum) clamped to [0, B-1].
  int level(int B) const;
};

enum class EventKind { interval_done, checkpoint, failure, rollback, restore, power_off, power_on };

std::string_view to_string(EventKind k);

/// One telemetry record. prc and cc count intervals from the start of the
/// program; progress_insts is the executed work at that instant.
struct SimEvent {
  double time_s = 0.0;
  EventKind kind = EventKind::interval_done;
  std::int64_t prc = 0;
  std::int64_t cc = 0;
  double battery_nj = 0.0;
  double progress_insts = 0.0;

  friend bool operator==(const SimEvent&, const SimEvent&) = default;
};

struct EnergyLedger {
  double initial_nj = 0.0;
  double harvested_nj = 0.0;
  double absorbed_nj = 0.0;  // harvested minus what overflowed the battery
  double consumed_nj = 0.0;
  double final_nj = 0.0;
};

struct SimResult {
  std::string policy;
  std::uint64_t seed = 0;
  double baseline_time_s = 0.0;
  double exec_time_s = 0.0;
  double busy_time_s = 0.0;  // execution, checkpoint and restore time
  double off_time_s = 0.0;
  std::int64_t n_checkpoints = 0;
  std::int64_t n_rollbacks = 0;
  std::int64_t n_failures = 0;
  /// Executed time that a failure threw away.
  double rollback_cost_s = 0.0;
  EnergyLedger energy;
  std::vector<SimEvent> events;

  double normalized_runtime() const { return exec_time_s / baseline_time_s; }
  nlohmann::json summary_json() const;
};

/// Harvest drawn on the fly from a Markov chain scaled to a mean power.
struct MarkovSource {
  TransitionModel model;
  HarvestConfig harvest;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::variant<PowerTrace, MarkovSource> source = PowerTrace{};
  double max_sim_time_s = 3600.0;
  /// Battery charge at t = 0 as a fraction of capacity.
  double initial_battery_fraction = 1.0;
  bool record_events = true;

  std::vector<std::string> problems() const;
};

double baseline_time(const ProgramSpec& prog, const SystemParams& sys);

/// Simulates one program run. Throws NoProgressError on watchdog expiry.
SimResult run(const ProgramSpec& prog, const Policy& policy, const SystemParams& sys, const RunConfig& cfg);

void write_events_csv(std::ostream& out, const SimResult& r);

struct NamedPolicy {
  std::string name;
  Policy policy;
};

struct ComparisonRow {
  std::string policy;
  std::uint64_t seed = 0;
  SimResult result;  // without events
};

struct PolicySummary {
  std::string policy;
  double mean_normalized_runtime = 0.0;
  double mean_checkpoints = 0.0;
  double mean_rollback_cost_s = 0.0;
  double mean_off_time_s = 0.0;
  std::int64_t total_rollbacks = 0;
};

/// Runs every policy on every seed. Rows come back in (policy, seed)
/// order whatever the execution order; the same seed drives the same
/// harvest for each policy.
std::vector<ComparisonRow> compare(const ProgramSpec& prog, const std::vector<NamedPolicy>& policies,
                                   const SystemParams& sys, const RunConfig& base,
                                   const std::vector<std::uint64_t>& seeds);
/// Single-threaded reference for compare().
std::vector<ComparisonRow> compare_serial(const ProgramSpec& prog, const std::vector<NamedPolicy>& policies,
                                          const SystemParams& sys, const RunConfig& base,
                                          const std::vector<std::uint64_t>& seeds);

std::vector<PolicySummary> summarize(const std::vector<ComparisonRow>& rows);

}  // namespace ickpt
