#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ickpt/mdp.hpp"
#include "ickpt/qlearning.hpp"
#include "ickpt/system_model.hpp"

namespace ickpt {

struct PolicyDecision {
  enum class Kind { proceed, checkpoint, power_off_until };

  Kind kind = Kind::proceed;
  /// Set with checkpoint when the processor must power off afterwards.
  bool power_off_after = false;
  int wake_level = 0;
  double wake_energy_nj = 0.0;

  static PolicyDecision proceed() { return {}; }
  static PolicyDecision checkpoint() { return {Kind::checkpoint, false, 0, 0.0}; }
  static PolicyDecision power_off(int level, double energy_nj) {
    return {Kind::power_off_until, false, level, energy_nj};
  }

  friend bool operator==(const PolicyDecision&, const PolicyDecision&) = default;
};

struct PeriodicConfig {
  std::int64_t threshold_insts = 1000;

  std::vector<std::string> problems() const;
};

struct ConservativeConfig {
  double low_threshold_nj = 0.0;   // a worst-case checkpoint
  double high_threshold_nj = 0.0;  // low + worst-case restore
  double capacity_nj = 0.0;
  int battery_levels = 0;

  std::vector<std::string> problems() const;
  /// Energy at which an off processor resumes: high, clamped to capacity.
  double wake_energy_nj() const;
  /// Smallest battery level whose lower bound reaches the high threshold.
  int wake_level() const;
};

PolicyDecision q_decide(const ActionBitTable& table, const MdpState& s);
PolicyDecision periodic_decide(std::int64_t insts_since_cp, const PeriodicConfig& cfg);
PolicyDecision conservative_decide(double battery_energy_nj, bool running, const ConservativeConfig& cfg);

/// Thresholds for a full data cache of dirty lines.
ConservativeConfig conservative_thresholds(const SystemParams& sys, const ProgramSpec& prog);

struct QLearnPolicy {
  std::shared_ptr<const ActionBitTable> table;
};
struct PeriodicPolicy {
  PeriodicConfig cfg;
};
struct ConservativePolicy {
  ConservativeConfig cfg;
};

using Policy = std::variant<QLearnPolicy, PeriodicPolicy, ConservativePolicy>;

/// "qlearn", "periodic" or "conservative".
std::string policy_name(const Policy& p);

nlohmann::json to_json(const PeriodicConfig& c);
PeriodicConfig periodic_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ConservativeConfig& c);

}  // namespace ickpt
