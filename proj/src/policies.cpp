#include "ickpt/policies.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ickpt {

std::vector<std::string> PeriodicConfig::problems() const {
  if (threshold_insts < 1) return {"periodic.threshold_insts: must be at least 1"};
  return {};
}

std::vector<std::string> ConservativeConfig::problems() const {
  std::vector<std::string> p;
  if (!(low_threshold_nj > 0.0)) p.push_back("conservative.low_threshold_nj: must be positive");
  if (!(high_threshold_nj >= low_threshold_nj))
    p.push_back("conservative.high_threshold_nj: must be >= low_threshold_nj");
  if (!(capacity_nj > 0.0)) p.push_back("conservative.capacity_nj: must be positive");
  if (battery_levels < 2) p.push_back("conservative.battery_levels: must be at least 2");
  if (capacity_nj > 0.0 && low_threshold_nj >= capacity_nj)
    p.push_back("conservative.low_threshold_nj: worst-case checkpoint (" + std::to_string(low_threshold_nj) +
                " nJ) does not fit in the battery (" + std::to_string(capacity_nj) + " nJ)");
  return p;
}

double ConservativeConfig::wake_energy_nj() const { return std::min(high_threshold_nj, capacity_nj); }

int ConservativeConfig::wake_level() const {
  const double quantum = capacity_nj / battery_levels;
  const double lv = std::ceil(high_threshold_nj / quantum);
  return static_cast<int>(std::min<double>(battery_levels - 1, lv));
}

PolicyDecision q_decide(const ActionBitTable& table, const MdpState& s) {
  table.space().check(s);
  if (s.p == table.S() - 1) return PolicyDecision::checkpoint();
  return table.get(s) ? PolicyDecision::checkpoint() : PolicyDecision::proceed();
}

PolicyDecision periodic_decide(std::int64_t insts_since_cp, const PeriodicConfig& cfg) {
  if (insts_since_cp < 0) throw std::invalid_argument("negative instruction counter");
  return insts_since_cp >= cfg.threshold_insts ? PolicyDecision::checkpoint() : PolicyDecision::proceed();
}

PolicyDecision conservative_decide(double battery_energy_nj, bool running, const ConservativeConfig& cfg) {
  if (!(battery_energy_nj >= 0.0)) throw std::invalid_argument("negative battery energy");
  if (running) {
    if (battery_energy_nj < cfg.low_threshold_nj) {
      auto d = PolicyDecision::checkpoint();
      d.power_off_after = true;
      d.wake_level = cfg.wake_level();
      d.wake_energy_nj = cfg.wake_energy_nj();
      return d;
    }
    return PolicyDecision::proceed();
  }
  if (battery_energy_nj >= cfg.wake_energy_nj()) return PolicyDecision::proceed();
  return PolicyDecision::power_off(cfg.wake_level(), cfg.wake_energy_nj());
}

ConservativeConfig conservative_thresholds(const SystemParams& sys, const ProgramSpec& prog) {
  sys.validate();
  prog.validate();
  const std::int64_t bytes = sys.pc_bytes + sys.rf_bytes + sys.dcache_bytes;
  ConservativeConfig c;
  c.low_threshold_nj = checkpoint_cost_for_bytes(sys, bytes).energy_nj;
  c.high_threshold_nj = c.low_threshold_nj + restore_cost_for_bytes(sys, bytes).energy_nj;
  c.capacity_nj = sys.capacity_nj();
  c.battery_levels = static_cast<int>(sys.battery_levels);
  return c;
}

std::string policy_name(const Policy& p) {
  switch (p.index()) {
    case 0: return "qlearn";
    case 1: return "periodic";
    default: return "conservative";
  }
}

nlohmann::json to_json(const PeriodicConfig& c) { return {{"threshold_insts", c.threshold_insts}}; }

PeriodicConfig periodic_config_from_json(const nlohmann::json& j) {
  PeriodicConfig c;
  std::vector<std::string> problems;
  if (!j.is_object()) throw ConfigError({"periodic: expected a JSON object"});
  for (const auto& [key, value] : j.items()) {
    if (key != "threshold_insts") {
      problems.push_back("periodic." + key + ": unknown key");
    } else if (!value.is_number_integer()) {
      problems.push_back("periodic.threshold_insts: integer expected");
    } else {
      c.threshold_insts = value.get<std::int64_t>();
    }
  }
  for (auto& s : c.problems()) problems.push_back(std::move(s));
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

nlohmann::json to_json(const ConservativeConfig& c) {
  return {{"low_threshold_nj", c.low_threshold_nj},
          {"high_threshold_nj", c.high_threshold_nj},
          {"wake_energy_nj", c.wake_energy_nj()},
          {"wake_level", c.wake_level()}};
}

}  // namespace ickpt
