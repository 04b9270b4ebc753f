#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ickpt/dynamics.hpp"
#include "ickpt/energy_model.hpp"
#include "ickpt/mdp.hpp"
#include "ickpt/rng.hpp"
#include "ickpt/system_model.hpp"

namespace ickpt {

/// Dense state-action values, (state, action) order with the action
/// fastest (proc = 0, chpt = 1).
class QTable {
public:
  QTable(int S, int B);

  const StateSpace& space() const { return space_; }
  int S() const { return space_.S; }
  int B() const { return space_.B; }

  double value(const MdpState& s, Action a) const { return values_[slot(s, a)]; }
  double& value(const MdpState& s, Action a) { return values_[slot(s, a)]; }
  std::uint32_t visits(const MdpState& s, Action a) const { return visits_[slot(s, a)]; }
  double min_value(const MdpState& s) const;

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  std::span<const std::uint32_t> visit_counts() const { return visits_; }

  /// Greedy action; ties resolve to proc.
  Action greedy(const MdpState& s) const;

  /// Increments n(s,a) and returns it.
  std::uint32_t record_visit(const MdpState& s, Action a) { return ++visits_[slot(s, a)]; }

  /// Fraction of states with at least one visited action.
  double coverage() const;
  /// Same, restricted to states with c <= p.
  double reachable_coverage() const;

private:
  std::size_t slot(const MdpState& s, Action a) const {
    return state_index(s, space_.S, space_.B) * 2 + static_cast<std::size_t>(a);
  }

  StateSpace space_;
  std::vector<double> values_;
  std::vector<std::uint32_t> visits_;
};

enum class EpsilonSchedule { linear, multiplicative };

struct TrainConfig {
  double gamma = 1.0;
  double epsilon_start = 0.9;
  double epsilon_end = 0.1;
  EpsilonSchedule epsilon_decay = EpsilonSchedule::linear;
  std::int64_t episodes = 20'000;
  std::uint64_t seed = 1;
  /// Upper bound of the random idle warm-up before each episode; <= 0
  /// selects twice the time to fill the battery at mean harvest.
  double warmup_max_s = 0.0;

  std::vector<std::string> problems() const;
  void validate() const;
  double epsilon_at(std::int64_t episode) const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// How the harvested power seen by a run is produced from a chain.
struct HarvestConfig {
  double sample_period_s = 5e-3;
  double mean_power_mw = 0.6;  // 6 nJ per cycle at 100 kHz
  std::size_t initial_level_index = 0;

  std::vector<std::string> problems() const;
};

nlohmann::json to_json(const HarvestConfig& h);
HarvestConfig harvest_config_from_json(const nlohmann::json& j);

/// One decision step: alpha = 1 / n(s,a), target = cost + gamma * min Q(s').
void q_update(QTable& q, const MdpState& s, Action a, double cost, const MdpState& s_next, double gamma);

/// Epsilon-greedy selection; the random branch picks each action with
/// probability 1/2.
Action choose_action(const QTable& q, const MdpState& s, double epsilon, Rng& rng);

struct EpisodeStats {
  double cost = 0.0;
  double epsilon = 0.0;
  std::int64_t steps = 0;
  std::int64_t failures = 0;
};

struct TrainReport {
  std::int64_t episodes = 0;
  double final_epsilon = 0.0;
  double coverage = 0.0;
  double reachable_coverage = 0.0;
  /// Largest per-entry change of Q over the last 5% of episodes.
  double max_delta_last_5pct = 0.0;
  std::vector<EpisodeStats> per_episode;

  nlohmann::json summary_json() const;
};

struct TrainResult {
  QTable table;
  TrainReport report;
};

/// Offline training against simulated super-interval episodes.
TrainResult train(const SystemParams& sys, const ProgramSpec& prog, const TransitionModel& env,
                  const HarvestConfig& harvest, const TrainConfig& cfg);

/// One bit per state, 1 = checkpoint, packed LSB-first in state-index order.
class ActionBitTable {
public:
  ActionBitTable(int S, int B);

  const StateSpace& space() const { return space_; }
  int S() const { return space_.S; }
  int B() const { return space_.B; }
  std::size_t bit_count() const { return space_.size(); }
  std::size_t byte_count() const { return bytes_.size(); }
  std::span<const std::uint8_t> bytes() const { return bytes_; }

  bool get(const MdpState& s) const { return get(state_index(s, space_.S, space_.B)); }
  bool get(std::size_t index) const { return (bytes_[index >> 3] >> (index & 7)) & 1u; }
  void set(std::size_t index, bool v);
  std::size_t popcount() const;

  static constexpr std::size_t kHeaderBytes = 16;
  std::vector<std::uint8_t> serialize() const;
  static ActionBitTable deserialize(std::span<const std::uint8_t> data);

  friend bool operator==(const ActionBitTable&, const ActionBitTable&) = default;

private:
  StateSpace space_;
  std::vector<std::uint8_t> bytes_;
};

/// bit(s) = 1 iff Q(s, chpt) < Q(s, proc).
ActionBitTable extract_action_bits(const QTable& q);

void write_action_bits(const std::filesystem::path& path, const ActionBitTable& table);
ActionBitTable read_action_bits(const std::filesystem::path& path);

struct QTableFileHeader {
  int S = 0;
  int B = 0;
  std::int64_t episodes = 0;
  std::uint64_t seed = 0;
  double gamma = 1.0;
};

/// Writes `<path>` (JSON header) and `<path>.bin` (little-endian f64 values).
void write_qtable(const std::filesystem::path& path, const QTable& q, const QTableFileHeader& header);
QTable read_qtable(const std::filesystem::path& path, QTableFileHeader* header = nullptr);

}  // namespace ickpt
