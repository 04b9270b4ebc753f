#include "ickpt/qlearning.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace ickpt {

using nlohmann::json;

// ---------------------------------------------------------------------------
// QTable

QTable::QTable(int S, int B) : space_{S, B} {
  if (S < 2 || B < 2) throw std::invalid_argument("Q-table needs S >= 2 and B >= 2");
  values_.assign(space_.size() * 2, 0.0);
  visits_.assign(space_.size() * 2, 0);
}

double QTable::min_value(const MdpState& s) const {
  const std::size_t i = state_index(s, space_.S, space_.B) * 2;
  return std::min(values_[i], values_[i + 1]);
}

Action QTable::greedy(const MdpState& s) const {
  const std::size_t i = state_index(s, space_.S, space_.B) * 2;
  return values_[i + 1] < values_[i] ? Action::chpt : Action::proc;
}

double QTable::coverage() const {
  std::size_t seen = 0;
  for (std::size_t i = 0; i < space_.size(); ++i) seen += (visits_[2 * i] | visits_[2 * i + 1]) != 0;
  return static_cast<double>(seen) / static_cast<double>(space_.size());
}

double QTable::reachable_coverage() const {
  std::size_t seen = 0, total = 0;
  for (std::size_t i = 0; i < space_.size(); ++i) {
    const MdpState s = state_of_index(i, space_.S, space_.B);
    if (s.c > s.p) continue;
    ++total;
    seen += (visits_[2 * i] | visits_[2 * i + 1]) != 0;
  }
  return total ? static_cast<double>(seen) / static_cast<double>(total) : 0.0;
}

// ---------------------------------------------------------------------------
// Configuration

std::vector<std::string> TrainConfig::problems() const {
  std::vector<std::string> p;
  if (!(gamma > 0.0 && gamma <= 1.0)) p.push_back("train.gamma: must be in (0, 1]");
  if (!(epsilon_end > 0.0)) p.push_back("train.epsilon_end: must be positive");
  if (!(epsilon_end <= epsilon_start)) p.push_back("train.epsilon_end: must not exceed epsilon_start");
  if (!(epsilon_start < 1.0)) p.push_back("train.epsilon_start: must be below 1");
  if (episodes < 0) p.push_back("train.episodes: must be non-negative");
  if (!std::isfinite(warmup_max_s)) p.push_back("train.warmup_max_s: must be finite");
  return p;
}

void TrainConfig::validate() const {
  auto p = problems();
  if (!p.empty()) throw ConfigError(std::move(p));
}

double TrainConfig::epsilon_at(std::int64_t episode) const {
  if (episodes <= 1) return epsilon_start;
  const double frac = static_cast<double>(episode) / static_cast<double>(episodes - 1);
  if (epsilon_decay == EpsilonSchedule::multiplicative)
    return epsilon_start * std::pow(epsilon_end / epsilon_start, frac);
  return epsilon_start + (epsilon_end - epsilon_start) * frac;
}

json to_json(const TrainConfig& c) {
  return json{{"gamma", c.gamma},
              {"epsilon_start", c.epsilon_start},
              {"epsilon_end", c.epsilon_end},
              {"epsilon_decay", c.epsilon_decay == EpsilonSchedule::linear ? "linear" : "multiplicative"},
              {"episodes", c.episodes},
              {"seed", c.seed},
              {"warmup_max_s", c.warmup_max_s}};
}

namespace {

template <class T>
void read_field(const json& j, const std::string& prefix, const std::string& key, T& out,
                std::vector<std::string>& problems) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) {
      problems.push_back(prefix + key + ": integer expected");
      return;
    }
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) {
      problems.push_back(prefix + key + ": number expected");
      return;
    }
  }
  try {
    out = v.get<T>();
  } catch (const json::exception&) {
    problems.push_back(prefix + key + ": wrong type");
  }
}

void reject_unknown(const json& j, const std::string& prefix, std::initializer_list<const char*> known,
                    std::vector<std::string>& problems) {
  if (!j.is_object()) {
    problems.push_back(prefix + ": expected a JSON object");
    return;
  }
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      problems.push_back(prefix + key + ": unknown key");
  }
}

}  // namespace

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  std::vector<std::string> problems;
  reject_unknown(j, "train.",
                 {"gamma", "epsilon_start", "epsilon_end", "epsilon_decay", "episodes", "seed", "warmup_max_s"},
                 problems);
  if (j.is_object()) {
    read_field(j, "train.", "gamma", c.gamma, problems);
    read_field(j, "train.", "epsilon_start", c.epsilon_start, problems);
    read_field(j, "train.", "epsilon_end", c.epsilon_end, problems);
    read_field(j, "train.", "episodes", c.episodes, problems);
    read_field(j, "train.", "seed", c.seed, problems);
    read_field(j, "train.", "warmup_max_s", c.warmup_max_s, problems);
    if (j.contains("epsilon_decay")) {
      const auto& v = j.at("epsilon_decay");
      if (v == "linear")
        c.epsilon_decay = EpsilonSchedule::linear;
      else if (v == "multiplicative")
        c.epsilon_decay = EpsilonSchedule::multiplicative;
      else
        problems.push_back("train.epsilon_decay: must be \"linear\" or \"multiplicative\"");
    }
  }
  for (auto& s : c.problems()) problems.push_back(std::move(s));
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

std::vector<std::string> HarvestConfig::problems() const {
  std::vector<std::string> p;
  if (!(sample_period_s > 0.0)) p.push_back("harvest.sample_period_s: must be positive");
  if (!(mean_power_mw > 0.0)) p.push_back("harvest.mean_power_mw: must be positive");
  return p;
}

json to_json(const HarvestConfig& h) {
  return json{{"sample_period_s", h.sample_period_s},
              {"mean_power_mw", h.mean_power_mw},
              {"initial_level_index", h.initial_level_index}};
}

HarvestConfig harvest_config_from_json(const json& j) {
  HarvestConfig h;
  std::vector<std::string> problems;
  reject_unknown(j, "harvest.", {"sample_period_s", "mean_power_mw", "initial_level_index"}, problems);
  if (j.is_object()) {
    read_field(j, "harvest.", "sample_period_s", h.sample_period_s, problems);
    read_field(j, "harvest.", "mean_power_mw", h.mean_power_mw, problems);
    read_field(j, "harvest.", "initial_level_index", h.initial_level_index, problems);
  }
  for (auto& s : h.problems()) problems.push_back(std::move(s));
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return h;
}

// ---------------------------------------------------------------------------
// Learning

void q_update(QTable& q, const MdpState& s, Action a, double cost, const MdpState& s_next, double gamma) {
  const std::uint32_t n = q.record_visit(s, a);
  const double alpha = 1.0 / static_cast<double>(n);
  double& entry = q.value(s, a);
  entry += alpha * (cost + gamma * q.min_value(s_next) - entry);
}

Action choose_action(const QTable& q, const MdpState& s, double epsilon, Rng& rng) {
  if (rng.uniform() < epsilon) return rng.below(2) ? Action::chpt : Action::proc;
  return q.greedy(s);
}

json TrainReport::summary_json() const {
  double tail_cost = 0.0;
  const std::size_t tail = std::max<std::size_t>(1, per_episode.size() / 20);
  if (!per_episode.empty()) {
    for (std::size_t i = per_episode.size() - tail; i < per_episode.size(); ++i) tail_cost += per_episode[i].cost;
    tail_cost /= static_cast<double>(tail);
  }
  return json{{"episodes", episodes},
              {"final_epsilon", final_epsilon},
              {"visit_coverage_pct", coverage * 100.0},
              {"reachable_visit_coverage_pct", reachable_coverage * 100.0},
              {"max_q_delta_last_5pct", max_delta_last_5pct},
              {"mean_episode_cost_last_5pct", tail_cost}};
}

TrainResult train(const SystemParams& sys, const ProgramSpec& prog, const TransitionModel& env_model,
                  const HarvestConfig& harvest, const TrainConfig& cfg) {
  sys.validate();
  prog.validate();
  cfg.validate();
  if (auto p = harvest.problems(); !p.empty()) throw ConfigError(std::move(p));

  const int S = static_cast<int>(sys.super_interval);
  const int B = static_cast<int>(sys.battery_levels);
  TrainResult result{QTable(S, B), {}};
  QTable& q = result.table;
  TrainReport& report = result.report;
  report.episodes = cfg.episodes;
  report.final_epsilon = cfg.episodes > 0 ? cfg.epsilon_at(cfg.episodes - 1) : cfg.epsilon_start;
  if (cfg.episodes == 0) return result;

  const CostModel costs(sys, prog, /*charge_lookup=*/true);
  const double scale = harvest_scale(env_model, harvest.mean_power_mw);
  const double mean_rate_nj_s = harvest.mean_power_mw * 1e6;
  const double warmup_max = cfg.warmup_max_s > 0.0 ? cfg.warmup_max_s : 2.0 * costs.capacity_nj / mean_rate_nj_s;
  // Generous per-episode budget; training never legitimately needs more.
  const double watchdog = 1e9;

  Environment env(costs.capacity_nj, costs.capacity_nj,
                  PowerSource::markov(env_model, harvest.sample_period_s, scale, derive_seed(cfg.seed, 1),
                                      harvest.initial_level_index),
                  watchdog);
  Rng rng(derive_seed(cfg.seed, 2));

  const std::int64_t t_cp = costs.checkpoint.latency_cycles;
  const auto rollback_cycles = [&](const MdpState& s) {
    return static_cast<double>(immediate_cost(s, Action::proc, true, t_cp, sys.interval_insts)) * sys.cpi;
  };
  const double wake = costs.default_wake_nj();

  const std::int64_t snapshot_at = cfg.episodes - std::max<std::int64_t>(1, (cfg.episodes + 19) / 20);
  std::vector<double> snapshot;
  report.per_episode.reserve(static_cast<std::size_t>(cfg.episodes));

  for (std::int64_t ep = 0; ep < cfg.episodes; ++ep) {
    if (ep == snapshot_at) snapshot.assign(q.values().begin(), q.values().end());
    EpisodeStats stats;
    stats.epsilon = cfg.epsilon_at(ep);

    env.set_energy(0.0);
    env.idle(rng.uniform() * warmup_max);

    MdpState s{0, 0, sys.battery_level(env.energy_nj())};
    const double episode_start = env.time_s();
    while (s.p < S - 1) {
      const Action a = choose_action(q, s, stats.epsilon, rng);
      bool failure = false;
      bool aborted = false;
      if (a == Action::chpt) {
        if (!attempt_checkpoint(env, costs).ok) failure = aborted = true;
      }
      if (!failure) failure = !attempt_execute(env, costs, 1.0, 0.0).ok;
      if (failure) {
        ++stats.failures;
        do {
          env.charge_until(wake);
        } while (!attempt_restore(env, costs).ok);
      }
      const int b_next = sys.battery_level(env.energy_nj());

      MdpState next;
      double cost;
      if (aborted) {
        // the checkpoint never committed: roll back to the old CC
        next = next_state(q.space(), s, Action::proc, true, b_next);
        cost = static_cast<double>(t_cp) + rollback_cycles(s);
      } else {
        next = next_state(q.space(), s, a, failure, b_next);
        cost = a == Action::chpt ? static_cast<double>(t_cp) : (failure ? rollback_cycles(s) : 0.0);
      }
      q_update(q, s, a, cost, next, cfg.gamma);
      stats.cost += cost;
      ++stats.steps;
      s = next;
      if (env.time_s() - episode_start > 1e6) throw NoProgressError();
    }
    report.per_episode.push_back(stats);
  }

  for (std::size_t i = 0; i < snapshot.size(); ++i)
    report.max_delta_last_5pct = std::max(report.max_delta_last_5pct, std::abs(q.values()[i] - snapshot[i]));
  report.coverage = q.coverage();
  report.reachable_coverage = q.reachable_coverage();
  return result;
}

// ---------------------------------------------------------------------------
// Action bits

ActionBitTable::ActionBitTable(int S, int B) : space_{S, B} {
  if (S < 2 || B < 2) throw std::invalid_argument("action-bit table needs S >= 2 and B >= 2");
  bytes_.assign((space_.size() + 7) / 8, 0);
}

void ActionBitTable::set(std::size_t index, bool v) {
  if (index >= bit_count()) throw std::out_of_range("action bit index out of range");
  const auto mask = static_cast<std::uint8_t>(1u << (index & 7));
  if (v)
    bytes_[index >> 3] |= mask;
  else
    bytes_[index >> 3] &= static_cast<std::uint8_t>(~mask);
}

std::size_t ActionBitTable::popcount() const {
  std::size_t n = 0;
  for (auto b : bytes_) n += static_cast<std::size_t>(std::popcount(b));
  return n;
}

namespace {

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32le(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_all(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

}  // namespace

std::vector<std::uint8_t> ActionBitTable::serialize() const {
  std::vector<std::uint8_t> out = {'A', 'B', 'T', '1'};
  out.reserve(kHeaderBytes + bytes_.size());
  put_u32le(out, static_cast<std::uint32_t>(space_.S));
  put_u32le(out, static_cast<std::uint32_t>(space_.B));
  put_u32le(out, 0);
  out.insert(out.end(), bytes_.begin(), bytes_.end());
  return out;
}

ActionBitTable ActionBitTable::deserialize(std::span<const std::uint8_t> data) {
  if (data.size() < kHeaderBytes) throw std::runtime_error("action-bit file truncated header");
  if (!(data[0] == 'A' && data[1] == 'B' && data[2] == 'T' && data[3] == '1'))
    throw std::runtime_error("action-bit file: bad magic (expected ABT1)");
  const std::uint32_t S = get_u32le(data, 4);
  const std::uint32_t B = get_u32le(data, 8);
  if (get_u32le(data, 12) != 0) throw std::runtime_error("action-bit file: reserved bytes must be zero");
  if (S < 2 || B < 2 || S > 65536 || B > 65536) throw std::runtime_error("action-bit file: bad dimensions");
  ActionBitTable t(static_cast<int>(S), static_cast<int>(B));
  if (data.size() != kHeaderBytes + t.bytes_.size())
    throw std::runtime_error("action-bit file: payload size mismatch");
  std::copy(data.begin() + kHeaderBytes, data.end(), t.bytes_.begin());
  return t;
}

ActionBitTable extract_action_bits(const QTable& q) {
  ActionBitTable t(q.S(), q.B());
  const auto v = q.values();
  const std::size_t n = q.space().size();
  for (std::size_t i = 0; i < n; ++i)
    if (v[2 * i + 1] < v[2 * i]) t.set(i, true);
  return t;
}

void write_action_bits(const std::filesystem::path& path, const ActionBitTable& table) {
  write_all(path, table.serialize());
}

ActionBitTable read_action_bits(const std::filesystem::path& path) { return ActionBitTable::deserialize(read_all(path)); }

// ---------------------------------------------------------------------------
// Q-table files

void write_qtable(const std::filesystem::path& path, const QTable& q, const QTableFileHeader& h) {
  std::filesystem::path bin = path;
  bin += ".bin";
  json header{{"S", h.S},
              {"B", h.B},
              {"episodes", h.episodes},
              {"seed", h.seed},
              {"gamma", h.gamma},
              {"values_file", bin.filename().string()},
              {"value_encoding", "f64le"},
              {"order", "state_major_action_minor"}};
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << header.dump(2) << '\n';
  }
  std::vector<std::uint8_t> data;
  data.reserve(q.values().size() * 8);
  for (double v : q.values()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) data.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  write_all(bin, data);
}

QTable read_qtable(const std::filesystem::path& path, QTableFileHeader* header_out) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("Q-table header: " + std::string(e.what()));
  }
  QTableFileHeader h;
  h.S = j.at("S").get<int>();
  h.B = j.at("B").get<int>();
  h.episodes = j.value("episodes", std::int64_t{0});
  h.seed = j.value("seed", std::uint64_t{0});
  h.gamma = j.value("gamma", 1.0);
  const auto bin = path.parent_path() / j.at("values_file").get<std::string>();
  const auto data = read_all(bin);
  QTable q(h.S, h.B);
  if (data.size() != q.values().size() * 8) throw std::runtime_error("Q-table sidecar size mismatch");
  auto values = q.values();
  for (std::size_t k = 0; k < values.size(); ++k) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(data[8 * k + i]) << (8 * i);
    values[k] = std::bit_cast<double>(bits);
  }
  if (header_out) *header_out = h;
  return q;
}

}  // namespace ickpt
