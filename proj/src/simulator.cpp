#include "ickpt/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <ostream>

#include "ickpt/text.hpp"

namespace ickpt {

int BatteryState::level(int B) const {
  if (capacity_nj <= 0.0 || B < 1) throw std::invalid_argument("invalid battery");
  const double lv = std::floor(energy_nj * B / capacity_nj);
  return static_cast<int>(std::clamp(lv, 0.0, static_cast<double>(B - 1)));
}

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::interval_done: return "interval_done";
    case EventKind::checkpoint: return "checkpoint";
    case EventKind::failure: return "failure";
    case EventKind::rollback: return "rollback";
    case EventKind::restore: return "restore";
    case EventKind::power_off: return "power_off";
    case EventKind::power_on: return "power_on";
  }
  return "?";
}

nlohmann::json SimResult::summary_json() const {
  return nlohmann::json{{"policy", policy},
                        {"seed", seed},
                        {"baseline_time_s", baseline_time_s},
                        {"exec_time_s", exec_time_s},
                        {"normalized_runtime", normalized_runtime()},
                        {"busy_time_s", busy_time_s},
                        {"off_time_s", off_time_s},
                        {"n_checkpoints", n_checkpoints},
                        {"n_rollbacks", n_rollbacks},
                        {"n_failures", n_failures},
                        {"rollback_cost_s", rollback_cost_s},
                        {"energy",
                         {{"initial_nj", energy.initial_nj},
                          {"harvested_nj", energy.harvested_nj},
                          {"absorbed_nj", energy.absorbed_nj},
                          {"consumed_nj", energy.consumed_nj},
                          {"final_nj", energy.final_nj}}}};
}

std::vector<std::string> RunConfig::problems() const {
  std::vector<std::string> p;
  if (!(max_sim_time_s > 0.0)) p.push_back("run.max_sim_time_s: must be positive");
  if (!(initial_battery_fraction >= 0.0 && initial_battery_fraction <= 1.0))
    p.push_back("run.initial_battery_fraction: must be in [0, 1]");
  if (const auto* t = std::get_if<PowerTrace>(&source)) {
    if (t->samples_mw.empty()) p.push_back("run.trace: empty trace");
  } else {
    for (auto& s : std::get<MarkovSource>(source).harvest.problems()) p.push_back(std::move(s));
  }
  return p;
}

double baseline_time(const ProgramSpec& prog, const SystemParams& sys) {
  return static_cast<double>(prog.total_insts) * sys.cpi / sys.clock_hz;
}

namespace {

PowerSource make_source(const RunConfig& cfg) {
  if (const auto* t = std::get_if<PowerTrace>(&cfg.source)) return PowerSource::replay(*t);
  const auto& m = std::get<MarkovSource>(cfg.source);
  return PowerSource::markov(m.model, m.harvest.sample_period_s, harvest_scale(m.model, m.harvest.mean_power_mw),
                             cfg.seed, m.harvest.initial_level_index);
}

class Engine {
public:
  Engine(const ProgramSpec& prog, const Policy& policy, const SystemParams& sys, const RunConfig& cfg)
      : prog_(prog),
        policy_(policy),
        sys_(sys),
        cfg_(cfg),
        costs_(sys, prog, std::holds_alternative<QLearnPolicy>(policy)),
        env_(costs_.capacity_nj, costs_.capacity_nj * cfg.initial_battery_fraction, make_source(cfg),
             cfg.max_sim_time_s),
        S_(static_cast<int>(sys.super_interval)),
        N_(sys.interval_insts) {
    result_.policy = policy_name(policy);
    result_.seed = cfg.seed;
    result_.baseline_time_s = baseline_time(prog, sys);
  }

  SimResult run() {
    if (std::holds_alternative<ConservativePolicy>(policy_))
      run_conservative();
    else
      run_boundary();
    result_.exec_time_s = env_.time_s();
    result_.energy = {env_.initial_energy_nj(), env_.harvested_nj(), env_.absorbed_nj(), env_.consumed_nj(),
                      env_.energy_nj()};
    return std::move(result_);
  }

private:
  double progress_insts() const {
    const double done = (static_cast<double>(base_ + p_) + partial_) * static_cast<double>(N_);
    return std::min(done, static_cast<double>(prog_.total_insts));
  }
  bool finished() const { return progress_insts() >= static_cast<double>(prog_.total_insts); }
  /// Fraction of an interval still needed by the program.
  double remaining_fraction() const {
    const double left = static_cast<double>(prog_.total_insts) - progress_insts();
    return std::min(1.0 - partial_, left / static_cast<double>(N_));
  }

  void emit(EventKind k) {
    if (!cfg_.record_events) return;
    result_.events.push_back({env_.time_s(), k, base_ + p_, base_ + c_, env_.energy_nj(), progress_insts()});
  }

  bool want_checkpoint() {
    if (p_ == S_ - 1) return true;
    if (const auto* q = std::get_if<QLearnPolicy>(&policy_)) {
      const MdpState s{p_, c_, sys_.battery_level(env_.energy_nj())};
      return q_decide(*q->table, s).kind == PolicyDecision::Kind::checkpoint;
    }
    const auto& per = std::get<PeriodicPolicy>(policy_);
    return periodic_decide(since_cp_, per.cfg).kind == PolicyDecision::Kind::checkpoint;
  }

  /// Returns false if the checkpoint aborted (already handled as a failure).
  bool checkpoint(double wake_nj) {
    const Attempt a = attempt_checkpoint(env_, costs_);
    result_.busy_time_s += a.elapsed_s;
    if (!a.ok) {
      fail(a.elapsed_s, wake_nj);
      return false;
    }
    c_ = p_;
    c_partial_ = partial_;
    since_cp_ = 0;
    ++result_.n_checkpoints;
    emit(EventKind::checkpoint);
    if (p_ == S_ - 1 && partial_ == 0.0) {
      // mandatory super-interval checkpoint: bank the progress
      base_ += p_;
      p_ = c_ = 0;
    }
    return true;
  }

  void fail(double wasted_s, double wake_nj) {
    ++result_.n_failures;
    emit(EventKind::failure);
    const double lost = static_cast<double>(p_ - c_) + (partial_ - c_partial_);
    result_.rollback_cost_s += lost * costs_.interval_s + wasted_s;
    ++result_.n_rollbacks;
    p_ = c_;
    partial_ = c_partial_;
    since_cp_ = 0;
    emit(EventKind::rollback);
    recover(wake_nj);
  }

  void recover(double wake_nj) {
    for (;;) {
      emit(EventKind::power_off);
      result_.off_time_s += env_.charge_until(wake_nj);
      emit(EventKind::power_on);
      const Attempt a = attempt_restore(env_, costs_);
      result_.busy_time_s += a.elapsed_s;
      if (a.ok) break;
    }
    emit(EventKind::restore);
  }

  void run_boundary() {
    if (const auto* q = std::get_if<QLearnPolicy>(&policy_)) {
      if (!q->table) throw std::invalid_argument("qlearn policy needs an action table");
      if (q->table->S() != S_ || q->table->B() != sys_.battery_levels)
        throw std::invalid_argument("action table dimensions do not match the system parameters");
    }
    const double wake = costs_.default_wake_nj();
    while (!finished()) {
      if (want_checkpoint() && !checkpoint(wake)) continue;
      const Attempt a = attempt_execute(env_, costs_, remaining_fraction(), 0.0);
      result_.busy_time_s += a.elapsed_s;
      if (!a.ok) {
        fail(a.elapsed_s, wake);
        continue;
      }
      ++p_;
      since_cp_ += N_;
      emit(EventKind::interval_done);
    }
  }

  void run_conservative() {
    const ConservativeConfig& cc = std::get<ConservativePolicy>(policy_).cfg;
    const double wake = cc.wake_energy_nj();
    if (conservative_decide(env_.energy_nj(), false, cc).kind != PolicyDecision::Kind::proceed) {
      // cold start: nothing to restore yet
      emit(EventKind::power_off);
      result_.off_time_s += env_.charge_until(wake);
      emit(EventKind::power_on);
    }
    while (!finished()) {
      if (p_ == S_ - 1 && partial_ == 0.0) {
        checkpoint(wake);
        continue;
      }
      const auto d = conservative_decide(env_.energy_nj(), true, cc);
      if (d.kind == PolicyDecision::Kind::proceed) {
        const double frac = remaining_fraction();
        const Attempt a = attempt_execute(env_, costs_, frac, cc.low_threshold_nj);
        result_.busy_time_s += a.elapsed_s;
        if (a.ok) {
          ++p_;
          partial_ = 0.0;
          emit(EventKind::interval_done);
          continue;
        }
        partial_ += a.elapsed_s / costs_.interval_s;
      }
      // energy fell below the low threshold: save everything and sleep
      if (!checkpoint(d.wake_energy_nj > 0.0 ? d.wake_energy_nj : wake)) continue;
      recover(wake);
    }
  }

  const ProgramSpec& prog_;
  const Policy& policy_;
  const SystemParams& sys_;
  const RunConfig& cfg_;
  CostModel costs_;
  Environment env_;
  int S_;
  std::int64_t N_;

  std::int64_t base_ = 0;  // intervals banked by completed super-intervals
  int p_ = 0;
  int c_ = 0;
  double partial_ = 0.0;  // conservative only: fraction of interval p done
  double c_partial_ = 0.0;
  std::int64_t since_cp_ = 0;
  SimResult result_;
};

}  // namespace

SimResult run(const ProgramSpec& prog, const Policy& policy, const SystemParams& sys, const RunConfig& cfg) {
  sys.validate();
  prog.validate();
  if (auto p = cfg.problems(); !p.empty()) throw ConfigError(std::move(p));
  if (const auto* per = std::get_if<PeriodicPolicy>(&policy)) {
    if (auto p = per->cfg.problems(); !p.empty()) throw ConfigError(std::move(p));
  }
  if (const auto* con = std::get_if<ConservativePolicy>(&policy)) {
    if (auto p = con->cfg.problems(); !p.empty()) throw ConfigError(std::move(p));
  }
  return Engine(prog, policy, sys, cfg).run();
}

void write_events_csv(std::ostream& out, const SimResult& r) {
  out << "time_s,kind,prc,cc,battery_nj\n";
  for (const auto& e : r.events)
    out << format_double(e.time_s) << ',' << to_string(e.kind) << ',' << e.prc << ',' << e.cc << ','
        << format_double(e.battery_nj) << '\n';
}

namespace {

ComparisonRow run_job(const ProgramSpec& prog, const NamedPolicy& np, const SystemParams& sys, RunConfig cfg,
                      std::uint64_t seed) {
  cfg.seed = seed;
  cfg.record_events = false;
  ComparisonRow row{np.name, seed, run(prog, np.policy, sys, cfg)};
  row.result.policy = np.name;
  return row;
}

}  // namespace

std::vector<ComparisonRow> compare_serial(const ProgramSpec& prog, const std::vector<NamedPolicy>& policies,
                                          const SystemParams& sys, const RunConfig& base,
                                          const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw std::invalid_argument("compare needs at least one seed");
  std::vector<ComparisonRow> rows;
  rows.reserve(policies.size() * seeds.size());
  for (const auto& np : policies)
    for (auto seed : seeds) rows.push_back(run_job(prog, np, sys, base, seed));
  return rows;
}

std::vector<ComparisonRow> compare(const ProgramSpec& prog, const std::vector<NamedPolicy>& policies,
                                   const SystemParams& sys, const RunConfig& base,
                                   const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw std::invalid_argument("compare needs at least one seed");
  const auto n_jobs = static_cast<std::int64_t>(policies.size() * seeds.size());
  std::vector<ComparisonRow> rows(static_cast<std::size_t>(n_jobs));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_jobs));

#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t k = 0; k < n_jobs; ++k) {
    const auto i = static_cast<std::size_t>(k);
    try {
      rows[i] = run_job(prog, policies[i / seeds.size()], sys, base, seeds[i % seeds.size()]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return rows;
}

std::vector<PolicySummary> summarize(const std::vector<ComparisonRow>& rows) {
  std::vector<PolicySummary> out;
  std::map<std::string, std::size_t> index;
  std::vector<std::size_t> counts;
  for (const auto& r : rows) {
    auto [it, inserted] = index.try_emplace(r.policy, out.size());
    if (inserted) {
      out.push_back({r.policy});
      counts.push_back(0);
    }
    auto& s = out[it->second];
    ++counts[it->second];
    s.mean_normalized_runtime += r.result.normalized_runtime();
    s.mean_checkpoints += static_cast<double>(r.result.n_checkpoints);
    s.mean_rollback_cost_s += r.result.rollback_cost_s;
    s.mean_off_time_s += r.result.off_time_s;
    s.total_rollbacks += r.result.n_rollbacks;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto n = static_cast<double>(counts[i]);
    out[i].mean_normalized_runtime /= n;
    out[i].mean_checkpoints /= n;
    out[i].mean_rollback_cost_s /= n;
    out[i].mean_off_time_s /= n;
  }
  return out;
}

}  // namespace ickpt
