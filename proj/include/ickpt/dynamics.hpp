#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <variant>

#include "ickpt/energy_model.hpp"
#include "ickpt/rng.hpp"
#include "ickpt/system_model.hpp"

namespace ickpt {

/// Raised when the watchdog expires before the program (or an episode)
/// can make progress, e.g. on an all-zero trace.
class NoProgressError : public std::runtime_error {
public:
  NoProgressError() : std::runtime_error("no forward progress") {}
};

/// Piecewise-constant harvested power, read forward in time.
///
/// Either replays a fixed trace (wrapping around at the end) or draws
/// samples on the fly from a Markov chain.
class PowerSource {
public:
  static PowerSource replay(PowerTrace trace);
  /// `scale` multiplies every level (see harvest_scale()).
  static PowerSource markov(TransitionModel model, double sample_period_s, double scale, std::uint64_t seed,
                            std::size_t initial_level_index);

  double sample_period_s() const { return period_s_; }
  /// Power of segment `k`; k must not decrease between calls.
  double power_mw(std::uint64_t k);

private:
  struct Replay {
    std::shared_ptr<const PowerTrace> trace;
  };
  struct Markov {
    std::shared_ptr<const TransitionModel> model;
    double scale = 1.0;
    Rng rng{0};
    std::size_t state = 0;
    std::uint64_t segment = 0;
  };
  PowerSource(double period, std::variant<Replay, Markov> src) : period_s_(period), src_(std::move(src)) {}

  double period_s_;
  std::variant<Replay, Markov> src_;
};

/// Multiplier that maps a chain's levels to the configured mean harvest.
double harvest_scale(const TransitionModel& model, double target_mean_mw);

/// Per-configuration energy and latency figures derived from SystemParams
/// and ProgramSpec.
struct CostModel {
  double run_power_mw = 0.0;
  double interval_s = 0.0;
  double interval_energy_nj = 0.0;
  double extra_interval_nj = 0.0;  // lookup + shadow-log bookkeeping per interval
  Cost checkpoint;
  Cost restore;
  double cycle_s = 0.0;
  double capacity_nj = 0.0;

  CostModel(const SystemParams& sys, const ProgramSpec& prog, bool charge_lookup);

  double checkpoint_s() const { return static_cast<double>(checkpoint.latency_cycles) * cycle_s; }
  double restore_s() const { return static_cast<double>(restore.latency_cycles) * cycle_s; }
  /// Wake threshold after a failure: restore plus one interval, capped at
  /// the battery capacity.
  double default_wake_nj() const;
};

/// Battery + harvester + clock. Every operation advances time and keeps
/// 0 <= energy <= capacity.
class Environment {
public:
  Environment(double capacity_nj, double initial_energy_nj, PowerSource source, double watchdog_s);

  double time_s() const { return time_s_; }
  double energy_nj() const { return energy_nj_; }
  double capacity_nj() const { return capacity_nj_; }
  void set_energy(double nj);

  struct Drain {
    double elapsed_s = 0.0;
    bool hit_floor = false;
  };
  /// Runs a constant load for `duration_s`, stopping early when the stored
  /// energy would drop below `floor_nj`.
  Drain run_load(double duration_s, double load_mw, double floor_nj);
  /// Stays powered off until the stored energy reaches `target_nj`.
  /// Returns the off time.
  double charge_until(double target_nj);
  void idle(double duration_s);
  /// Instantaneous draw; on shortfall the battery empties and false is returned.
  bool consume_lump(double nj);

  // Energy ledger: energy_nj() == initial + absorbed - consumed.
  double harvested_nj() const { return harvested_nj_; }
  double absorbed_nj() const { return absorbed_nj_; }
  double consumed_nj() const { return consumed_nj_; }
  double initial_energy_nj() const { return initial_nj_; }

private:
  void check_watchdog() const;

  double capacity_nj_;
  double energy_nj_;
  double initial_nj_;
  PowerSource source_;
  double time_s_ = 0.0;
  std::uint64_t segment_ = 0;
  double watchdog_s_;
  double harvested_nj_ = 0.0;
  double absorbed_nj_ = 0.0;
  double consumed_nj_ = 0.0;
};

/// Outcome of a checkpoint, restore or interval attempt.
struct Attempt {
  bool ok = true;
  double elapsed_s = 0.0;
};

Attempt attempt_checkpoint(Environment& env, const CostModel& costs);
Attempt attempt_restore(Environment& env, const CostModel& costs);
/// Executes `insts` instructions (a full interval unless the program ends
/// early). Fails when the battery would empty, or stops at `floor_nj`.
Attempt attempt_execute(Environment& env, const CostModel& costs, double insts_fraction, double floor_nj);

}  // namespace ickpt
