#include "ickpt/dynamics.hpp"

#include <algorithm>
#include <cmath>

namespace ickpt {

namespace {
constexpr double kNjPerMwSecond = 1e6;
}

PowerSource PowerSource::replay(PowerTrace trace) {
  if (trace.samples_mw.empty()) throw std::invalid_argument("empty trace");
  trace.validate();
  const double period = trace.sample_period_s;
  return PowerSource(period, Replay{std::make_shared<const PowerTrace>(std::move(trace))});
}

PowerSource PowerSource::markov(TransitionModel model, double sample_period_s, double scale, std::uint64_t seed,
                                std::size_t initial_level_index) {
  if (!(sample_period_s > 0.0)) throw std::invalid_argument("sample period must be positive");
  if (!(scale >= 0.0)) throw std::invalid_argument("harvest scale must be non-negative");
  if (initial_level_index >= model.size()) throw std::invalid_argument("initial level index out of range");
  Markov m;
  m.model = std::make_shared<const TransitionModel>(std::move(model));
  m.scale = scale;
  m.rng = Rng(seed);
  m.state = initial_level_index;
  return PowerSource(sample_period_s, std::move(m));
}

double PowerSource::power_mw(std::uint64_t k) {
  if (auto* r = std::get_if<Replay>(&src_)) {
    const auto& s = r->trace->samples_mw;
    return s[k % s.size()];
  }
  auto& m = std::get<Markov>(src_);
  const auto& probs = m.model->probs();
  // same draw procedure as generate_trace, one step per segment
  while (m.segment < k) {
    const double u = m.rng.uniform();
    double acc = 0.0;
    std::size_t next = m.model->size() - 1;
    for (std::size_t j = 0; j < m.model->size(); ++j) {
      acc += probs[m.state][j];
      if (u < acc) {
        next = j;
        break;
      }
    }
    while (probs[m.state][next] == 0.0 && next > 0) --next;
    m.state = next;
    ++m.segment;
  }
  return m.model->levels()[m.state] * m.scale;
}

double harvest_scale(const TransitionModel& model, double target_mean_mw) {
  const double mean = model.stationary_mean_mw();
  if (!(mean > 0.0)) throw std::invalid_argument("cannot scale zero trace");
  return target_mean_mw / mean;
}

CostModel::CostModel(const SystemParams& sys, const ProgramSpec& prog, bool charge_lookup) {
  const auto demand = interval_demand(sys);
  run_power_mw = sys.run_power_mw();
  interval_s = demand.duration_s;
  interval_energy_nj = demand.energy_nj;
  extra_interval_nj = sys.nvm_log_energy_per_interval + (charge_lookup ? sys.nvm_read_energy_per_word * 1e-3 : 0.0);
  checkpoint = checkpoint_cost(sys, prog);
  restore = restore_cost(sys, prog);
  cycle_s = sys.cycle_s();
  capacity_nj = sys.capacity_nj();
  if (restore.energy_nj >= capacity_nj)
    throw std::invalid_argument("restore energy exceeds battery capacity");
}

double CostModel::default_wake_nj() const {
  return std::min(restore.energy_nj + interval_energy_nj + extra_interval_nj, capacity_nj);
}

Environment::Environment(double capacity_nj, double initial_energy_nj, PowerSource source, double watchdog_s)
    : capacity_nj_(capacity_nj),
      energy_nj_(std::clamp(initial_energy_nj, 0.0, capacity_nj)),
      initial_nj_(energy_nj_),
      source_(std::move(source)),
      watchdog_s_(watchdog_s) {
  if (!(capacity_nj > 0.0)) throw std::invalid_argument("battery capacity must be positive");
  if (!(watchdog_s > 0.0)) throw std::invalid_argument("watchdog must be positive");
}

void Environment::set_energy(double nj) {
  // Treated as an external exchange so the ledger identity still holds.
  const double v = std::clamp(nj, 0.0, capacity_nj_);
  if (v > energy_nj_)
    absorbed_nj_ += v - energy_nj_;
  else
    consumed_nj_ += energy_nj_ - v;
  energy_nj_ = v;
}

void Environment::check_watchdog() const {
  if (time_s_ > watchdog_s_) throw NoProgressError();
}

Environment::Drain Environment::run_load(double duration_s, double load_mw, double floor_nj) {
  Drain d;
  const double period = source_.sample_period_s();
  const double start = time_s_;
  const double end = start + duration_s;
  if (energy_nj_ < floor_nj) {
    d.hit_floor = true;
    return d;
  }
  while (time_s_ < end) {
    const double seg_end = static_cast<double>(segment_ + 1) * period;
    if (seg_end <= time_s_) {
      ++segment_;
      continue;
    }
    const bool to_boundary = seg_end <= end;
    const double stop = to_boundary ? seg_end : end;
    const double dt = stop - time_s_;
    const double p = source_.power_mw(segment_);
    const double rate = (p - load_mw) * kNjPerMwSecond;

    if (rate < 0.0 && energy_nj_ + rate * dt < floor_nj) {
      const double dt_hit = std::max(0.0, (floor_nj - energy_nj_) / rate);
      harvested_nj_ += p * kNjPerMwSecond * dt_hit;
      absorbed_nj_ += p * kNjPerMwSecond * dt_hit;
      consumed_nj_ += load_mw * kNjPerMwSecond * dt_hit;
      energy_nj_ = floor_nj;
      time_s_ += dt_hit;
      d.elapsed_s = time_s_ - start;
      d.hit_floor = true;
      check_watchdog();
      return d;
    }

    const double gained = p * kNjPerMwSecond * dt;
    const double raw = energy_nj_ + rate * dt;
    const double wasted = std::max(0.0, raw - capacity_nj_);
    harvested_nj_ += gained;
    absorbed_nj_ += gained - wasted;
    consumed_nj_ += load_mw * kNjPerMwSecond * dt;
    energy_nj_ = std::clamp(raw, 0.0, capacity_nj_);
    time_s_ = stop;
    if (to_boundary) ++segment_;
  }
  d.elapsed_s = time_s_ - start;
  check_watchdog();
  return d;
}

double Environment::charge_until(double target_nj) {
  const double target = std::min(target_nj, capacity_nj_);
  const double start = time_s_;
  const double period = source_.sample_period_s();
  while (energy_nj_ < target) {
    check_watchdog();
    const double seg_end = static_cast<double>(segment_ + 1) * period;
    if (seg_end <= time_s_) {
      ++segment_;
      continue;
    }
    const double p = source_.power_mw(segment_);
    const double rate = p * kNjPerMwSecond;
    const double need = rate > 0.0 ? (target - energy_nj_) / rate : INFINITY;
    if (need < seg_end - time_s_) {
      harvested_nj_ += target - energy_nj_;
      absorbed_nj_ += target - energy_nj_;
      energy_nj_ = target;
      time_s_ += need;
      break;
    }
    const double dt = seg_end - time_s_;
    harvested_nj_ += rate * dt;
    absorbed_nj_ += rate * dt;
    energy_nj_ = std::min(capacity_nj_, energy_nj_ + rate * dt);
    time_s_ = seg_end;
    ++segment_;
  }
  check_watchdog();
  return time_s_ - start;
}

bool Environment::consume_lump(double nj) {
  if (energy_nj_ < nj) {
    consumed_nj_ += energy_nj_;
    energy_nj_ = 0.0;
    return false;
  }
  consumed_nj_ += nj;
  energy_nj_ -= nj;
  return true;
}

void Environment::idle(double duration_s) { run_load(duration_s, 0.0, 0.0); }

Attempt attempt_checkpoint(Environment& env, const CostModel& costs) {
  const double dur = costs.checkpoint_s();
  if (dur <= 0.0) return {env.consume_lump(costs.checkpoint.energy_nj), 0.0};
  const double load = costs.checkpoint.energy_nj / dur / kNjPerMwSecond;
  auto d = env.run_load(dur, load, 0.0);
  return {!d.hit_floor, d.elapsed_s};
}

Attempt attempt_restore(Environment& env, const CostModel& costs) {
  const double dur = costs.restore_s();
  if (dur <= 0.0) return {env.consume_lump(costs.restore.energy_nj), 0.0};
  const double load = costs.restore.energy_nj / dur / kNjPerMwSecond;
  auto d = env.run_load(dur, load, 0.0);
  return {!d.hit_floor, d.elapsed_s};
}

Attempt attempt_execute(Environment& env, const CostModel& costs, double insts_fraction, double floor_nj) {
  const double dur = costs.interval_s * insts_fraction;
  const double load = costs.run_power_mw + costs.extra_interval_nj / costs.interval_s / kNjPerMwSecond;
  auto d = env.run_load(dur, load, floor_nj);
  return {!d.hit_floor, d.elapsed_s};
}

}  // namespace ickpt
