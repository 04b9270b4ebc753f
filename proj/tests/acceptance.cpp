// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance            criteria 1-10, 12, 13
//   acceptance --slow     criterion 11 (B and S sweeps)

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ickpt/experiment.hpp"
#include "ickpt/rng.hpp"
#include "support/scenarios.hpp"

using namespace ickpt;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome c1_q_update() {
  QTable q(10, 5);
  const MdpState s{3, 1, 2}, n{4, 1, 1};
  q.value(n, Action::proc) = 6;
  q.value(n, Action::chpt) = 7;
  q.value(s, Action::chpt) = 10;
  q_update(q, s, Action::chpt, 2, n, 1.0);
  const double first = q.value(s, Action::chpt);
  q.value(s, Action::chpt) = 10;
  q_update(q, s, Action::chpt, 2, n, 1.0);
  const double second = q.value(s, Action::chpt);

  QTable z(10, 5);
  q_update(z, {0, 0, 0}, Action::proc, 0, {1, 0, 0}, 1.0);
  const bool zero_ok = std::all_of(z.values().begin(), z.values().end(), [](double v) { return v == 0.0; });

  Rng rng(1);
  QTable r(10, 5);
  for (auto& v : r.values()) v = rng.uniform() * 1000;
  int bad = 0;
  for (int t = 0; t < 1000; ++t) {
    const MdpState a{static_cast<int>(rng.below(9)), 0, static_cast<int>(rng.below(5))};
    const MdpState b{a.p + 1, 0, static_cast<int>(rng.below(5))};
    const Action act = rng.below(2) ? Action::chpt : Action::proc;
    const std::vector<double> before(r.values().begin(), r.values().end());
    q_update(r, a, act, rng.uniform() * 100, b, 1.0);
    int changed = 0;
    for (std::size_t i = 0; i < before.size(); ++i) changed += before[i] != r.values()[i];
    const auto slot = state_index(a, 10, 5) * 2 + static_cast<std::size_t>(act);
    if (changed > 1 || (changed == 1 && before[slot] == r.values()[slot])) ++bad;
  }
  const bool ok = std::abs(first - 8) <= 1e-12 && std::abs(second - 9) <= 1e-12 && zero_ok && bad == 0;
  return {ok, fmt("examples %.15g, %.15g (expect 8, 9), zero fixed point %s, multi-entry updates %d/1000", first,
                  second, zero_ok ? "ok" : "broken", bad)};
}

Outcome c2_transitions() {
  const StateSpace sp{10, 5};
  const std::int64_t tcp = 164, N = 500;
  long cases = 0, wrong = 0;
  for (int p = 0; p < sp.S; ++p)
    for (int c = 0; c <= p; ++c)
      for (int b = 0; b < sp.B; ++b)
        for (int bn = 0; bn < sp.B; ++bn) {
          const MdpState s{p, c, b};
          auto check = [&](Action a, bool f, MdpState want, std::int64_t cost) {
            ++cases;
            if (!(next_state(sp, s, a, f, bn) == want) || immediate_cost(s, a, f, tcp, N) != cost) ++wrong;
          };
          if (p + 1 < sp.S) {
            check(Action::chpt, false, {p + 1, p, bn}, tcp);
            check(Action::proc, false, {p + 1, c, bn}, 0);
          }
          check(Action::chpt, true, {p, p, bn}, tcp);
          check(Action::proc, true, {c, c, bn}, (p - c) * N);
        }
  return {wrong == 0, fmt("%ld transitions checked over S=10, B=5, %ld wrong", cases, wrong)};
}

Outcome c3_small_optimality() {
  namespace sc = scenarios;
  const auto r = train(sc::tiny_system(), sc::tiny_program(), sc::tiny_chain(), sc::tiny_harvest(),
                       sc::tiny_train_config());
  const auto a = sc::compare_with_dp(r.table, sc::solve_tiny_dp());
  const double frac = a.visited ? static_cast<double>(a.agree) / a.visited : 0.0;
  return {a.visited > 0 && frac >= 0.95,
          fmt("greedy matches value iteration on %d/%d visited states (%.1f%%, need >= 95%%)", a.agree, a.visited,
              100 * frac)};
}

Outcome c4_sizes() {
  const SystemParams sys;
  const ActionBitTable t(static_cast<int>(sys.super_interval), static_cast<int>(sys.battery_levels));
  const bool ok = sys.state_count() == 200000 && t.byte_count() == 25000;
  return {ok, fmt("%zu states, %zu-byte action-bit payload (expect 200000, 25000)", sys.state_count(), t.byte_count())};
}

Outcome c5_lookup() {
  const SystemParams sys;
  const double pct = 100.0 * lookup_energy_per_superinterval(sys) /
                     (static_cast<double>(sys.super_interval) * interval_demand(sys).energy_nj);
  const double rel = std::abs(pct - 0.002) / 0.002;
  return {rel <= 0.10, fmt("lookup overhead %.6f%% of super-interval energy (target 0.002%%, off by %.1f%%)", pct,
                           100 * rel)};
}

Outcome c6_round_trip() {
  const auto src = default_rf_model();
  const auto observed = generate_trace(src, 20000, 5e-3, 606, 0);
  const auto fitted = fit_transitions(quantize_trace(observed, src.levels()), src.levels());
  const auto synthetic = generate_trace(fitted, 100000, 5e-3, 607, 0);
  const auto refit = fit_transitions(synthetic, src.levels());
  double worst = 0;
  for (std::size_t i = 0; i < fitted.size(); ++i)
    for (std::size_t j = 0; j < fitted.size(); ++j)
      worst = std::max(worst, std::abs(refit.probs()[i][j] - fitted.probs()[i][j]));
  return {worst <= 0.05, fmt("max |refit - fit| = %.4f over 1e5 samples (need <= 0.05)", worst)};
}

// Criteria 7, 8 and 10 share one trained default table.
struct DefaultRuns {
  ExperimentConfig cfg;
  std::optional<TrainResult> trained;
  std::vector<std::uint64_t> seeds;
  std::vector<ComparisonRow> rows;

  const SimResult& get(const std::string& policy, std::size_t seed_idx) const {
    for (const auto& r : rows)
      if (r.policy == policy && r.seed == seeds[seed_idx]) return r.result;
    throw std::logic_error("missing row");
  }
  double mean(const std::string& policy) const {
    double s = 0;
    for (std::size_t i = 0; i < seeds.size(); ++i) s += get(policy, i).normalized_runtime();
    return s / static_cast<double>(seeds.size());
  }
};

DefaultRuns default_runs(std::int64_t episodes) {
  DefaultRuns d;
  d.cfg.train.episodes = episodes;
  const auto model = default_rf_model();
  d.trained = train(d.cfg.system, d.cfg.program, model, d.cfg.harvest, d.cfg.train);
  auto bits = std::make_shared<const ActionBitTable>(extract_action_bits(d.trained->table));
  d.seeds = eval_seed_list(d.cfg);
  const std::vector<NamedPolicy> pols{{"qlearn", QLearnPolicy{bits}},
                                      {"periodic", PeriodicPolicy{d.cfg.periodic}},
                                      {"conservative", ConservativePolicy{conservative_thresholds(d.cfg.system, d.cfg.program)}}};
  d.rows = compare(d.cfg.program, pols, d.cfg.system, make_run_config(d.cfg, model), d.seeds);
  return d;
}

Outcome c7_ordering(const DefaultRuns& d) {
  const double q = d.mean("qlearn"), p = d.mean("periodic"), c = d.mean("conservative");
  const double speedup = p / q;
  return {q < p && p < c && speedup >= 1.05,
          fmt("mean normalized runtime over %zu seeds: qlearn %.3f, periodic %.3f, conservative %.3f; "
              "qlearn/periodic speedup %.3f (need >= 1.05)",
              d.seeds.size(), q, p, c, speedup)};
}

Outcome c8_table_trends(const DefaultRuns& d) {
  int both = 0, fewer_cp = 0, lower_rb = 0;
  std::ostringstream per;
  for (std::size_t i = 0; i < d.seeds.size(); ++i) {
    const auto& q = d.get("qlearn", i);
    const auto& p = d.get("periodic", i);
    const bool a = q.n_checkpoints < p.n_checkpoints;
    const bool b = q.rollback_cost_s < p.rollback_cost_s;
    fewer_cp += a;
    lower_rb += b;
    both += a && b;
    per << (i ? "; " : "") << q.n_checkpoints << "/" << p.n_checkpoints << " cps, "
        << fmt("%.3f/%.3f s", q.rollback_cost_s, p.rollback_cost_s);
  }
  const int need = static_cast<int>(d.seeds.size()) - 1;
  return {both >= need, fmt("both trends hold in %d/%zu seeds (fewer cps %d, lower rollback cost %d; need >= %d); "
                            "qlearn/periodic per seed: ",
                            both, d.seeds.size(), fewer_cp, lower_rb, need) +
                            per.str()};
}

Outcome c9_conservative() {
  SystemParams sys;
  const ProgramSpec prog;
  // a bursty chain: long droughts broken by short strong bursts
  const TransitionModel bursty(PowerLevelSet::six_level_rf(), {{95, 0, 0, 0, 0, 5},
                                                              {50, 50, 0, 0, 0, 0},
                                                              {0, 50, 50, 0, 0, 0},
                                                              {0, 0, 50, 50, 0, 0},
                                                              {0, 0, 0, 50, 50, 0},
                                                              {0, 0, 0, 0, 30, 70}});
  int runs = 0;
  std::int64_t rollback_events = 0;
  for (const auto& cipher : {CipherConfig::none(), CipherConfig::prince()}) {
    sys.cipher = cipher;
    const ConservativePolicy pol{conservative_thresholds(sys, prog)};
    for (const auto& model : {default_rf_model(), bursty})
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        RunConfig rc;
        rc.seed = seed;
        // replay a pre-generated trace, scaled to the default mean harvest
        rc.source = scale_trace(generate_trace(model, 200000, 5e-3, seed, 0), HarvestConfig{}.mean_power_mw);
        const auto r = run(prog, pol, sys, rc);
        for (const auto& e : r.events) rollback_events += e.kind == EventKind::rollback;
        ++runs;
      }
  }
  return {rollback_events == 0, fmt("%lld rollback events across %d conservative runs (2 chains x 2 ciphers x 5 traces)",
                                    static_cast<long long>(rollback_events), runs)};
}

Outcome c10_structure(const DefaultRuns& d) {
  const QTable& q = d.trained->table;
  const int B = q.B();
  const double tau = 1.0;  // cycles
  // threshold = 1 + highest battery level at which chpt is preferred by more than `margin`
  auto analyse = [&](int p, int c, double margin, bool& closed) {
    int highest_chpt = -1;
    bool proc_below = false;
    closed = true;
    for (int b = B - 1; b >= 0; --b) {
      const double gap = q.value({p, c, b}, Action::proc) - q.value({p, c, b}, Action::chpt);
      if (gap > margin) {
        if (highest_chpt < 0) highest_chpt = b;
      } else if (gap < -margin && highest_chpt >= 0) {
        proc_below = true;
      }
    }
    closed = !proc_below;
    return highest_chpt + 1;
  };
  int pairs = 0, closed_tau = 0, closed_strict = 0, order_ok = 0, order_n = 0;
  for (int p = 6; p <= q.S() - 2; ++p) {
    for (int dlt = 1; dlt <= 6; ++dlt) {
      bool a, b;
      analyse(p, p - dlt, tau, a);
      analyse(p, p - dlt, 0.0, b);
      ++pairs;
      closed_tau += a;
      closed_strict += b;
    }
    bool unused;
    const int t1 = analyse(p, p - 1, 0.0, unused);
    const int t6 = analyse(p, p - 6, 0.0, unused);
    ++order_n;
    order_ok += t1 <= t6;
  }
  const double frac = static_cast<double>(closed_tau) / pairs;
  const double order_frac = static_cast<double>(order_ok) / order_n;
  return {frac >= 0.95 && order_frac >= 0.95,
          fmt("chpt region downward-closed in %d/%d (p,c) pairs = %.1f%% with a %.0f-cycle indifference margin "
              "(strict: %d/%d = %.1f%%); threshold(c=p-1) <= threshold(c=p-6) for %d/%d p",
              closed_tau, pairs, 100 * frac, tau, closed_strict, pairs, 100.0 * closed_strict / pairs, order_ok,
              order_n)};
}

Outcome c11_sweeps(std::int64_t episodes) {
  ExperimentConfig cfg;
  cfg.train.episodes = episodes;
  const auto model = default_rf_model();
  const auto b_rows = run_sweep(cfg, model, "B", {5, 20, 80});
  const auto s_rows = run_sweep(cfg, model, "S", {50, 200, 800});
  bool monotone = true;
  for (std::size_t i = 1; i < b_rows.size(); ++i)
    monotone = monotone && b_rows[i].mean_normalized_runtime <= b_rows[i - 1].mean_normalized_runtime;
  const double b_gain = 1.0 - b_rows.back().mean_normalized_runtime / b_rows.front().mean_normalized_runtime;
  const double s_gain = 1.0 - s_rows.back().mean_normalized_runtime / s_rows.front().mean_normalized_runtime;
  std::ostringstream rows;
  for (const auto& r : b_rows) rows << fmt(" B=%lld:%.3f", static_cast<long long>(r.value), r.mean_normalized_runtime);
  for (const auto& r : s_rows) rows << fmt(" S=%lld:%.3f", static_cast<long long>(r.value), r.mean_normalized_runtime);
  return {monotone && b_gain >= 0.10 && s_gain >= 0.03,
          fmt("B sweep %s, improvement %.1f%% (need >= 10%%); S improvement %.1f%% (need >= 3%%); runtimes",
              monotone ? "monotone" : "not monotone", 100 * b_gain, 100 * s_gain) +
              rows.str()};
}

Outcome c12_ciphers() {
  const ProgramSpec prog;
  const std::vector<CipherConfig> ciphers{CipherConfig::none(), CipherConfig::prince(), CipherConfig::aes()};
  ExperimentConfig cfg;
  cfg.eval_seeds = 20;
  const auto seeds = eval_seed_list(cfg);
  std::vector<double> mean(3, 0.0);
  int strict = 0;
  for (auto seed : seeds) {
    std::vector<double> t;
    for (std::size_t k = 0; k < ciphers.size(); ++k) {
      SystemParams sys;
      sys.cipher = ciphers[k];
      RunConfig rc;
      rc.seed = seed;
      rc.source = MarkovSource{default_rf_model(), HarvestConfig{}};
      rc.record_events = false;
      t.push_back(run(prog, PeriodicPolicy{cfg.periodic}, sys, rc).exec_time_s);
      mean[k] += t.back() / static_cast<double>(seeds.size());
    }
    strict += t[0] < t[1] && t[1] < t[2];
  }
  const bool ok = mean[0] < mean[1] && mean[1] < mean[2];
  return {ok, fmt("periodic policy over %zu paired traces, mean runtime none %.4f s, PRINCE %.4f s (+%.1f%%), "
                  "AES %.4f s (+%.1f%%); strictly increasing on %d/%zu individual traces",
                  seeds.size(),
                  mean[0], mean[1], 100 * (mean[1] / mean[0] - 1), mean[2], 100 * (mean[2] / mean[0] - 1), strict,
                  seeds.size())};
}

Outcome c13_golden() {
  namespace sc = scenarios;
  const auto r = run(sc::golden_program(), sc::golden_policy(), sc::golden_system(), sc::golden_run());
  const auto mismatch = sc::transcript_mismatch(r.events, sc::golden_transcript());
  const double expect_exec = r.baseline_time_s + 2 * 0.5 + r.off_time_s;
  const bool ok = mismatch.empty() && std::abs(r.exec_time_s - expect_exec) < 1e-9;
  return {ok, mismatch.empty() ? fmt("%zu events match; runtime %.4f s = baseline + 2 intervals + %.4f s off",
                                     r.events.size(), r.exec_time_s, r.off_time_s)
                               : mismatch};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  bool slow = false;
  std::int64_t episodes = 1'000'000;
  app.add_flag("--slow", slow, "Run the sweep criterion (11) only");
  app.add_option("--episodes", episodes, "Training episodes for the default table and sweeps");
  CLI11_PARSE(app, argc, argv);

  int failed = 0;
  auto report = [&](int id, const std::function<Outcome()>& f) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("criterion %2d: %s  %s  [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
  };

  if (slow) {
    report(11, [&] { return c11_sweeps(episodes); });
    return failed ? 1 : 0;
  }
  report(1, c1_q_update);
  report(2, c2_transitions);
  report(3, c3_small_optimality);
  report(4, c4_sizes);
  report(5, c5_lookup);
  report(6, c6_round_trip);
  std::optional<DefaultRuns> runs;
  try {
    const auto t0 = std::chrono::steady_clock::now();
    runs = default_runs(episodes);
    std::printf("default table: %lld episodes, reachable coverage %.1f%%  [%.1f s]\n",
                static_cast<long long>(episodes), 100 * runs->trained->report.reachable_coverage,
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  } catch (const std::exception& e) {
    std::printf("default training failed: %s\n", e.what());
  }
  auto need_runs = [&](auto f) {
    return [&runs, f] { return runs ? f(*runs) : Outcome{false, "no trained table"}; };
  };
  report(7, need_runs(c7_ordering));
  report(8, need_runs(c8_table_trends));
  report(9, c9_conservative);
  report(10, need_runs(c10_structure));
  report(12, c12_ciphers);
  report(13, c13_golden);
  std::printf("%s\n", failed ? "acceptance: FAILED" : "acceptance: all criteria passed");
  return failed ? 1 : 0;
}
