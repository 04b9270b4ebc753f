#include "ickpt/qlearning.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "ickpt/rng.hpp"
#include "support/scenarios.hpp"

using namespace ickpt;

namespace fs = std::filesystem;

TEST(QUpdate, FirstAndSecondVisit) {
  QTable q(10, 5);
  const MdpState s{3, 1, 2}, n{4, 1, 1};
  q.value(n, Action::proc) = 6;
  q.value(n, Action::chpt) = 7;
  q.value(s, Action::chpt) = 10;
  q_update(q, s, Action::chpt, 2, n, 1.0);
  EXPECT_NEAR(q.value(s, Action::chpt), 8.0, 1e-12);

  q.value(s, Action::chpt) = 10;
  q_update(q, s, Action::chpt, 2, n, 1.0);
  EXPECT_NEAR(q.value(s, Action::chpt), 9.0, 1e-12);
  EXPECT_EQ(q.visits(s, Action::chpt), 2u);
}

TEST(QUpdate, ZeroTableStaysZero) {
  QTable q(10, 5);
  q_update(q, {0, 0, 0}, Action::proc, 0, {1, 0, 0}, 1.0);
  for (double v : q.values()) EXPECT_EQ(v, 0.0);
}

TEST(QUpdate, TouchesExactlyOneEntry) {
  QTable q(6, 4);
  Rng rng(5);
  for (auto& v : q.values()) v = rng.uniform() * 100;
  for (int trial = 0; trial < 200; ++trial) {
    const MdpState s{static_cast<int>(rng.below(5)), 0, static_cast<int>(rng.below(4))};
    const MdpState n{s.p + 1, 0, static_cast<int>(rng.below(4))};
    const Action a = rng.below(2) ? Action::chpt : Action::proc;
    const std::vector<double> before(q.values().begin(), q.values().end());
    q_update(q, s, a, rng.uniform() * 50, n, 1.0);
    const auto slot = state_index(s, 6, 4) * 2 + static_cast<std::size_t>(a);
    for (std::size_t i = 0; i < before.size(); ++i)
      if (i != slot) ASSERT_EQ(before[i], q.values()[i]);
  }
}

TEST(QUpdate, RunningMeanOfCosts) {
  QTable q(4, 2);
  const MdpState s{0, 0, 0}, n{3, 0, 0};
  const double costs[] = {5, 9, 1, 7};
  double sum = 0;
  for (int i = 0; i < 4; ++i) {
    q_update(q, s, Action::proc, costs[i], n, 1.0);
    sum += costs[i];
    EXPECT_NEAR(q.value(s, Action::proc), sum / (i + 1), 1e-12);
  }
}

TEST(ChooseAction, GreedyAndTies) {
  QTable q(4, 2);
  Rng rng(1);
  const MdpState s{1, 0, 1};
  q.value(s, Action::chpt) = 5;
  q.value(s, Action::proc) = 7;
  EXPECT_EQ(choose_action(q, s, 0.0, rng), Action::chpt);
  q.value(s, Action::chpt) = 7;
  EXPECT_EQ(choose_action(q, s, 0.0, rng), Action::proc);
}

TEST(ChooseAction, FullyRandomIsFair) {
  QTable q(4, 2);
  Rng rng(99);
  int chpt = 0;
  for (int i = 0; i < 10000; ++i) chpt += choose_action(q, {0, 0, 0}, 1.0, rng) == Action::chpt;
  EXPECT_NEAR(chpt / 10000.0, 0.5, 0.02);
}

TEST(TrainConfig, EpsilonSchedules) {
  TrainConfig c;
  c.episodes = 101;
  EXPECT_DOUBLE_EQ(c.epsilon_at(0), 0.9);
  EXPECT_NEAR(c.epsilon_at(50), 0.5, 1e-12);
  EXPECT_NEAR(c.epsilon_at(100), 0.1, 1e-12);
  c.epsilon_decay = EpsilonSchedule::multiplicative;
  EXPECT_NEAR(c.epsilon_at(100), 0.1, 1e-12);
  EXPECT_NEAR(c.epsilon_at(50), std::sqrt(0.9 * 0.1), 1e-12);
}

TEST(TrainConfig, JsonRejectsUnknownKeys) {
  EXPECT_THROW(train_config_from_json({{"episodez", 4}}), ConfigError);
  const auto c = train_config_from_json({{"episodes", 4}, {"epsilon_decay", "multiplicative"}});
  EXPECT_EQ(c.episodes, 4);
  EXPECT_EQ(c.epsilon_decay, EpsilonSchedule::multiplicative);
}

namespace {

SystemParams tiny_sys(int S, int B) {
  SystemParams s;
  s.super_interval = S;
  s.battery_levels = B;
  return s;
}

TransitionModel constant_chain(double lo, double hi) {
  return TransitionModel(PowerLevelSet({lo, hi}), {{1, 0}, {0, 1}});
}

}  // namespace

TEST(Train, ZeroEpisodesGivesZeroTable) {
  TrainConfig c;
  c.episodes = 0;
  const auto r = train(tiny_sys(5, 3), ProgramSpec{}, default_rf_model(), HarvestConfig{}, c);
  for (double v : r.table.values()) EXPECT_EQ(v, 0.0);
}

TEST(Train, Reproducible) {
  TrainConfig c;
  c.episodes = 3000;
  c.seed = 17;
  const auto sys = tiny_sys(10, 5);
  const auto a = train(sys, ProgramSpec{}, default_rf_model(), HarvestConfig{}, c);
  const auto b = train(sys, ProgramSpec{}, default_rf_model(), HarvestConfig{}, c);
  EXPECT_TRUE(std::equal(a.table.values().begin(), a.table.values().end(), b.table.values().begin()));
  c.seed = 18;
  const auto d = train(sys, ProgramSpec{}, default_rf_model(), HarvestConfig{}, c);
  EXPECT_FALSE(std::equal(a.table.values().begin(), a.table.values().end(), d.table.values().begin()));
  EXPECT_EQ(a.report.per_episode.size(), 3000u);
}

// Harvest far above the processor draw: no failure can happen and every
// checkpoint is pure cost.
TEST(Train, AbundantEnergyLearnsProceed) {
  TrainConfig c;
  c.episodes = 2000;
  HarvestConfig h;
  h.mean_power_mw = 150.0;
  const auto r = train(tiny_sys(5, 3), ProgramSpec{}, constant_chain(100, 200), h, c);
  for (const auto& e : r.report.per_episode) ASSERT_EQ(e.failures, 0);
  for (int p = 0; p < 4; ++p)
    for (int cc = 0; cc <= p; ++cc)
      for (int b = 0; b < 3; ++b) EXPECT_EQ(r.table.greedy({p, cc, b}), Action::proc);
}

TEST(Train, MatchesDynamicProgrammingOnTinyInstance) {
  namespace sc = scenarios;
  const auto sys = sc::tiny_system();
  const auto cp = checkpoint_cost(sys, sc::tiny_program());
  ASSERT_NEAR(cp.energy_nj, 60.0, 1e-12);
  ASSERT_EQ(cp.latency_cycles, 400);
  ASSERT_NEAR(restore_cost(sys, sc::tiny_program()).energy_nj, 60.0, 1e-12);

  const auto r = train(sys, sc::tiny_program(), sc::tiny_chain(), sc::tiny_harvest(), sc::tiny_train_config());
  const auto dp = sc::solve_tiny_dp();
  const auto a = sc::compare_with_dp(r.table, dp);
  for (const auto& s : a.disagreements)
    ADD_FAILURE() << "state (" << s.p << "," << s.c << "," << s.b << ") dp proc=" << dp.q_proc(s.p, s.c, s.b)
                  << " chpt=" << dp.q_chpt(s.p, s.c, s.b);
  EXPECT_GE(a.visited, 10);
  EXPECT_GE(a.agree, 0.95 * a.visited);
}

TEST(ActionBits, ExtractionRule) {
  QTable q(4, 2);
  q.value({1, 0, 1}, Action::chpt) = 3;
  q.value({1, 0, 1}, Action::proc) = 9;
  q.value({2, 1, 0}, Action::chpt) = 9;
  q.value({2, 1, 0}, Action::proc) = 3;
  const auto bits = extract_action_bits(q);
  EXPECT_TRUE(bits.get(MdpState{1, 0, 1}));
  EXPECT_FALSE(bits.get(MdpState{2, 1, 0}));
  EXPECT_FALSE(bits.get(MdpState{0, 0, 0}));
  EXPECT_EQ(bits.popcount(), 1u);
}

TEST(ActionBits, DefaultSize) {
  const ActionBitTable t(100, 20);
  EXPECT_EQ(t.bit_count(), 200000u);
  EXPECT_EQ(t.byte_count(), 25000u);
  EXPECT_EQ(t.serialize().size(), 25000u + ActionBitTable::kHeaderBytes);
}

TEST(ActionBits, SerializeRoundTrip) {
  ActionBitTable t(7, 3);
  Rng rng(8);
  for (std::size_t i = 0; i < t.bit_count(); ++i) t.set(i, rng.below(2));
  const auto bytes = t.serialize();
  EXPECT_EQ(ActionBitTable::deserialize(bytes), t);
  EXPECT_EQ(bytes[0], 'A');
  // LSB-first packing
  EXPECT_EQ(bytes[16] & 1u, t.get(std::size_t{0}) ? 1u : 0u);

  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(ActionBitTable::deserialize(bad), std::runtime_error);
  auto shorter = bytes;
  shorter.pop_back();
  EXPECT_THROW(ActionBitTable::deserialize(shorter), std::runtime_error);
}

TEST(ActionBits, FileRoundTrip) {
  const auto dir = fs::temp_directory_path() / "ickpt_abt_test";
  fs::create_directories(dir);
  ActionBitTable t(5, 4);
  t.set(3, true);
  t.set(77, true);
  write_action_bits(dir / "a.abt", t);
  EXPECT_EQ(read_action_bits(dir / "a.abt"), t);
  fs::remove_all(dir);
}

TEST(QTableFile, RoundTrip) {
  const auto dir = fs::temp_directory_path() / "ickpt_qtable_test";
  fs::create_directories(dir);
  QTable q(5, 3);
  Rng rng(2);
  for (auto& v : q.values()) v = rng.uniform() * 1e4 - 10;
  write_qtable(dir / "q.json", q, {5, 3, 123, 9, 1.0});
  QTableFileHeader h;
  const auto back = read_qtable(dir / "q.json", &h);
  EXPECT_TRUE(std::equal(q.values().begin(), q.values().end(), back.values().begin()));
  EXPECT_EQ(h.episodes, 123);
  EXPECT_EQ(h.seed, 9u);
  fs::remove_all(dir);
}
