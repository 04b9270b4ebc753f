#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace ickpt {

/// Scheduler state at an interval boundary: progress counter p, checkpoint
/// counter c (both in intervals within the super-interval) and battery
/// level b.
struct MdpState {
  int p = 0;
  int c = 0;
  int b = 0;

  friend bool operator==(const MdpState&, const MdpState&) = default;
};

enum class Action : std::uint8_t { proc = 0, chpt = 1 };

constexpr std::string_view to_string(Action a) { return a == Action::chpt ? "chpt" : "proc"; }

/// Dimensions of the state space: S intervals per super-interval, B battery levels.
struct StateSpace {
  int S = 100;
  int B = 20;

  std::size_t size() const { return static_cast<std::size_t>(S) * S * B; }
  friend bool operator==(const StateSpace&, const StateSpace&) = default;
  bool valid(const MdpState& s) const {
    return s.c >= 0 && s.c <= s.p && s.p < S && s.b >= 0 && s.b < B;
  }
  /// Throws std::out_of_range with "invalid state" when !valid(s).
  void check(const MdpState& s) const;
};

/// Successor state for one decision plus one executed interval.
MdpState next_state(const StateSpace& space, const MdpState& s, Action a, bool failure, int b_next);

/// Immediate cost in cycles at CPI 1: t_cp for a checkpoint, the lost
/// progress (p - c) * N for a rollback, zero otherwise.
std::int64_t immediate_cost(const MdpState& s, Action a, bool failure, std::int64_t t_cp_cycles,
                            std::int64_t interval_insts);

/// Dense index (p * S + c) * B + b over the full S x S x B rectangle.
std::size_t state_index(const MdpState& s, int S, int B);
MdpState state_of_index(std::size_t index, int S, int B);

}  // namespace ickpt
