#include "ickpt/mdp.hpp"

#include <stdexcept>
#include <string>

namespace ickpt {

void StateSpace::check(const MdpState& s) const {
  if (!valid(s))
    throw std::out_of_range("invalid state (p=" + std::to_string(s.p) + ", c=" + std::to_string(s.c) +
                            ", b=" + std::to_string(s.b) + ")");
}

MdpState next_state(const StateSpace& space, const MdpState& s, Action a, bool failure, int b_next) {
  space.check(s);
  if (b_next < 0 || b_next >= space.B) throw std::out_of_range("invalid state: battery level out of range");
  if (!failure && s.p + 1 >= space.S) throw std::out_of_range("invalid state: progress past super-interval end");

  MdpState n;
  n.b = b_next;
  if (a == Action::chpt) {
    n.c = s.p;
    n.p = failure ? s.p : s.p + 1;
  } else {
    n.c = s.c;
    n.p = failure ? s.c : s.p + 1;
  }
  return n;
}

std::int64_t immediate_cost(const MdpState& s, Action a, bool failure, std::int64_t t_cp_cycles,
                            std::int64_t interval_insts) {
  if (a == Action::chpt) return t_cp_cycles;
  if (!failure) return 0;
  return static_cast<std::int64_t>(s.p - s.c) * interval_insts;
}

std::size_t state_index(const MdpState& s, int S, int B) {
  if (s.p < 0 || s.p >= S || s.c < 0 || s.c >= S || s.b < 0 || s.b >= B)
    throw std::out_of_range("state index out of range");
  return (static_cast<std::size_t>(s.p) * S + static_cast<std::size_t>(s.c)) * B + static_cast<std::size_t>(s.b);
}

MdpState state_of_index(std::size_t index, int S, int B) {
  if (index >= static_cast<std::size_t>(S) * S * B) throw std::out_of_range("state index out of range");
  MdpState s;
  s.b = static_cast<int>(index % B);
  index /= B;
  s.c = static_cast<int>(index % S);
  s.p = static_cast<int>(index / S);
  return s;
}

}  // namespace ickpt
