#include "dcrl/mdp.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace dcrl {

namespace {
constexpr double kRowTolerance = 1e-9;
}

DiscreteMdp::DiscreteMdp(std::size_t states, std::size_t actions, double discount)
    : n_states(states),
      n_actions(actions),
      gamma(discount),
      transition(states * actions * states, 0.0),
      reward(states * actions * states, 0.0),
      initial(states, 0.0),
      terminal(states, false) {}

void DiscreteMdp::set(std::size_t s, std::size_t a, std::size_t next, double prob, double rew) {
  if (s >= n_states || a >= n_actions || next >= n_states)
    throw std::out_of_range("DiscreteMdp::set: index out of range");
  transition[idx(s, a, next)] = prob;
  reward[idx(s, a, next)] = rew;
}

void DiscreteMdp::make_terminal(std::size_t s) {
  for (std::size_t a = 0; a < n_actions; ++a) {
    for (std::size_t n = 0; n < n_states; ++n) {
      transition[idx(s, a, n)] = (n == s) ? 1.0 : 0.0;
      reward[idx(s, a, n)] = 0.0;
    }
  }
  terminal[s] = true;
}

bool DiscreteMdp::has_terminal_states() const {
  for (bool t : terminal)
    if (t) return true;
  return false;
}

double DiscreteMdp::expected_reward(std::size_t s, std::size_t a) const {
  if (terminal[s]) return 0.0;
  double total = 0.0;
  for (std::size_t n = 0; n < n_states; ++n) total += p(s, a, n) * r(s, a, n);
  return total;
}

Mat DiscreteMdp::expected_reward_matrix() const {
  Mat out(n_states, n_actions);
  for (std::size_t s = 0; s < n_states; ++s)
    for (std::size_t a = 0; a < n_actions; ++a) out(s, a) = expected_reward(s, a);
  return out;
}

std::vector<Violation> validate_mdp(const DiscreteMdp& mdp) {
  std::vector<Violation> out;
  auto add = [&out](std::string msg) { out.push_back({std::move(msg)}); };

  if (mdp.n_states == 0) add("n_states must be positive");
  if (mdp.n_actions == 0) add("n_actions must be positive");
  if (!(mdp.gamma >= 0.0)) add("discount must be >= 0");
  if (!(mdp.gamma < 1.0)) add("discount must be < 1");

  const std::size_t tensor = mdp.n_states * mdp.n_actions * mdp.n_states;
  if (mdp.transition.size() != tensor || mdp.reward.size() != tensor) {
    add("transition/reward tensors have wrong size");
    return out;
  }
  if (mdp.initial.size() != mdp.n_states || mdp.terminal.size() != mdp.n_states) {
    add("initial distribution or terminal mask has wrong size");
    return out;
  }

  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      double row = 0.0;
      bool negative = false;
      bool finite_reward = true;
      for (std::size_t n = 0; n < mdp.n_states; ++n) {
        const double p = mdp.p(s, a, n);
        if (p < 0.0) negative = true;
        row += p;
        if (!std::isfinite(mdp.r(s, a, n))) finite_reward = false;
      }
      std::ostringstream where;
      where << "(s=" << s << ", a=" << a << ")";
      if (negative) add("negative transition probability at " + where.str());
      if (std::abs(row - 1.0) > kRowTolerance) {
        std::ostringstream msg;
        msg << "transition row " << where.str() << " sums to " << row;
        add(msg.str());
      }
      if (!finite_reward) add("non-finite reward at " + where.str());
    }
  }

  double mass = 0.0;
  bool negative = false;
  for (double v : mdp.initial) {
    if (v < 0.0) negative = true;
    mass += v;
  }
  if (negative) add("initial distribution has negative entries");
  if (std::abs(mass - 1.0) > kRowTolerance) {
    std::ostringstream msg;
    msg << "initial distribution sums to " << mass;
    add(msg.str());
  }
  return out;
}

void require_valid(const DiscreteMdp& mdp) {
  const auto report = validate_mdp(mdp);
  if (report.empty()) return;
  std::string msg = "invalid MDP:";
  for (const auto& v : report) msg += " [" + v.message + "]";
  throw std::invalid_argument(msg);
}

void write_mdp(std::ostream& out, const DiscreteMdp& mdp) {
  out << "# dcrl-mdp v1\n";
  out << std::setprecision(17);
  out << "states " << mdp.n_states << "\n";
  out << "actions " << mdp.n_actions << "\n";
  out << "gamma " << mdp.gamma << "\n";
  out << "initial";
  for (double v : mdp.initial) out << ' ' << v;
  out << "\nterminal";
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    if (mdp.terminal[s]) out << ' ' << s;
  out << "\ntransitions\n";
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    if (mdp.terminal[s]) continue;
    for (std::size_t a = 0; a < mdp.n_actions; ++a)
      for (std::size_t n = 0; n < mdp.n_states; ++n) {
        const double p = mdp.p(s, a, n);
        const double r = mdp.r(s, a, n);
        if (p != 0.0 || r != 0.0) out << s << ' ' << a << ' ' << n << ' ' << p << ' ' << r << "\n";
      }
  }
  out << "end\n";
}

DiscreteMdp read_mdp(std::istream& in) {
  std::string line;
  std::size_t states = 0, actions = 0;
  double gamma = -1.0;
  std::vector<double> initial;
  std::vector<std::size_t> terminals;
  struct Entry {
    std::size_t s, a, n;
    double p, r;
  };
  std::vector<Entry> entries;
  bool in_transitions = false;
  bool ended = false;
  std::size_t line_no = 0;

  auto fail = [&line_no](const std::string& what) {
    throw std::invalid_argument("read_mdp: line " + std::to_string(line_no) + ": " + what);
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    if (in_transitions) {
      if (line.rfind("end", 0) == 0) {
        ended = true;
        break;
      }
      Entry e{};
      if (!(ls >> e.s >> e.a >> e.n >> e.p >> e.r)) fail("expected 's a s_next p r'");
      entries.push_back(e);
      continue;
    }
    std::string key;
    ls >> key;
    if (key == "states") {
      ls >> states;
    } else if (key == "actions") {
      ls >> actions;
    } else if (key == "gamma") {
      ls >> gamma;
    } else if (key == "initial") {
      double v;
      while (ls >> v) initial.push_back(v);
    } else if (key == "terminal") {
      std::size_t s;
      while (ls >> s) terminals.push_back(s);
    } else if (key == "transitions") {
      in_transitions = true;
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  if (!ended) throw std::invalid_argument("read_mdp: missing 'end'");
  if (states == 0 || actions == 0) throw std::invalid_argument("read_mdp: missing header");
  if (initial.size() != states) throw std::invalid_argument("read_mdp: initial vector has wrong length");

  DiscreteMdp mdp(states, actions, gamma);
  mdp.initial = initial;
  for (const auto& e : entries) {
    if (e.s >= states || e.a >= actions || e.n >= states)
      throw std::invalid_argument("read_mdp: transition index out of range");
    mdp.set(e.s, e.a, e.n, e.p, e.r);
  }
  for (std::size_t s : terminals) {
    if (s >= states) throw std::invalid_argument("read_mdp: terminal id out of range");
    mdp.make_terminal(s);
  }
  return mdp;
}

}  // namespace dcrl
