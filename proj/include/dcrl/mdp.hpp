#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dcrl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Tabular MDP <S, A, P, R, gamma> with initial distribution phi.
///
/// Transition and reward tensors are dense, indexed (s, a, s'). Terminal
/// states are absorbing: rollouts stop on arrival, and the model treats them
/// as having no outgoing flow and zero raw reward.
struct DiscreteMdp {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  double gamma = 0.9;
  std::vector<double> transition;  // n_states * n_actions * n_states
  std::vector<double> reward;      // same layout as transition
  std::vector<double> initial;     // phi, length n_states
  std::vector<bool> terminal;      // length n_states

  DiscreteMdp() = default;
  DiscreteMdp(std::size_t states, std::size_t actions, double discount);

  std::size_t idx(std::size_t s, std::size_t a, std::size_t next) const {
    return (s * n_actions + a) * n_states + next;
  }
  double p(std::size_t s, std::size_t a, std::size_t next) const { return transition[idx(s, a, next)]; }
  double r(std::size_t s, std::size_t a, std::size_t next) const { return reward[idx(s, a, next)]; }

  /// Sets P(s, a, next) and R(s, a, next) together.
  void set(std::size_t s, std::size_t a, std::size_t next, double prob, double rew = 0.0);

  /// Makes s absorbing (self-loop, zero reward) and marks it terminal.
  void make_terminal(std::size_t s);

  bool is_terminal(std::size_t s) const { return terminal[s]; }
  bool has_terminal_states() const;

  /// r(s, a) = sum_s' P(s, a, s') R(s, a, s'); zero at terminal states.
  double expected_reward(std::size_t s, std::size_t a) const;
  Mat expected_reward_matrix() const;
};

struct Violation {
  std::string message;
};

/// Report-style validation: empty result means the MDP is well formed.
std::vector<Violation> validate_mdp(const DiscreteMdp& mdp);

/// Throws std::invalid_argument listing every violation.
void require_valid(const DiscreteMdp& mdp);

/// Plain-text model format, see docs/formats.md.
void write_mdp(std::ostream& out, const DiscreteMdp& mdp);
DiscreteMdp read_mdp(std::istream& in);

}  // namespace dcrl
