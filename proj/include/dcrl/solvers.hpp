#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "dcrl/continuous_env.hpp"
#include "dcrl/experience.hpp"
#include "dcrl/mdp.hpp"
#include "dcrl/policy.hpp"

namespace dcrl {

struct QTable {
  Mat values;
  Mat visits;

  static QTable zeros(std::size_t states, std::size_t actions);
};

void write_qtable_csv(std::ostream& out, const QTable& q);

/// Q(s, a) = r(s, a) + offset(s) + gamma sum_s' P(s, a, s') V(s'); at a
/// terminal state Q(s, a) = offset(s).
Mat q_from_values(const DiscreteMdp& mdp, const Vec& offset, const Vec& values);

/// ||Q - T Q||_inf for the offset-adjusted Bellman optimality operator.
double bellman_residual(const DiscreteMdp& mdp, const Vec& offset, const Mat& q);

/// Deterministic greedy actions, lowest index among entries within tie_tol of the row max.
std::vector<std::size_t> greedy_actions(const Mat& q, double tie_tol = 0.0);

struct ValueIterationResult {
  QTable q;
  TabularPolicy policy;
  Vec values;
  double residual = 0.0;
  std::size_t iterations = 0;
};

/// Optimal Q for reward r(s, a) + offset(s) by policy iteration with exact
/// linear-solve evaluation. Falls back to value-iteration sweeps if the
/// residual is still above tol.
ValueIterationResult value_iteration(const DiscreteMdp& mdp, const Vec& offset, double tol = 1e-9);

struct RegularizerOptions {
  double mu = 0.0;
  std::vector<bool> mask;        // states carrying the -mu/2 rho(s)^2 term; empty means all
  double tol = 1e-9;             // relative Frank-Wolfe gap
  std::size_t max_rounds = 400;
};

/// Exact maximizer of sum rho_bar (r + offset) - mu/2 sum_{s in mask} rho(s)^2
/// over the occupancy polytope, by simplicial decomposition: vertices are the
/// occupancies of deterministic policies, weights come from an active-set
/// QP solve on the simplex. The vertex set is kept between calls.
/// With mu = 0 the greedy deterministic policy is returned.
class RegularizedSolver {
 public:
  struct Solution {
    Mat occupancy;
    TabularPolicy policy;
    double objective = 0.0;  // regularized, offset-adjusted value
    double gap = 0.0;
    std::size_t vertices = 0;
  };

  RegularizedSolver(const DiscreteMdp& mdp, RegularizerOptions options);
  Solution solve(const Vec& offset);
  const RegularizerOptions& options() const { return options_; }

 private:
  double regularized_value(const Mat& occ, const Vec& offset) const;

  const DiscreteMdp* mdp_;
  RegularizerOptions options_;
  std::vector<Mat> vertices_;
  std::vector<std::vector<std::size_t>> vertex_policies_;
  Vec weights_;
};

/// pi(a|s) = rho_bar(s, a) / rho(s); uniform where rho(s) = 0.
TabularPolicy policy_from_occupancy(const Mat& rho_bar);

struct QLearningConfig {
  double learning_rate = 0.5;
  double learning_rate_decay = 0.0;  // lr_k = lr / (1 + decay * visits(s, a))
  double epsilon_start = 0.3;
  double epsilon_end = 0.05;
  std::size_t episodes = 500;
  std::size_t horizon = 100;
  std::size_t replay_sweeps = 1;  // passes over a supplied experience buffer
  std::uint64_t seed = 0;
};

void validate(const QLearningConfig& config);

struct QLearningResult {
  QTable q;
  GreedyQPolicy policy;
  double residual = 0.0;
};

/// Tabular Q-learning on reward raw + offset(s). An optional replay buffer is
/// swept first with rewards adjusted at consumption, then online episodes are
/// sampled with a decaying epsilon. Terminal rows are pinned to offset(s).
QLearningResult q_learning(const DiscreteMdp& mdp, const Vec& offset, const QLearningConfig& config,
                           const QTable* warm_start = nullptr, const DiscreteBuffer* replay = nullptr);

struct CemConfig {
  std::size_t population = 16;
  double elite_fraction = 0.25;
  double noise_floor = 0.02;
  double initial_std = 0.5;
  std::size_t iterations = 20;
  std::size_t episodes_per_candidate = 4;
  std::size_t horizon = 200;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

void validate(const CemConfig& config);

struct CemGeneration {
  double mean_return = 0.0;   // over the population
  double elite_return = 0.0;  // over the elites
  double best_return = 0.0;
  double mean_std = 0.0;      // average sampling std after refit
};

struct CemResult {
  Vec mean;
  Vec std;
  std::vector<CemGeneration> generations;
};

using StateAdjustment = std::function<double(const Vec&)>;

/// Cross-entropy search over GaussianPolicy parameters maximizing the
/// discounted adjusted return sum gamma^j (r_j + adjust(s_j)). Candidates are
/// evaluated in evaluation mode on a common set of episode seeds per generation.
/// `policy` supplies the parameter layout and receives the final elite mean.
CemResult cem_search(const ContinuousEnv& env, const StateAdjustment& adjust, const CemConfig& config,
                     GaussianPolicy& policy, const CemResult* warm_start = nullptr);

/// Discounted adjusted return of `policy` averaged over `episodes` seeded runs.
double evaluate_adjusted_return(const ContinuousEnv& env, const ContinuousPolicy& policy,
                                const StateAdjustment& adjust, std::size_t episodes, std::size_t horizon,
                                std::uint64_t seed);

}  // namespace dcrl
