#include <gtest/gtest.h>

#include <cmath>

#include "dcrl/density.hpp"
#include "dcrl/dual.hpp"
#include "dcrl/exact.hpp"
#include "dcrl/rollout.hpp"
#include "dcrl/solvers.hpp"
#include "fixtures.hpp"

using namespace dcrl;

namespace {

// x' = x + u, reward -(x^2 + u^2); x0 ~ U[-1, 1].
class LqEnv final : public ContinuousEnv {
 public:
  LqEnv() : box_{Vec::Constant(1, -3.0), Vec::Constant(1, 3.0)} {}
  std::size_t state_dim() const override { return 1; }
  std::size_t action_dim() const override { return 1; }
  const Box& state_bounds() const override { return box_; }
  const Box& action_bounds() const override { return box_; }
  double gamma() const override { return 0.9; }
  Vec reset(std::uint64_t seed) const override {
    Rng rng(seed);
    return Vec::Constant(1, rng.uniform(-1.0, 1.0));
  }
  StepResult step(const Vec& x, const Vec& u, Rng&) const override {
    return {box_.clamp(x + u), -(x[0] * x[0] + u[0] * u[0]), false};
  }

 private:
  Box box_;
};

// Reward -u^2, state irrelevant.
class EffortEnv final : public ContinuousEnv {
 public:
  EffortEnv() : box_{Vec::Constant(1, -2.0), Vec::Constant(1, 2.0)} {}
  std::size_t state_dim() const override { return 1; }
  std::size_t action_dim() const override { return 1; }
  const Box& state_bounds() const override { return box_; }
  const Box& action_bounds() const override { return box_; }
  double gamma() const override { return 0.9; }
  Vec reset(std::uint64_t seed) const override { return Vec::Constant(1, Rng(seed).uniform(-1.0, 1.0)); }
  StepResult step(const Vec& x, const Vec& u, Rng&) const override { return {x, -u.squaredNorm(), false}; }

 private:
  Box box_;
};

const StateAdjustment kNoAdjust = [](const Vec&) { return 0.0; };

// Four-state fork: 0 -> hazard 1 (pays 1 on to the goal) or detour 2 (pays 0.8).
DiscreteMdp hazard_fork() {
  DiscreteMdp mdp(4, 2, 0.9);
  mdp.set(0, 0, 1, 1.0);
  mdp.set(0, 1, 2, 1.0);
  for (std::size_t a = 0; a < 2; ++a) {
    mdp.set(1, a, 3, 1.0, 1.0);
    mdp.set(2, a, 3, 1.0, 0.8);
  }
  mdp.make_terminal(3);
  mdp.initial[0] = 1.0;
  return mdp;
}

// 0 <-> 1 <-> 2 (goal, terminal); action 1 moves right, action 0 left.
DiscreteMdp corridor() {
  DiscreteMdp mdp(3, 2, 0.9);
  mdp.set(0, 0, 0, 1.0);
  mdp.set(0, 1, 1, 1.0);
  mdp.set(1, 0, 0, 1.0);
  mdp.set(1, 1, 2, 1.0, 1.0);
  mdp.make_terminal(2);
  mdp.initial[0] = 1.0;
  return mdp;
}

}  // namespace

TEST(ValueIteration, ZeroRewardsGiveZeroAndIndexZero) {
  DiscreteMdp mdp(3, 2, 0.9);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t a = 0; a < 2; ++a) mdp.set(s, a, (s + a) % 3, 1.0);
  mdp.initial[0] = 1.0;
  const auto vi = value_iteration(mdp, Vec::Zero(3));
  EXPECT_EQ(vi.q.values, Mat::Zero(3, 2));
  for (std::size_t s = 0; s < 3; ++s) EXPECT_DOUBLE_EQ(vi.policy(s, 0), 1.0);
}

TEST(ValueIteration, SingleStateGeometricSeries) {
  DiscreteMdp mdp(1, 2, 0.9);
  mdp.set(0, 0, 0, 1.0, 1.0);
  mdp.set(0, 1, 0, 1.0, 1.0);
  mdp.initial[0] = 1.0;
  const auto vi = value_iteration(mdp, Vec::Zero(1));
  EXPECT_NEAR(vi.q.values(0, 0), 10.0, 1e-9);
  EXPECT_NEAR(vi.q.values(0, 1), 10.0, 1e-9);
}

TEST(ValueIteration, MatchesPolicyEnumeration) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto mdp = dcrl::testing::random_mdp(seed, 4, 3, 0.85);
    Rng rng(seed + 100);
    Vec offset(4);
    for (int s = 0; s < 4; ++s) offset[s] = rng.uniform(-1.0, 1.0);
    const auto vi = value_iteration(mdp, offset);
    EXPECT_LE(vi.residual, 1e-8);
    EXPECT_LE(bellman_residual(mdp, offset, vi.q.values), 1e-8);
    Vec best = Vec::Constant(4, -kInf);
    for (const auto& pi : dcrl::testing::all_deterministic(4, 3)) best = best.cwiseMax(policy_value(mdp, pi, offset));
    EXPECT_LE((vi.values - best).cwiseAbs().maxCoeff(), 1e-8) << "seed " << seed;
  }
}

TEST(ValueIteration, UpperMultiplierSteersAwayFromHazard) {
  const auto mdp = hazard_fork();
  Vec offset = Vec::Zero(4);
  EXPECT_DOUBLE_EQ(value_iteration(mdp, offset).policy(0, 0), 1.0);
  offset[1] = -5.0;  // sigma_plus(1) = 5
  const auto vi = value_iteration(mdp, offset);
  // Enumerate the two first moves under the adjusted reward.
  const double via_hazard = expected_return(mdp, TabularPolicy::deterministic({0, 0, 0, 0}, 2), offset);
  const double via_detour = expected_return(mdp, TabularPolicy::deterministic({1, 0, 0, 0}, 2), offset);
  ASSERT_GT(via_detour, via_hazard);
  EXPECT_DOUBLE_EQ(vi.policy(0, 1), 1.0);
}

TEST(QFromValues, TerminalRowsCarryOffsetOnly) {
  const auto mdp = corridor();
  Vec offset(3);
  offset << 0.1, 0.2, 0.3;
  const Mat q = q_from_values(mdp, offset, Vec::Constant(3, 2.0));
  EXPECT_DOUBLE_EQ(q(2, 0), 0.3);
  EXPECT_DOUBLE_EQ(q(1, 1), 1.0 + 0.2 + 0.9 * 2.0);
}

TEST(GreedyActions, LowestIndexWithinTolerance) {
  Mat q(2, 3);
  q << 1.0, 1.0 + 1e-12, 0.5, 0.0, 2.0, 2.0;
  EXPECT_EQ(greedy_actions(q), (std::vector<std::size_t>{1, 1}));
  EXPECT_EQ(greedy_actions(q, 1e-9), (std::vector<std::size_t>{0, 1}));
}

TEST(RegularizedSolver, ZeroMuIsGreedy) {
  const auto mdp = dcrl::testing::random_mdp(4, 5, 2, 0.9);
  RegularizedSolver solver(mdp, {});
  const auto sol = solver.solve(Vec::Zero(5));
  const auto vi = value_iteration(mdp, Vec::Zero(5));
  EXPECT_TRUE(sol.policy.matrix().isApprox(vi.policy.matrix()));
}

TEST(RegularizedSolver, MatchesGridSearchOnTwoStates) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto mdp = dcrl::testing::random_mdp(seed + 20, 2, 2, 0.8);
    Vec offset(2);
    offset << 0.3, -0.2;
    const double mu = 0.5;
    auto objective = [&](const TabularPolicy& pi) {
      const Vec rho = exact_density(mdp, pi);
      return expected_return(mdp, pi, offset) - 0.5 * mu * rho.squaredNorm();
    };
    double grid_best = -kInf;
    const int steps = 200;
    for (int i = 0; i <= steps; ++i)
      for (int j = 0; j <= steps; ++j) {
        Mat p(2, 2);
        const double a = static_cast<double>(i) / steps, b = static_cast<double>(j) / steps;
        p << a, 1.0 - a, b, 1.0 - b;
        grid_best = std::max(grid_best, objective(TabularPolicy(p)));
      }
    RegularizedSolver solver(mdp, {mu, {}, 1e-12, 400});
    const auto sol = solver.solve(offset);
    EXPECT_NEAR(objective(sol.policy), sol.objective, 1e-9);
    EXPECT_GE(sol.objective, grid_best - 1e-9) << "seed " << seed;
    EXPECT_LE(sol.objective, grid_best + 1e-4) << "seed " << seed;
  }
}

TEST(RegularizedSolver, OccupancyIsConsistentWithPolicy) {
  const auto mdp = dcrl::testing::random_mdp(31, 6, 3, 0.9);
  Rng rng(31);
  Vec offset(6);
  for (int s = 0; s < 6; ++s) offset[s] = rng.uniform(-2.0, 2.0);
  RegularizedSolver solver(mdp, {1.0, {true, false, true, false, true, false}, 1e-10, 400});
  const auto sol = solver.solve(offset);
  EXPECT_LE(sol.gap, 1e-8);
  EXPECT_LE((exact_occupancy(mdp, sol.policy) - sol.occupancy).cwiseAbs().maxCoeff(), 1e-8);
  // Warm start from the kept vertex set gives the same answer.
  const auto again = solver.solve(offset);
  EXPECT_NEAR(again.objective, sol.objective, 1e-9);
}

TEST(QLearning, CorridorMatchesValueIteration) {
  const auto mdp = corridor();
  QLearningConfig cfg;
  cfg.episodes = 300;
  cfg.horizon = 50;
  cfg.seed = 1;
  const auto ql = q_learning(mdp, Vec(), cfg);
  const auto vi = value_iteration(mdp, Vec::Zero(3));
  for (std::size_t s = 0; s < 2; ++s) EXPECT_EQ(ql.policy.greedy_action(s), argmax_lowest(vi.policy.probabilities(s)));
  EXPECT_NEAR(ql.q.values(1, 1), 1.0, 1e-3);
}

TEST(QLearning, ZeroOffsetEqualsNoOffset) {
  const auto mdp = dcrl::testing::random_mdp(2, 4, 2, 0.9);
  QLearningConfig cfg;
  cfg.episodes = 50;
  cfg.horizon = 20;
  cfg.seed = 8;
  EXPECT_EQ(q_learning(mdp, Vec(), cfg).q.values, q_learning(mdp, Vec::Zero(4), cfg).q.values);
}

TEST(QLearning, HazardMultiplierLowersHazardDensity) {
  const auto mdp = hazard_fork();
  QLearningConfig cfg;
  cfg.episodes = 400;
  cfg.horizon = 10;
  cfg.seed = 4;
  Vec offset = Vec::Zero(4);
  const auto plain = q_learning(mdp, offset, cfg);
  offset[1] = -5.0;
  const auto steered = q_learning(mdp, offset, cfg);
  auto hazard_density = [&](const GreedyQPolicy& p) {
    const auto buf = rollout(mdp, p.tabular(), 500, 10, 9);
    return tabular_density(buf, mdp.gamma, 4).values[1];
  };
  EXPECT_LT(hazard_density(steered.policy), hazard_density(plain.policy) - 0.5);
}

TEST(QLearning, ValidatesConfig) {
  QLearningConfig cfg;
  cfg.epsilon_start = 1.5;
  EXPECT_THROW(validate(cfg), std::invalid_argument);
  cfg = QLearningConfig();
  cfg.horizon = 0;
  EXPECT_THROW(validate(cfg), std::invalid_argument);
}

TEST(Cem, DrivesEffortToZero) {
  const EffortEnv env;
  GaussianPolicy pi(env.state_bounds(), env.action_bounds(), Vec::Constant(1, 0.1));
  Vec init = Vec::Zero(static_cast<Eigen::Index>(pi.n_params()));
  init[1] = 1.0;  // bias: constant action 1
  pi.set_params(init);
  CemConfig cfg;
  cfg.horizon = 20;
  cfg.seed = 2;
  cem_search(env, kNoAdjust, cfg, pi);
  for (double x : {-1.0, 0.0, 1.0}) EXPECT_LE(std::abs(pi.mean(Vec::Constant(1, x))[0]), 0.1);
}

TEST(Cem, SameSeedSameParameters) {
  const LqEnv env;
  CemConfig cfg;
  cfg.iterations = 5;
  cfg.horizon = 30;
  cfg.seed = 77;
  GaussianPolicy a(env.state_bounds(), env.action_bounds(), Vec::Constant(1, 0.1));
  GaussianPolicy b = a;
  cem_search(env, kNoAdjust, cfg, a);
  cfg.workers = 3;
  cem_search(env, kNoAdjust, cfg, b);
  EXPECT_EQ(a.params(), b.params());
}

TEST(Cem, FlatReturnsKeepMeanAndWidenSearch) {
  const EffortEnv env;
  GaussianPolicy pi(env.state_bounds(), env.action_bounds(), Vec::Constant(1, 0.1));
  Vec init(2);
  init << 0.3, -0.4;
  pi.set_params(init);
  // Reward ignores the action, so every candidate ties.
  class Flat final : public ContinuousEnv {
   public:
    explicit Flat(const EffortEnv& e) : e_(e) {}
    std::size_t state_dim() const override { return 1; }
    std::size_t action_dim() const override { return 1; }
    const Box& state_bounds() const override { return e_.state_bounds(); }
    const Box& action_bounds() const override { return e_.action_bounds(); }
    double gamma() const override { return 0.9; }
    Vec reset(std::uint64_t seed) const override { return e_.reset(seed); }
    StepResult step(const Vec& x, const Vec&, Rng&) const override { return {x, -1.0, false}; }

   private:
    const EffortEnv& e_;
  } flat(env);
  CemConfig cfg;
  cfg.iterations = 3;
  cfg.horizon = 5;
  cfg.initial_std = 0.7;
  const auto res = cem_search(flat, kNoAdjust, cfg, pi);
  EXPECT_EQ(res.mean, init);
  EXPECT_TRUE((res.std.array() >= 0.7).all());
}

TEST(Cem, RejectsSmallPopulation) {
  CemConfig cfg;
  cfg.population = 3;
  EXPECT_THROW(validate(cfg), std::invalid_argument);
}

TEST(Cem, LinearQuadraticWithinTenPercentOfRiccatiGain) {
  const LqEnv env;
  const double g = env.gamma();
  // Discounted scalar Riccati: P = 1 + g P - (g P)^2 / (1 + g P), u = -K x.
  double p = 1.0;
  for (int i = 0; i < 1000; ++i) p = 1.0 + g * p - (g * p) * (g * p) / (1.0 + g * p);
  const double k = g * p / (1.0 + g * p);

  GaussianPolicy optimal(env.state_bounds(), env.action_bounds(), Vec::Constant(1, 0.1));
  Vec w(2);
  w << -3.0 * k, 0.0;  // features scale x by 1/3
  optimal.set_params(w);
  optimal.set_eval_mode(true);
  const std::size_t horizon = 100;
  const double opt_cost = -evaluate_adjusted_return(env, optimal, kNoAdjust, 400, horizon, 5);
  EXPECT_NEAR(opt_cost, p / 3.0, 0.1 * p / 3.0);  // E[x0^2] = 1/3

  GaussianPolicy pi(env.state_bounds(), env.action_bounds(), Vec::Constant(1, 0.1));
  CemConfig cfg;
  cfg.horizon = horizon;
  cfg.iterations = 40;
  cfg.population = 32;
  cfg.initial_std = 1.0;
  cfg.episodes_per_candidate = 8;
  cfg.seed = 3;
  cem_search(env, kNoAdjust, cfg, pi);
  pi.set_eval_mode(true);
  const double cem_cost = -evaluate_adjusted_return(env, pi, kNoAdjust, 400, horizon, 5);
  EXPECT_LE(cem_cost, 1.1 * opt_cost);
}
