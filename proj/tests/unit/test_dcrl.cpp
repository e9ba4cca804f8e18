#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <sstream>

#include "dcrl/dcrl.hpp"
#include "dcrl/envs.hpp"
#include "dcrl/exact.hpp"
#include "dcrl/oracle.hpp"
#include "instances.hpp"

using namespace dcrl;
using namespace dcrl::testing;

namespace {

DiscreteMdp two_state_mdp() {
  DiscreteMdp mdp(2, 2, 0.9);
  mdp.set(0, 0, 0, 1.0, 0.2);
  mdp.set(0, 1, 1, 1.0, 1.0);
  mdp.set(1, 0, 0, 1.0, 0.2);
  mdp.set(1, 1, 1, 0.8, 1.0);
  mdp.set(1, 1, 0, 0.2, 0.2);
  mdp.initial = {1.0, 0.0};
  return mdp;
}

DcrlConfig small_config(std::uint64_t seed) {
  DcrlConfig cfg;
  cfg.episodes = 2000;
  cfg.seed = seed;
  return cfg;
}

// Chain 0 -> 1 -> 2 (terminal) with an extra state 3 that nothing reaches.
DiscreteMdp chain_with_orphan() {
  DiscreteMdp mdp(4, 1, 0.9);
  mdp.set(0, 0, 1, 1.0, 0.0);
  mdp.set(1, 0, 2, 1.0, 1.0);
  mdp.set(3, 0, 3, 1.0, 0.0);
  mdp.make_terminal(2);
  mdp.initial = {1.0, 0.0, 0.0, 0.0};
  return mdp;
}

}  // namespace

TEST(DcrlConfig, ValidationAndSchedules) {
  DcrlConfig cfg;
  EXPECT_NO_THROW(validate(cfg));
  cfg.max_iterations = 0;
  EXPECT_THROW(validate(cfg), std::invalid_argument);
  cfg = DcrlConfig();
  cfg.episodes = 0;
  EXPECT_THROW(validate(cfg), std::invalid_argument);
  cfg = DcrlConfig();
  cfg.alpha = 0.4;
  cfg.schedule = StepSchedule::inverse_sqrt;
  EXPECT_DOUBLE_EQ(cfg.step_size(0), 0.4);
  EXPECT_DOUBLE_EQ(cfg.step_size(3), 0.2);
  EXPECT_EQ(parse_step_schedule("constant"), StepSchedule::constant);
  EXPECT_EQ(parse_inner_solver("q_learning"), InnerSolver::q_learning);
  EXPECT_THROW(parse_inner_solver("sarsa"), std::invalid_argument);
}

TEST(RunDcrl, InactiveConstraintBehavesUnconstrained) {
  const DiscreteMdp mdp = random_mdp(5, 5, 3, 0.9);
  const DcrlResult res = run_dcrl(mdp, DensityConstraint(5), small_config(1));
  EXPECT_EQ(res.reason, Termination::kkt_satisfied);
  ASSERT_EQ(res.records.size(), 1u);
  EXPECT_EQ(res.sigma_plus.values, Vec::Zero(5));
  EXPECT_EQ(res.sigma_minus.values, Vec::Zero(5));
  const auto vi = value_iteration(mdp, Vec::Zero(5));
  EXPECT_TRUE(res.policy.matrix().isApprox(vi.policy.matrix()));
}

TEST(RunDcrl, RejectsInvalidConstraint) {
  DensityConstraint c(2);
  c.lower[0] = 2.0;
  c.upper[0] = 1.0;
  EXPECT_THROW(run_dcrl(two_state_mdp(), c, small_config(0)), std::invalid_argument);
  EXPECT_THROW(run_dcrl(two_state_mdp(), DensityConstraint(3), small_config(0)), std::invalid_argument);
}

TEST(RunDcrl, TwoStateBindingCapMatchesOracle) {
  const DiscreteMdp mdp = two_state_mdp();
  DensityConstraint c(2);
  c.upper[1] = 4.0;
  const LpSolution lp = solve_lp(build_occupancy_lp(mdp, c));
  ASSERT_EQ(lp.status, LpStatus::optimal);
  ASSERT_GT(lp.sigma_plus[1], 0.0);

  DcrlConfig cfg = small_config(3);
  cfg.mu = 0.1;
  cfg.alpha = 0.1;
  cfg.episodes = 4000;
  const DcrlResult res = run_dcrl(mdp, c, cfg);
  EXPECT_EQ(res.reason, Termination::kkt_satisfied);
  EXPECT_LE(res.density.values[1], 4.0 + res.tol_feas);
  EXPECT_NEAR(res.records.back().j_hat, lp.objective, 0.02 * std::abs(lp.objective));
}

TEST(RunDcrl, UnreachableLowerBoundIsDiagnosedInfeasible) {
  const DiscreteMdp mdp = chain_with_orphan();
  DensityConstraint c(4);
  c.lower[3] = 0.5;
  DcrlConfig cfg = small_config(0);
  cfg.episodes = 50;
  cfg.alpha = 1.0;
  cfg.sigma_cap = 2.0;
  cfg.cap_patience = 3;
  const DcrlResult res = run_dcrl(mdp, c, cfg);
  EXPECT_EQ(res.reason, Termination::infeasible_diagnosis);
  EXPECT_DOUBLE_EQ(res.density.values[3], 0.0);
  EXPECT_GT(res.records.back().sigma_minus_max, cfg.sigma_cap);
}

TEST(RunDcrl, TerminationConsistentWithLastRecord) {
  const auto inst = binding_upper_instance(1001);
  DcrlConfig cfg = small_config(9);
  cfg.max_iterations = 5;
  const DcrlResult res = run_dcrl(inst.mdp, inst.constraint, cfg);
  ASSERT_FALSE(res.records.empty());
  const IterationRecord& last = res.records.back();
  for (std::size_t i = 0; i < res.records.size(); ++i) EXPECT_EQ(res.records[i].k, i);
  const bool met = last.feas_violation <= res.tol_feas && last.cs_upper <= res.tol_cs && last.cs_lower <= res.tol_cs;
  EXPECT_EQ(met, res.reason == Termination::kkt_satisfied);
  if (res.reason == Termination::max_iters) EXPECT_EQ(res.records.size(), cfg.max_iterations);
}

TEST(RunDcrl, SameSeedSameRecords) {
  const auto inst = binding_upper_instance(1002);
  DcrlConfig cfg = small_config(4);
  cfg.max_iterations = 8;
  cfg.mu = 0.1;
  const DcrlResult a = run_dcrl(inst.mdp, inst.constraint, cfg);
  cfg.workers = 3;
  const DcrlResult b = run_dcrl(inst.mdp, inst.constraint, cfg);
  std::ostringstream sa, sb;
  write_metrics_csv(sa, a.records);
  write_metrics_csv(sb, b.records);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(RunDcrl, QLearningInnerSolverOnInactiveProblem) {
  const DiscreteMdp mdp = lazy_chain(4, 0.9);
  DcrlConfig cfg = small_config(2);
  cfg.solver = InnerSolver::q_learning;
  cfg.q_learning.episodes = 300;
  cfg.q_learning.horizon = 40;
  const DcrlResult res = run_dcrl(mdp, DensityConstraint(4), cfg);
  EXPECT_EQ(res.reason, Termination::kkt_satisfied);
  EXPECT_GE(res.records.front().inner_residual, 0.0);
  EXPECT_TRUE(std::isnan(res.records.front().dual_objective));
}

TEST(RunDcrl, DualObjectiveMostlyNonDecreasingWithRegularizer) {
  const auto inst = binding_upper_instance(1003);
  DcrlConfig cfg = small_config(5);
  cfg.mu = 0.1;
  cfg.episodes = 4000;
  const DcrlResult res = run_dcrl(inst.mdp, inst.constraint, cfg);
  std::size_t checked = 0, ok = 0;
  for (std::size_t i = 1; i < res.records.size(); ++i) {
    if (res.records[i - 1].g_norm <= 1e-3) continue;
    ++checked;
    if (res.records[i].dual_objective >= res.records[i - 1].dual_objective - 1e-12) ++ok;
  }
  if (checked > 0) EXPECT_GE(static_cast<double>(ok), 0.9 * static_cast<double>(checked));
}

TEST(DualObjective, MatchesLpValueAtOptimalMultipliers) {
  const auto inst = random_feasible_instance(77);
  const LpSolution lp = solve_lp(build_occupancy_lp(inst.mdp, inst.constraint));
  ASSERT_EQ(lp.status, LpStatus::optimal);
  RegularizedSolver solver(inst.mdp, {});
  const auto sol = solver.solve(reward_offset(lp.sigma_plus, lp.sigma_minus));
  EXPECT_NEAR(-dual_objective(sol.objective, inst.constraint, lp.sigma_plus, lp.sigma_minus), lp.objective,
              1e-6 * (1.0 + std::abs(lp.objective)));
}

TEST(RunRcpo, HugeThresholdKeepsLambdaZero) {
  const DiscreteMdp mdp = random_mdp(8, 5, 2, 0.9);
  Vec cost = Vec::Zero(5);
  cost[2] = 1.0;
  const RcpoResult out = run_rcpo(mdp, cost, 1e6, small_config(1));
  EXPECT_EQ(out.result.reason, Termination::kkt_satisfied);
  EXPECT_DOUBLE_EQ(out.lambda, 0.0);
  const DcrlResult plain = run_dcrl(mdp, DensityConstraint(5), small_config(1));
  EXPECT_EQ(out.result.records.front().j_hat, plain.records.front().j_hat);
}

TEST(RunRcpo, HazardCostMeetsThreshold) {
  const DiscreteMdp mdp = two_state_mdp();
  Vec cost = Vec::Zero(2);
  cost[1] = 1.0;
  DcrlConfig cfg = small_config(6);
  cfg.mu = 0.1;
  cfg.episodes = 4000;
  const double eta = 4.0;
  const RcpoResult out = run_rcpo(mdp, cost, eta, cfg);
  EXPECT_EQ(out.result.reason, Termination::kkt_satisfied);
  // Exact cost value of the returned policy by a linear solve.
  const double exact_cost = expected_state_cost(mdp, out.result.policy, cost);
  EXPECT_LE(exact_cost, eta + 5.0 * out.result.tol_feas);
  EXPECT_LE(out.cost_value, eta + out.result.tol_feas);
}

TEST(RunRcpo, RejectsBadArguments) {
  const DiscreteMdp mdp = two_state_mdp();
  EXPECT_THROW(run_rcpo(mdp, Vec::Zero(3), 1.0, small_config(0)), std::invalid_argument);
  EXPECT_THROW(run_rcpo(mdp, Vec::Constant(2, -1.0), 1.0, small_config(0)), std::invalid_argument);
  EXPECT_THROW(run_rcpo(mdp, Vec::Zero(2), -1.0, small_config(0)), std::invalid_argument);
}

TEST(RunCers, TriviallySatisfiableSolvesInFirstGeneration) {
  const DiscreteMdp mdp = random_mdp(3, 4, 2, 0.9);
  DensityConstraint c(4);
  c.upper[0] = 100.0;
  CersConfig cfg;
  cfg.episodes = 200;
  const CersResult res = run_cers(mdp, c, cfg);
  EXPECT_TRUE(res.solved);
  EXPECT_FALSE(res.timeout);
  EXPECT_EQ(res.generations, 1u);
  EXPECT_EQ(res.evaluations, 1u);
}

TEST(RunCers, UnreachableBoundTimesOut) {
  const DiscreteMdp mdp = chain_with_orphan();
  DensityConstraint c(4);
  c.lower[3] = 0.5;
  CersConfig cfg;
  cfg.episodes = 20;
  cfg.time_budget_s = 0.05;
  const CersResult res = run_cers(mdp, c, cfg);
  EXPECT_FALSE(res.solved);
  EXPECT_TRUE(res.timeout);
  EXPECT_GE(res.best_violation, 0.5 - 1e-12);
}

TEST(Threshold, SingleIndicatorState) {
  DensityConstraint c(3);
  c.upper[1] = 0.2;
  Vec cost = Vec::Zero(3);
  cost[1] = 1.0;
  const auto t = density_to_value_threshold(c, cost);
  EXPECT_DOUBLE_EQ(t.eta, 0.2);
  ASSERT_EQ(t.contributions.size(), 1u);
  EXPECT_EQ(t.contributions[0].first, 1u);
}

TEST(Threshold, ZeroCostGivesZero) {
  DensityConstraint c(3);
  c.upper[0] = 0.7;
  EXPECT_DOUBLE_EQ(density_to_value_threshold(c, Vec::Zero(3)).eta, 0.0);
}

TEST(Threshold, InfiniteBoundsRejected) {
  Vec cost = Vec::Ones(2);
  EXPECT_THROW(density_to_value_threshold(DensityConstraint(2), cost), std::invalid_argument);
  DensityConstraint c(2);
  c.upper[0] = 1.0;
  EXPECT_THROW(density_to_value_threshold(c, cost), std::invalid_argument);
}

TEST(Threshold, FeasibleLpOccupancySatisfiesValueBound) {
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const auto inst = random_feasible_instance(300 + seed);
    if (!inst.constraint.has_finite_upper()) continue;
    const LpSolution lp = solve_lp(build_occupancy_lp(inst.mdp, inst.constraint));
    ASSERT_EQ(lp.status, LpStatus::optimal);
    Vec cost = Vec::Zero(inst.constraint.upper.size());
    for (Eigen::Index s = 0; s < cost.size(); ++s)
      if (std::isfinite(inst.constraint.upper[s])) cost[s] = 1.0;
    const double eta = density_to_value_threshold(inst.constraint, cost).eta;
    EXPECT_LE(lp.rho.dot(cost), eta + 1e-9) << "seed " << seed;
  }
}

TEST(MetricsCsv, HeadersAndRows) {
  std::vector<IterationRecord> recs(2);
  recs[1].k = 1;
  recs[1].wall_ms = 12.5;
  std::ostringstream m, t, d;
  write_metrics_csv(m, recs);
  write_timing_csv(t, recs);
  write_diagnostics_csv(d, recs);
  EXPECT_EQ(m.str().substr(0, m.str().find('\n')),
            "k,J_hat,feas_violation,cs_upper,cs_lower,g_norm,sigma_plus_max,sigma_minus_max");
  EXPECT_EQ(t.str(), "k,wall_ms\n0,0.000\n1,12.500\n");
  EXPECT_NE(d.str().find("0,0,,0\n"), std::string::npos);
}

TEST(RunCers, ExpressTenPointsDcrlSolvesFaster) {
  ExpressDeliveryParams ep;
  ep.n_points = 10;
  ep.rho_min = 0.1;
  ep.seed = 10;
  const auto b = make_express_delivery(ep);

  DcrlConfig cfg;
  cfg.mu = 1.0;
  cfg.alpha = 1.0;
  cfg.episodes = 20000;
  cfg.inner_tol = 1e-3;
  cfg.tol_feas = 0.01;
  cfg.tol_cs = 0.2;
  cfg.seed = 1;
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = run_dcrl(b.mdp, b.constraint, cfg);
  const double dcrl_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ASSERT_EQ(res.reason, Termination::kkt_satisfied);

  CersConfig cc;
  cc.mu = 1.0;
  cc.inner_tol = 1e-3;
  cc.episodes = 20000;
  cc.tol_feas = 0.01;
  cc.time_budget_s = 5.0;
  cc.seed = 1;
  const auto cers = run_cers(b.mdp, b.constraint, cc);
  EXPECT_LT(dcrl_s, cers.seconds);
}
