#include <gtest/gtest.h>

#include <sstream>

#include "dcrl/exact.hpp"
#include "dcrl/experience.hpp"
#include "dcrl/mdp.hpp"
#include "dcrl/rollout.hpp"
#include "fixtures.hpp"

using namespace dcrl;
using dcrl::testing::chain_mdp;
using dcrl::testing::random_mdp;

namespace {

// Truncated-series density sum_t gamma^t phi^T P_pi^t, independent of the LU path.
Vec series_density(const DiscreteMdp& mdp, const TabularPolicy& pi, std::size_t steps = 4000) {
  const auto n = static_cast<Eigen::Index>(mdp.n_states);
  Vec dist = Eigen::Map<const Vec>(mdp.initial.data(), n);
  Vec rho = Vec::Zero(n);
  double disc = 1.0;
  for (std::size_t t = 0; t < steps; ++t) {
    rho += disc * dist;
    Vec next = Vec::Zero(n);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      if (mdp.is_terminal(s)) continue;
      for (std::size_t a = 0; a < mdp.n_actions; ++a)
        for (std::size_t k = 0; k < mdp.n_states; ++k)
          next[static_cast<Eigen::Index>(k)] += dist[static_cast<Eigen::Index>(s)] * pi(s, a) * mdp.p(s, a, k);
    }
    dist = next;
    disc *= mdp.gamma;
  }
  return rho;
}

TabularPolicy random_policy(std::uint64_t seed, std::size_t states, std::size_t actions) {
  Rng rng(seed);
  Mat m(static_cast<Eigen::Index>(states), static_cast<Eigen::Index>(actions));
  for (Eigen::Index s = 0; s < m.rows(); ++s) {
    for (Eigen::Index a = 0; a < m.cols(); ++a) m(s, a) = rng.uniform() + 0.01;
    m.row(s) /= m.row(s).sum();
  }
  return TabularPolicy(m);
}

}  // namespace

TEST(ValidateMdp, WellFormedChainHasEmptyReport) {
  EXPECT_TRUE(validate_mdp(chain_mdp(2, 0.9)).empty());
}

TEST(ValidateMdp, ShortRowNamesStateAndAction) {
  DiscreteMdp mdp = chain_mdp(2, 0.9);
  mdp.set(0, 0, 1, 0.9, 0.0);
  const auto report = validate_mdp(mdp);
  ASSERT_EQ(report.size(), 1u);
  EXPECT_NE(report[0].message.find("(s=0, a=0)"), std::string::npos);
}

TEST(ValidateMdp, DiscountOneRejected) {
  DiscreteMdp mdp = chain_mdp(2, 1.0);
  const auto report = validate_mdp(mdp);
  ASSERT_EQ(report.size(), 1u);
  EXPECT_EQ(report[0].message, "discount must be < 1");
  EXPECT_THROW(require_valid(mdp), std::invalid_argument);
}

TEST(ValidateMdp, NegativeProbabilityAndBadInitialReported) {
  DiscreteMdp mdp = chain_mdp(2, 0.5);
  mdp.set(0, 0, 0, -0.5, 0.0);
  mdp.set(0, 0, 1, 1.5, 0.0);
  mdp.initial = {0.5, 0.2};
  const auto report = validate_mdp(mdp);
  EXPECT_EQ(report.size(), 2u);
}

TEST(Rollout, SingleStateSelfLoop) {
  DiscreteMdp mdp(1, 2, 0.9);
  mdp.set(0, 0, 0, 1.0, 1.0);
  mdp.set(0, 1, 0, 1.0, 1.0);
  mdp.initial[0] = 1.0;
  const auto buf = rollout(mdp, TabularPolicy::uniform(1, 2), 3, 5, 7);
  ASSERT_EQ(buf.size(), 3u);
  for (const auto& ep : buf.episodes) {
    ASSERT_EQ(ep.length(), 5u);
    for (std::size_t j = 0; j <= ep.length(); ++j) EXPECT_EQ(ep.state_at(j), 0);
    for (std::size_t j = 0; j < ep.length(); ++j) EXPECT_EQ(ep.transitions[j].step_index, j);
  }
}

TEST(Rollout, SameSeedIsBitIdenticalAcrossWorkerCounts) {
  const DiscreteMdp mdp = random_mdp(3, 5, 3, 0.9);
  const TabularPolicy pi = random_policy(4, 5, 3);
  const auto a = rollout(mdp, pi, 64, 30, 11, 1);
  const auto b = rollout(mdp, pi, 64, 30, 11, 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a.episodes[i].start, b.episodes[i].start);
    ASSERT_EQ(a.episodes[i].length(), b.episodes[i].length());
    for (std::size_t j = 0; j < a.episodes[i].length(); ++j) {
      const auto& x = a.episodes[i].transitions[j];
      const auto& y = b.episodes[i].transitions[j];
      EXPECT_EQ(x.state, y.state);
      EXPECT_EQ(x.action, y.action);
      EXPECT_EQ(x.next_state, y.next_state);
      EXPECT_EQ(x.raw_reward, y.raw_reward);
    }
  }
}

TEST(Rollout, DeterministicChainStopsAtTerminal) {
  DiscreteMdp mdp = chain_mdp(3, 0.9);
  mdp.make_terminal(2);
  const auto buf = rollout(mdp, TabularPolicy::uniform(3, 1), 1, 50, 0);
  ASSERT_EQ(buf.episodes[0].length(), 2u);
  EXPECT_EQ(buf.episodes[0].state_at(2), 2);
}

TEST(Rollout, ZeroHorizonRejected) {
  EXPECT_THROW(rollout(chain_mdp(2, 0.9), TabularPolicy::uniform(2, 1), 1, 0, 0), std::invalid_argument);
}

TEST(ExactDensity, AbsorbingStateGeometricSeries) {
  DiscreteMdp mdp(1, 1, 0.9);
  mdp.set(0, 0, 0, 1.0, 0.0);
  mdp.initial[0] = 1.0;
  EXPECT_NEAR(exact_density(mdp, TabularPolicy::uniform(1, 1))[0], 10.0, 1e-12);
}

TEST(ExactDensity, ZeroDiscountGivesInitialDistribution) {
  DiscreteMdp mdp = random_mdp(9, 4, 2, 0.0);
  const Vec rho = exact_density(mdp, TabularPolicy::uniform(4, 2));
  for (std::size_t s = 0; s < 4; ++s) EXPECT_EQ(rho[static_cast<Eigen::Index>(s)], mdp.initial[s]);
}

TEST(ExactDensity, TwoStateChainHandSum) {
  const Vec rho = exact_density(chain_mdp(2, 0.5), TabularPolicy::uniform(2, 1));
  EXPECT_NEAR(rho[0], 1.0, 1e-12);
  EXPECT_NEAR(rho[1], 1.0, 1e-12);
}

TEST(ExactDensity, ResidualAndTotalMassOnRandomInstances) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const std::size_t S = 2 + seed % 7, A = 1 + seed % 3;
    const DiscreteMdp mdp = random_mdp(seed, S, A, 0.5 + 0.019 * static_cast<double>(seed));
    const TabularPolicy pi = random_policy(seed + 100, S, A);
    const Vec rho = exact_density(mdp, pi);
    EXPECT_LE(density_residual(mdp, pi, rho), 1e-10);
    EXPECT_NEAR(rho.sum(), 1.0 / (1.0 - mdp.gamma), 1e-8);
    EXPECT_LE((rho - series_density(mdp, pi)).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(ExpectedReturn, ZeroRewardsGiveZero) {
  DiscreteMdp mdp = random_mdp(2, 4, 2, 0.9);
  std::fill(mdp.reward.begin(), mdp.reward.end(), 0.0);
  EXPECT_EQ(expected_return(mdp, TabularPolicy::uniform(4, 2)), 0.0);
}

TEST(ExpectedReturn, AbsorbingUnitReward) {
  DiscreteMdp mdp(1, 1, 0.9);
  mdp.set(0, 0, 0, 1.0, 1.0);
  mdp.initial[0] = 1.0;
  EXPECT_NEAR(expected_return(mdp, TabularPolicy::uniform(1, 1)), 10.0, 1e-12);
}

TEST(ExpectedReturn, MatchesOccupancyInnerProductOnRandomMdps) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const DiscreteMdp mdp = random_mdp(seed + 40, 4, 3, 0.9);
    const TabularPolicy pi = random_policy(seed, 4, 3);
    const Vec rho = series_density(mdp, pi);
    double oracle = 0.0;
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t a = 0; a < 3; ++a) oracle += rho[static_cast<Eigen::Index>(s)] * pi(s, a) * mdp.expected_reward(s, a);
    EXPECT_NEAR(expected_return(mdp, pi), oracle, 1e-8);
  }
}

TEST(EstimateReturn, DirectSum) {
  DiscreteBuffer buf;
  DiscreteEpisode ep;
  ep.transitions = {{0, 0, 1.0, 0, 0}, {0, 0, 1.0, 0, 1}};
  buf.episodes = {ep};
  EXPECT_DOUBLE_EQ(estimate_return(buf, 0.5), 1.5);
  buf.episodes.push_back(ep);
  EXPECT_DOUBLE_EQ(estimate_return(buf, 0.5), 1.5);
}

TEST(EstimateReturn, EmptyBufferRejected) {
  EXPECT_THROW(estimate_return(DiscreteBuffer{}, 0.9), std::invalid_argument);
}

TEST(EstimateReturn, MonteCarloWithinThreeStandardErrors) {
  const DiscreteMdp mdp = random_mdp(77, 5, 2, 0.8);
  const TabularPolicy pi = random_policy(78, 5, 2);
  const auto buf = rollout(mdp, pi, 20000, default_horizon(0.8, 1e-6), 5);
  const double exact = expected_return(mdp, pi);
  EXPECT_LE(std::abs(estimate_return(buf, 0.8) - exact), 3.0 * return_standard_error(buf, 0.8) + 1e-6);
}

TEST(MdpText, RoundTripPreservesModel) {
  DiscreteMdp mdp = random_mdp(12, 4, 2, 0.95);
  mdp.make_terminal(3);
  std::stringstream ss;
  write_mdp(ss, mdp);
  const DiscreteMdp back = read_mdp(ss);
  EXPECT_EQ(back.n_states, mdp.n_states);
  EXPECT_EQ(back.gamma, mdp.gamma);
  EXPECT_EQ(back.transition, mdp.transition);
  EXPECT_EQ(back.reward, mdp.reward);
  EXPECT_EQ(back.initial, mdp.initial);
  EXPECT_EQ(back.terminal, mdp.terminal);
}

TEST(MdpText, MalformedLineReportsLineNumber) {
  std::stringstream ss("states 2\nactions 1\ngamma 0.5\ninitial 1 0\ntransitions\n0 0 oops\nend\n");
  try {
    read_mdp(ss);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("line 6"), std::string::npos);
  }
}

TEST(Horizon, TailBoundHolds) {
  for (double g : {0.5, 0.9, 0.99}) {
    const std::size_t t = default_horizon(g, 1e-3);
    EXPECT_LE(tail_mass(g, t), 1e-3);
    EXPECT_GT(tail_mass(g, t - 1), 1e-3);
  }
}
