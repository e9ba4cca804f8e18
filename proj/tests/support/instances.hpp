#pragma once

#include "dcrl/dual.hpp"
#include "dcrl/exact.hpp"
#include "dcrl/solvers.hpp"
#include "fixtures.hpp"

namespace dcrl::testing {

struct ConstrainedInstance {
  DiscreteMdp mdp;
  DensityConstraint constraint;
};

/// Random MDP with bounds built around a random reference policy's density,
/// so the constraint set is feasible by construction.
inline ConstrainedInstance random_feasible_instance(std::uint64_t seed, std::size_t max_states = 8,
                                                    std::size_t max_actions = 3) {
  Rng rng(Rng::mix(seed + 0xabc));
  const std::size_t S = 2 + rng.index(max_states - 1);
  const std::size_t A = 2 + rng.index(max_actions - 1);
  ConstrainedInstance out{random_mdp(seed, S, A, 0.9), DensityConstraint(S)};
  Mat pi(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(A));
  for (Eigen::Index s = 0; s < pi.rows(); ++s) {
    for (Eigen::Index a = 0; a < pi.cols(); ++a) pi(s, a) = rng.uniform() + 0.05;
    pi.row(s) /= pi.row(s).sum();
  }
  const Vec rho = exact_density(out.mdp, TabularPolicy(pi));
  for (std::size_t s = 0; s < S; ++s) {
    const auto si = static_cast<Eigen::Index>(s);
    const double u = rng.uniform();
    if (u < 0.4) out.constraint.upper[si] = rho[si] * (1.0 + 0.3 * rng.uniform());
    else if (u < 0.6) out.constraint.lower[si] = rho[si] * (1.0 - 0.3 * rng.uniform());
  }
  return out;
}

struct BindingInstance {
  DiscreteMdp mdp;
  DensityConstraint constraint;
  std::size_t capped = 0;
};

/// Random MDP whose reward favors arriving in one state, with an upper bound
/// on that state halfway between its least reachable density and the density
/// of the unconstrained optimum, so the bound binds.
inline BindingInstance binding_upper_instance(std::uint64_t seed) {
  Rng rng(Rng::mix(seed + 0xb1d));
  const std::size_t S = 3 + rng.index(4);
  const std::size_t A = 2 + rng.index(2);
  BindingInstance out{random_mdp(seed, S, A, 0.9), DensityConstraint(S), rng.index(S)};
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) out.mdp.reward[out.mdp.idx(s, a, out.capped)] += 1.0;

  const auto cap = static_cast<Eigen::Index>(out.capped);
  const Vec rho_best = exact_density(out.mdp, value_iteration(out.mdp, Vec::Zero(static_cast<Eigen::Index>(S))).policy);
  DiscreteMdp avoid = out.mdp;
  std::fill(avoid.reward.begin(), avoid.reward.end(), 0.0);
  Vec penalty = Vec::Zero(static_cast<Eigen::Index>(S));
  penalty[cap] = -1.0;
  const Vec rho_low = exact_density(out.mdp, value_iteration(avoid, penalty).policy);
  out.constraint.upper[cap] = rho_low[cap] + 0.5 * (rho_best[cap] - rho_low[cap]);
  return out;
}

}  // namespace dcrl::testing
