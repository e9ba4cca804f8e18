#pragma once

#include <cstdint>

#include "dcrl/continuous_env.hpp"
#include "dcrl/experience.hpp"
#include "dcrl/mdp.hpp"
#include "dcrl/policy.hpp"

namespace dcrl {

/// Samples n_episodes episodes of at most `horizon` steps. Episode i draws
/// from Rng::stream(seed, i), so the buffer is identical for any worker count.
/// An episode stops early when it reaches a terminal state.
DiscreteBuffer rollout(const DiscreteMdp& mdp, const DiscretePolicy& policy, std::size_t n_episodes,
                       std::size_t horizon, std::uint64_t seed, std::size_t workers = 1);

ContinuousBuffer rollout(const ContinuousEnv& env, const ContinuousPolicy& policy, std::size_t n_episodes,
                         std::size_t horizon, std::uint64_t seed, std::size_t workers = 1);

/// Samples s' ~ P(s, a, .) and returns (s', R(s, a, s')).
std::pair<std::size_t, double> sample_step(const DiscreteMdp& mdp, std::size_t s, std::size_t a, Rng& rng);

std::size_t sample_initial(const DiscreteMdp& mdp, Rng& rng);

}  // namespace dcrl
