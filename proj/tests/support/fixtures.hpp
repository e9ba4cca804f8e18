#pragma once

#include <cmath>
#include <vector>

#include "dcrl/mdp.hpp"
#include "dcrl/policy.hpp"
#include "dcrl/rng.hpp"

namespace dcrl::testing {

/// Dense random MDP: P ~ normalized U^3 rows, R ~ U[0, 1), phi ~ normalized U.
inline DiscreteMdp random_mdp(std::uint64_t seed, std::size_t states, std::size_t actions, double gamma) {
  Rng rng(seed);
  DiscreteMdp mdp(states, actions, gamma);
  for (std::size_t s = 0; s < states; ++s)
    for (std::size_t a = 0; a < actions; ++a) {
      std::vector<double> row(states);
      double total = 0.0;
      for (auto& p : row) {
        const double u = rng.uniform();
        p = u * u * u + 1e-3;
        total += p;
      }
      for (std::size_t n = 0; n < states; ++n) mdp.set(s, a, n, row[n] / total, rng.uniform());
    }
  double total = 0.0;
  for (auto& v : mdp.initial) {
    v = rng.uniform() + 0.05;
    total += v;
  }
  for (auto& v : mdp.initial) v /= total;
  return mdp;
}

/// s0 -> s1 -> ... -> s_{n-1}; the last state self-loops. One action.
inline DiscreteMdp chain_mdp(std::size_t n, double gamma) {
  DiscreteMdp mdp(n, 1, gamma);
  for (std::size_t s = 0; s + 1 < n; ++s) mdp.set(s, 0, s + 1, 1.0, 0.0);
  mdp.set(n - 1, 0, n - 1, 1.0, 0.0);
  mdp.initial[0] = 1.0;
  return mdp;
}

/// Lazy chain: from s, move right with probability `advance`, else stay. Two
/// actions with different advance rates so policies matter.
inline DiscreteMdp lazy_chain(std::size_t n, double gamma) {
  DiscreteMdp mdp(n, 2, gamma);
  const double adv[2] = {0.7, 0.3};
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t a = 0; a < 2; ++a) {
      const std::size_t next = std::min(s + 1, n - 1);
      if (next == s) {
        mdp.set(s, a, s, 1.0, 1.0);
      } else {
        mdp.set(s, a, next, adv[a], 0.0);
        mdp.set(s, a, s, 1.0 - adv[a], 0.0);
      }
    }
  mdp.initial[0] = 0.6;
  mdp.initial[1] = 0.4;
  return mdp;
}

/// All deterministic policies of a small MDP.
inline std::vector<TabularPolicy> all_deterministic(std::size_t states, std::size_t actions) {
  std::vector<TabularPolicy> out;
  std::size_t total = 1;
  for (std::size_t s = 0; s < states; ++s) total *= actions;
  for (std::size_t code = 0; code < total; ++code) {
    std::vector<std::size_t> acts(states);
    std::size_t c = code;
    for (std::size_t s = 0; s < states; ++s) {
      acts[s] = c % actions;
      c /= actions;
    }
    out.push_back(TabularPolicy::deterministic(acts, actions));
  }
  return out;
}

}  // namespace dcrl::testing
