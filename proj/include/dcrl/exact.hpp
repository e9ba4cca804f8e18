#pragma once

#include "dcrl/mdp.hpp"
#include "dcrl/policy.hpp"

namespace dcrl {

// Model-based quantities for a fixed tabular policy. Terminal states have no
// outgoing flow: they are counted once on arrival and contribute nothing after.

/// P_pi(s, s') = sum_a pi(a|s) P(s, a, s'), with terminal rows zeroed.
Mat policy_transition(const DiscreteMdp& mdp, const TabularPolicy& policy);

/// Solves rho = phi + gamma P_pi^T rho.
Vec exact_density(const DiscreteMdp& mdp, const TabularPolicy& policy);

/// rho_bar(s, a) = rho(s) pi(a|s).
Mat exact_occupancy(const DiscreteMdp& mdp, const TabularPolicy& policy);

/// ||rho - phi - gamma P_pi^T rho||_inf.
double density_residual(const DiscreteMdp& mdp, const TabularPolicy& policy, const Vec& rho);

/// V^pi for reward r(s, a) + state_offset(s). An empty offset means zero.
Vec policy_value(const DiscreteMdp& mdp, const TabularPolicy& policy, const Vec& state_offset = Vec());

/// J = phi^T V^pi, from the value-function linear system.
double expected_return(const DiscreteMdp& mdp, const TabularPolicy& policy, const Vec& state_offset = Vec());

/// Discounted expected state cost sum_s rho(s) c(s).
double expected_state_cost(const DiscreteMdp& mdp, const TabularPolicy& policy, const Vec& state_cost);

}  // namespace dcrl
