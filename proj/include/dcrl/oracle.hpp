#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dcrl/dual.hpp"
#include "dcrl/lp.hpp"
#include "dcrl/mdp.hpp"
#include "dcrl/policy.hpp"

namespace dcrl {

/// Occupancy-measure LP over rho_bar(s, a) >= 0 (column s * n_actions + a).
struct OccupancyLp {
  LinearProgram lp;
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<int> upper_row;  // row index of the rho <= rho_max row per state, or -1
  std::vector<int> lower_row;  // row index of the rho >= rho_min row per state, or -1

  std::size_t n_flow_rows() const { return n_states; }
};

OccupancyLp build_occupancy_lp(const DiscreteMdp& mdp, const DensityConstraint& constraint);

struct LpSolution {
  LpStatus status = LpStatus::infeasible;
  Mat rho_bar;
  Vec rho;
  double objective = 0.0;
  Vec sigma_plus;
  Vec sigma_minus;
  Vec flow_duals;
  double flow_residual = 0.0;
  double slackness_residual = 0.0;  // max over box rows of |dual * slack|
};

LpSolution solve_lp(const OccupancyLp& problem);

/// Flow-conservation residual ||sum_a rho_bar(s,.) - phi - gamma P^T rho_bar||_inf.
double flow_residual(const DiscreteMdp& mdp, const Mat& rho_bar);

struct DualityReport {
  bool skipped = false;
  bool passed = false;
  std::string message;
  double lp_objective = 0.0;          // J_d*
  double policy_return = 0.0;         // raw return of the adjusted-greedy policy
  double objective_gap = 0.0;         // |policy_return - J_d*|
  double bound_violation = 0.0;       // max over states, exact density
  double adjusted_optimum = 0.0;      // J_p(sigma*): optimal adjusted-reward value
  double dual_value = 0.0;            // J_p(sigma*) - sigma_minus.rho_min + sigma_plus.rho_max
  double slackness_residual = 0.0;
  bool pure_greedy_passed = false;    // lowest-index greedy policy alone passes
  TabularPolicy policy;
};

struct DualityOptions {
  double objective_tol = 1e-4;  // relative to |J_d*|
  double bound_tol = 1e-6;
};

/// Solves the LP, plugs its box-row duals into the adjusted-reward problem,
/// and checks that a policy greedy for the adjusted Q* attains J_d* while
/// meeting the density bounds. When the adjusted problem has ties, the policy
/// mixes only over greedy actions and is chosen to satisfy complementary
/// slackness.
DualityReport duality_check(const DiscreteMdp& mdp, const DensityConstraint& constraint,
                            const DualityOptions& options = {});

void write_occupancy_lp(std::ostream& out, const OccupancyLp& problem);

}  // namespace dcrl
