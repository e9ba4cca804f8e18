#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "dcrl/continuous_env.hpp"
#include "dcrl/density.hpp"
#include "dcrl/dual.hpp"
#include "dcrl/mdp.hpp"
#include "dcrl/policy.hpp"
#include "dcrl/solvers.hpp"

namespace dcrl {

enum class InnerSolver { exact, q_learning };
enum class StepSchedule { constant, inverse_sqrt };
enum class Termination { kkt_satisfied, max_iters, infeasible_diagnosis };

std::string to_string(InnerSolver s);
std::string to_string(StepSchedule s);
std::string to_string(Termination t);
InnerSolver parse_inner_solver(const std::string& name);
StepSchedule parse_step_schedule(const std::string& name);

struct DcrlConfig {
  std::size_t max_iterations = 200;
  double alpha = 0.1;
  StepSchedule schedule = StepSchedule::constant;
  double tol_feas = 1e-2;       // multiplied by DensityConstraint::scale()
  double tol_cs = 1e-2;         // multiplied by DensityConstraint::scale()
  double tail = 1e-3;           // rollout horizon from gamma^(T+1)/(1-gamma) <= tail
  std::size_t horizon = 0;      // 0: derive from tail
  std::size_t episodes = 1000;  // N, episodes per density estimate
  double smoothing = 0.0;       // EMA weight on the previous density estimate
  InnerSolver solver = InnerSolver::exact;
  double mu = 0.0;              // quadratic regularizer on constrained states (exact solver)
  double inner_tol = 1e-9;      // relative Frank-Wolfe gap of the regularized solve
  QLearningConfig q_learning;
  CemConfig cem;
  double sigma_cap = 1e4;       // infeasibility heuristic
  std::size_t cap_patience = 10;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  std::size_t resolved_horizon(double gamma) const;
  double step_size(std::size_t k) const;
};

void validate(const DcrlConfig& config);

struct IterationRecord {
  std::size_t k = 0;
  double j_hat = 0.0;
  double feas_violation = 0.0;
  double cs_upper = 0.0;
  double cs_lower = 0.0;
  double g_norm = 0.0;
  double sigma_plus_max = 0.0;
  double sigma_minus_max = 0.0;
  double wall_ms = 0.0;
  double inner_residual = 0.0;  // Bellman residual, Frank-Wolfe gap, or CEM elite spread
  double dual_objective = std::numeric_limits<double>::quiet_NaN();  // d(sigma_k), exact solver only
  double density_mass = 0.0;
};

struct DcrlResult {
  TabularPolicy policy;
  TabularDensity density;
  TabularMultipliers sigma_plus;
  TabularMultipliers sigma_minus;
  KktReport kkt;
  std::vector<IterationRecord> records;
  Termination reason = Termination::max_iters;
  double tol_feas = 0.0;  // absolute tolerances actually used
  double tol_cs = 0.0;
  std::size_t horizon = 0;
};

/// Primal-dual loop on a discrete problem. The model is used by the exact
/// inner solver only; densities always come from fresh rollouts.
DcrlResult run_dcrl(const DiscreteMdp& mdp, const DensityConstraint& constraint, const DcrlConfig& config);

/// Density constraint on a projection of a continuous state, imposed at the
/// points of a support grid over the projected dimensions.
struct ContinuousConstraint {
  std::vector<std::size_t> dims;
  SupportGrid grid;
  DensityConstraint bounds;  // one entry per grid point
};

struct ContinuousDcrlResult {
  GaussianPolicy policy;
  CemResult search;
  Vec density;  // KDE at the grid points
  SampledMultipliers sigma_plus;
  SampledMultipliers sigma_minus;
  KktReport kkt;
  std::vector<IterationRecord> records;
  Termination reason = Termination::max_iters;
  double tol_feas = 0.0;
  double tol_cs = 0.0;
  std::size_t horizon = 0;
};

ContinuousDcrlResult run_dcrl(const ContinuousEnv& env, const ContinuousConstraint& constraint,
                              const GaussianPolicy& initial_policy, const DcrlConfig& config,
                              const KdeOptions& kde = {});

struct RcpoResult {
  DcrlResult result;  // sigma fields hold lambda * cost; density is the last estimate
  double lambda = 0.0;
  double cost_value = 0.0;  // last estimated sum_s rho(s) c(s)
};

/// Scalar Lagrangian baseline: trains on r - lambda c(s) and updates
/// lambda <- max(0, lambda + alpha (J_c - eta)).
RcpoResult run_rcpo(const DiscreteMdp& mdp, const Vec& state_cost, double eta, const DcrlConfig& config);

struct CersConfig {
  std::size_t population = 16;
  double elite_fraction = 0.2;
  double initial_mean = 0.0;
  double initial_std = 1.0;
  double std_floor = 1e-3;
  std::size_t max_generations = 1000;
  double time_budget_s = 60.0;
  std::size_t episodes = 1000;
  double tail = 1e-3;
  double tol_feas = 1e-2;  // multiplied by DensityConstraint::scale()
  double mu = 0.0;         // inner solver regularizer, as in DcrlConfig
  double inner_tol = 1e-9;
  std::uint64_t seed = 0;
};

struct CersResult {
  bool solved = false;
  bool timeout = false;
  double seconds = 0.0;
  std::size_t generations = 0;
  std::size_t evaluations = 0;
  double best_violation = std::numeric_limits<double>::infinity();
  TabularPolicy policy;
  TabularDensity density;
  Vec sigma_plus;
  Vec sigma_minus;
};

/// Cross-entropy reward shaping: samples multiplier vectors from a diagonal
/// Gaussian, trains a policy for each, and refits on the least-violating
/// elites until a feasible policy appears or the time budget runs out.
CersResult run_cers(const DiscreteMdp& mdp, const DensityConstraint& constraint, const CersConfig& config);

struct ThresholdConversion {
  double eta = 0.0;
  std::vector<std::pair<std::size_t, double>> contributions;  // (state, rho_max(s) c(s)) for c(s) > 0
};

/// eta = sum_s rho_max(s) c(s) over states with c(s) > 0.
ThresholdConversion density_to_value_threshold(const DensityConstraint& constraint, const Vec& cost);

/// Exact d(sigma) = -(max_rho [J(rho) - mu/2 sum_C rho^2 + (sigma_minus - sigma_plus) . rho]
///                  + sigma_plus . rho_max - sigma_minus . rho_min).
double dual_objective(double regularized_optimum, const DensityConstraint& constraint, const Vec& sigma_plus,
                      const Vec& sigma_minus);

void write_metrics_csv(std::ostream& out, const std::vector<IterationRecord>& records);
void write_timing_csv(std::ostream& out, const std::vector<IterationRecord>& records);
void write_diagnostics_csv(std::ostream& out, const std::vector<IterationRecord>& records);
void write_state_csv(std::ostream& out, const Vec& rho, const DensityConstraint& constraint, const Vec& sigma_plus,
                     const Vec& sigma_minus);

}  // namespace dcrl
