#include "dcrl/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "dcrl/exact.hpp"
#include "dcrl/solvers.hpp"

namespace dcrl {

namespace {

double bound_violation(const Vec& rho, const DensityConstraint& c) {
  double v = 0.0;
  for (Eigen::Index s = 0; s < rho.size(); ++s) {
    if (std::isfinite(c.upper[s])) v = std::max(v, rho[s] - c.upper[s]);
    v = std::max(v, c.lower[s] - rho[s]);
  }
  return v;
}

Mat unpack(const Vec& x, std::size_t states, std::size_t actions) {
  Mat m(static_cast<Eigen::Index>(states), static_cast<Eigen::Index>(actions));
  for (std::size_t s = 0; s < states; ++s)
    for (std::size_t a = 0; a < actions; ++a)
      m(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = x[static_cast<Eigen::Index>(s * actions + a)];
  return m;
}

}  // namespace

OccupancyLp build_occupancy_lp(const DiscreteMdp& mdp, const DensityConstraint& constraint) {
  require_valid(mdp);
  validate_constraint(constraint);
  if (constraint.size() != mdp.n_states) throw std::invalid_argument("build_occupancy_lp: constraint size mismatch");

  const std::size_t S = mdp.n_states, A = mdp.n_actions;
  const auto cols = static_cast<Eigen::Index>(S * A);
  OccupancyLp out;
  out.n_states = S;
  out.n_actions = A;
  LinearProgram& lp = out.lp;
  lp.a.resize(0, cols);
  lp.c = Vec::Zero(cols);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) {
      lp.c[static_cast<Eigen::Index>(s * A + a)] = mdp.expected_reward(s, a);
      lp.col_names.push_back("rho_s" + std::to_string(s) + "_a" + std::to_string(a));
    }

  for (std::size_t s = 0; s < S; ++s) {
    Vec row = Vec::Zero(cols);
    for (std::size_t a = 0; a < A; ++a) row[static_cast<Eigen::Index>(s * A + a)] += 1.0;
    for (std::size_t src = 0; src < S; ++src) {
      if (mdp.is_terminal(src)) continue;
      for (std::size_t a = 0; a < A; ++a) row[static_cast<Eigen::Index>(src * A + a)] -= mdp.gamma * mdp.p(src, a, s);
    }
    lp.add_row(row, RowSense::eq, mdp.initial[s], "flow_s" + std::to_string(s));
  }

  out.upper_row.assign(S, -1);
  out.lower_row.assign(S, -1);
  for (std::size_t s = 0; s < S; ++s) {
    Vec row = Vec::Zero(cols);
    for (std::size_t a = 0; a < A; ++a) row[static_cast<Eigen::Index>(s * A + a)] = 1.0;
    const double hi = constraint.upper[static_cast<Eigen::Index>(s)];
    const double lo = constraint.lower[static_cast<Eigen::Index>(s)];
    if (std::isfinite(hi)) {
      out.upper_row[s] = static_cast<int>(lp.n_rows());
      lp.add_row(row, RowSense::le, hi, "max_s" + std::to_string(s));
    }
    if (lo > 0.0) {
      out.lower_row[s] = static_cast<int>(lp.n_rows());
      lp.add_row(row, RowSense::ge, lo, "min_s" + std::to_string(s));
    }
  }
  return out;
}

double flow_residual(const DiscreteMdp& mdp, const Mat& rho_bar) {
  const auto S = static_cast<Eigen::Index>(mdp.n_states);
  Vec inflow = Eigen::Map<const Vec>(mdp.initial.data(), S);
  for (std::size_t src = 0; src < mdp.n_states; ++src) {
    if (mdp.is_terminal(src)) continue;
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      const double w = rho_bar(static_cast<Eigen::Index>(src), static_cast<Eigen::Index>(a));
      for (std::size_t n = 0; n < mdp.n_states; ++n) inflow[static_cast<Eigen::Index>(n)] += mdp.gamma * w * mdp.p(src, a, n);
    }
  }
  return (rho_bar.rowwise().sum() - inflow).cwiseAbs().maxCoeff();
}

LpSolution solve_lp(const OccupancyLp& problem) {
  LpSolution out;
  const LpResult res = solve_simplex(problem.lp);
  out.status = res.status;
  const auto S = static_cast<Eigen::Index>(problem.n_states);
  out.sigma_plus = Vec::Zero(S);
  out.sigma_minus = Vec::Zero(S);
  if (res.status != LpStatus::optimal) return out;

  out.rho_bar = unpack(res.x, problem.n_states, problem.n_actions);
  out.rho = out.rho_bar.rowwise().sum();
  out.objective = res.objective;
  out.flow_duals = res.duals.head(S);
  // Duals below round-off level are zeroed so complementary slackness can be
  // read off their support.
  const double dual_floor = 1e-10 * (1.0 + out.flow_duals.cwiseAbs().maxCoeff());
  auto clean = [dual_floor](double v) { return v > dual_floor ? v : 0.0; };
  for (std::size_t s = 0; s < problem.n_states; ++s) {
    const auto si = static_cast<Eigen::Index>(s);
    if (problem.upper_row[s] >= 0) out.sigma_plus[si] = clean(res.duals[problem.upper_row[s]]);
    if (problem.lower_row[s] >= 0) out.sigma_minus[si] = clean(-res.duals[problem.lower_row[s]]);
  }

  // Flow residual straight from the LP rows.
  const Vec ax = problem.lp.a * res.x;
  for (Eigen::Index i = 0; i < S; ++i) out.flow_residual = std::max(out.flow_residual, std::abs(ax[i] - problem.lp.b[i]));
  for (Eigen::Index i = S; i < ax.size(); ++i)
    out.slackness_residual = std::max(out.slackness_residual, std::abs(res.duals[i] * (problem.lp.b[i] - ax[i])));
  return out;
}

DualityReport duality_check(const DiscreteMdp& mdp, const DensityConstraint& constraint,
                            const DualityOptions& options) {
  DualityReport rep;
  const OccupancyLp problem = build_occupancy_lp(mdp, constraint);
  const LpSolution lp = solve_lp(problem);
  if (lp.status != LpStatus::optimal) {
    rep.skipped = true;
    rep.message = "duality check skipped: " + to_string(lp.status);
    return rep;
  }
  rep.lp_objective = lp.objective;
  rep.slackness_residual = lp.slackness_residual;

  const Vec offset = reward_offset(lp.sigma_plus, lp.sigma_minus);
  const ValueIterationResult vi = value_iteration(mdp, offset, 1e-11);
  const Vec phi = Eigen::Map<const Vec>(mdp.initial.data(), static_cast<Eigen::Index>(mdp.n_states));
  rep.adjusted_optimum = phi.dot(vi.values);
  rep.dual_value = rep.adjusted_optimum;
  for (Eigen::Index s = 0; s < lp.sigma_plus.size(); ++s) {
    if (lp.sigma_plus[s] > 0.0) rep.dual_value += lp.sigma_plus[s] * constraint.upper[s];
    rep.dual_value -= lp.sigma_minus[s] * constraint.lower[s];
  }

  const double obj_tol = options.objective_tol * std::abs(lp.objective) + 1e-9;
  auto evaluate = [&](const TabularPolicy& pi, double& ret, double& viol) {
    ret = expected_return(mdp, pi);
    viol = bound_violation(exact_density(mdp, pi), constraint);
    return std::abs(ret - lp.objective) <= obj_tol && viol <= options.bound_tol;
  };

  double ret = 0.0, viol = 0.0;
  rep.pure_greedy_passed = evaluate(vi.policy, ret, viol);
  rep.policy = vi.policy;
  if (!rep.pure_greedy_passed) {
    // Ties in the adjusted problem: pick a mixture over greedy actions that
    // satisfies the bounds and complementary slackness.
    const Mat& q = vi.q.values;
    const double tie_tol = 1e-7 * (1.0 + q.cwiseAbs().maxCoeff());
    OccupancyLp restricted = problem;
    LinearProgram& rlp = restricted.lp;
    const std::size_t A = mdp.n_actions;
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      const double best = q.row(static_cast<Eigen::Index>(s)).maxCoeff();
      for (std::size_t a = 0; a < A; ++a) {
        if (q(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) >= best - tie_tol) continue;
        Vec row = Vec::Zero(rlp.a.cols());
        row[static_cast<Eigen::Index>(s * A + a)] = 1.0;
        rlp.add_row(row, RowSense::eq, 0.0);
      }
      if (problem.upper_row[s] >= 0 && lp.sigma_plus[static_cast<Eigen::Index>(s)] > 0.0)
        rlp.sense[static_cast<std::size_t>(problem.upper_row[s])] = RowSense::eq;
      if (problem.lower_row[s] >= 0 && lp.sigma_minus[static_cast<Eigen::Index>(s)] > 0.0)
        rlp.sense[static_cast<std::size_t>(problem.lower_row[s])] = RowSense::eq;
    }
    const LpResult tie = solve_simplex(rlp);
    if (tie.status == LpStatus::optimal) rep.policy = policy_from_occupancy(unpack(tie.x, mdp.n_states, A));
  }

  rep.passed = evaluate(rep.policy, rep.policy_return, rep.bound_violation);
  rep.objective_gap = std::abs(rep.policy_return - rep.lp_objective);
  rep.message = rep.passed ? "duality check passed" : "duality check failed";
  return rep;
}

void write_occupancy_lp(std::ostream& out, const OccupancyLp& problem) { write_lp(out, problem.lp); }

}  // namespace dcrl
