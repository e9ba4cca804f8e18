#include "dcrl/dcrl.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "dcrl/exact.hpp"
#include "dcrl/rollout.hpp"

namespace dcrl {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

std::uint64_t iteration_seed(std::uint64_t seed, std::size_t k) { return Rng::stream(seed, k).next_u64(); }

std::vector<bool> constrained_mask(const DensityConstraint& c) {
  std::vector<bool> mask(c.size(), false);
  for (std::size_t s = 0; s < c.size(); ++s) {
    const auto si = static_cast<Eigen::Index>(s);
    mask[s] = std::isfinite(c.upper[si]) || c.lower[si] > 0.0;
  }
  return mask;
}

// Shared dual step: ascends both fields, fills the record, and returns the
// KKT report of the pre-update multipliers.
struct DualStep {
  Vec sigma_plus;
  Vec sigma_minus;
  KktReport kkt;
};

DualStep dual_step(const Vec& rho, const DensityConstraint& c, const Vec& sp, const Vec& sm, double alpha,
                   double tol_feas, double tol_cs, IterationRecord& rec) {
  DualStep out;
  out.kkt = kkt_check(rho, c, sp, sm, tol_feas, tol_cs);
  out.sigma_plus = ascend_upper(sp, rho, c.upper, alpha);
  out.sigma_minus = ascend_lower(sm, rho, c.lower, alpha);
  const double dp = (out.sigma_plus - sp).squaredNorm();
  const double dm = (out.sigma_minus - sm).squaredNorm();
  rec.g_norm = std::sqrt(dp + dm) / alpha;
  rec.feas_violation = out.kkt.feasibility_violation;
  rec.cs_upper = out.kkt.comp_slack_upper;
  rec.cs_lower = out.kkt.comp_slack_lower;
  rec.sigma_plus_max = inf_norm(out.sigma_plus);
  rec.sigma_minus_max = inf_norm(out.sigma_minus);
  return out;
}

// Infeasibility heuristic: multipliers above the cap for `patience` rounds.
struct CapWatch {
  double cap;
  std::size_t patience;
  std::size_t count = 0;
  bool tripped(double sigma_max) {
    count = sigma_max > cap ? count + 1 : 0;
    return count >= patience;
  }
};

}  // namespace

std::string to_string(InnerSolver s) { return s == InnerSolver::exact ? "exact" : "q_learning"; }
std::string to_string(StepSchedule s) { return s == StepSchedule::constant ? "constant" : "inverse_sqrt"; }
std::string to_string(Termination t) {
  switch (t) {
    case Termination::kkt_satisfied: return "kkt_satisfied";
    case Termination::max_iters: return "max_iters";
    case Termination::infeasible_diagnosis: return "infeasible_diagnosis";
  }
  return "max_iters";
}

InnerSolver parse_inner_solver(const std::string& name) {
  if (name == "exact") return InnerSolver::exact;
  if (name == "q_learning") return InnerSolver::q_learning;
  throw std::invalid_argument("unknown inner solver '" + name + "'");
}

StepSchedule parse_step_schedule(const std::string& name) {
  if (name == "constant") return StepSchedule::constant;
  if (name == "inverse_sqrt") return StepSchedule::inverse_sqrt;
  throw std::invalid_argument("unknown step schedule '" + name + "'");
}

std::size_t DcrlConfig::resolved_horizon(double gamma) const {
  return horizon > 0 ? horizon : default_horizon(gamma, tail);
}

double DcrlConfig::step_size(std::size_t k) const {
  return schedule == StepSchedule::constant ? alpha : alpha / std::sqrt(static_cast<double>(k + 1));
}

void validate(const DcrlConfig& c) {
  if (c.max_iterations == 0) throw std::invalid_argument("dcrl: max_iterations must be >= 1");
  if (c.episodes == 0) throw std::invalid_argument("dcrl: episodes must be >= 1");
  if (!(c.alpha > 0.0)) throw std::invalid_argument("dcrl: alpha must be positive");
  if (!(c.tol_feas > 0.0) || !(c.tol_cs > 0.0)) throw std::invalid_argument("dcrl: tolerances must be positive");
  if (c.smoothing < 0.0 || c.smoothing >= 1.0) throw std::invalid_argument("dcrl: smoothing must be in [0, 1)");
  if (c.mu < 0.0) throw std::invalid_argument("dcrl: mu must be >= 0");
  if (!(c.tail > 0.0)) throw std::invalid_argument("dcrl: tail must be positive");
  if (!(c.inner_tol > 0.0)) throw std::invalid_argument("dcrl: inner_tol must be positive");
}

double dual_objective(double regularized_optimum, const DensityConstraint& constraint, const Vec& sigma_plus,
                      const Vec& sigma_minus) {
  double v = regularized_optimum;
  for (Eigen::Index s = 0; s < sigma_plus.size(); ++s) {
    if (sigma_plus[s] > 0.0) v += sigma_plus[s] * constraint.upper[s];
    v -= sigma_minus[s] * constraint.lower[s];
  }
  return -v;
}

DcrlResult run_dcrl(const DiscreteMdp& mdp, const DensityConstraint& constraint, const DcrlConfig& config) {
  require_valid(mdp);
  validate_constraint(constraint);
  validate(config);
  if (constraint.size() != mdp.n_states) throw std::invalid_argument("run_dcrl: constraint size mismatch");

  DcrlResult res;
  res.horizon = config.resolved_horizon(mdp.gamma);
  res.tol_feas = config.tol_feas * constraint.scale();
  res.tol_cs = config.tol_cs * constraint.scale();

  const auto S = static_cast<Eigen::Index>(mdp.n_states);
  Vec sp = Vec::Zero(S), sm = Vec::Zero(S), smoothed;
  RegularizedSolver exact(mdp, {config.mu, constrained_mask(constraint), config.inner_tol});
  QTable q = QTable::zeros(mdp.n_states, mdp.n_actions);
  DiscreteBuffer previous;
  CapWatch watch{config.sigma_cap, config.cap_patience};

  for (std::size_t k = 0; k < config.max_iterations; ++k) {
    const auto start = Clock::now();
    IterationRecord rec;
    rec.k = k;
    const Vec offset = reward_offset(sp, sm);

    TabularPolicy pi;
    if (config.solver == InnerSolver::exact) {
      const auto sol = exact.solve(offset);
      pi = sol.policy;
      rec.inner_residual = sol.gap;
      rec.dual_objective = dual_objective(sol.objective, constraint, sp, sm);
    } else {
      QLearningConfig qc = config.q_learning;
      qc.seed = iteration_seed(config.seed ^ 0x9a11ULL, k);
      const auto ql = q_learning(mdp, offset, qc, &q, previous.empty() ? nullptr : &previous);
      q = ql.q;
      pi = ql.policy.tabular();
      rec.inner_residual = ql.residual;
    }

    DiscreteBuffer buffer = rollout(mdp, pi, config.episodes, res.horizon, iteration_seed(config.seed, k), config.workers);
    Vec rho = tabular_density(buffer, mdp.gamma, mdp.n_states).values;
    if (config.smoothing > 0.0) rho = smoothed = smooth(smoothed, rho, config.smoothing);
    rec.j_hat = estimate_return(buffer, mdp.gamma);
    rec.density_mass = rho.sum();

    const double alpha = config.step_size(k);
    const DualStep step = dual_step(rho, constraint, sp, sm, alpha, res.tol_feas, res.tol_cs, rec);
    rec.wall_ms = elapsed_ms(start);
    res.records.push_back(rec);

    res.policy = pi;
    res.density = {rho};
    res.sigma_plus = {sp};
    res.sigma_minus = {sm};
    res.kkt = step.kkt;
    if (step.kkt.satisfied) {
      res.reason = Termination::kkt_satisfied;
      return res;
    }
    sp = step.sigma_plus;
    sm = step.sigma_minus;
    previous = std::move(buffer);
    if (watch.tripped(std::max(inf_norm(sp), inf_norm(sm)))) {
      res.reason = Termination::infeasible_diagnosis;
      return res;
    }
  }
  res.reason = Termination::max_iters;
  return res;
}

ContinuousDcrlResult run_dcrl(const ContinuousEnv& env, const ContinuousConstraint& constraint,
                              const GaussianPolicy& initial_policy, const DcrlConfig& config, const KdeOptions& kde) {
  validate(config);
  validate_constraint(constraint.bounds);
  if (constraint.bounds.size() != constraint.grid.size())
    throw std::invalid_argument("run_dcrl: bounds must have one entry per support point");
  if (constraint.dims.size() != constraint.grid.dim())
    throw std::invalid_argument("run_dcrl: projection and grid dimensions differ");
  for (std::size_t d : constraint.dims)
    if (d >= env.state_dim()) throw std::invalid_argument("run_dcrl: projection dimension out of range");

  ContinuousDcrlResult res{initial_policy,
                           {},
                           Vec(),
                           SampledMultipliers::zeros(constraint.grid),
                           SampledMultipliers::zeros(constraint.grid),
                           {},
                           {},
                           Termination::max_iters,
                           0.0,
                           0.0,
                           0};
  res.horizon = config.resolved_horizon(env.gamma());
  res.tol_feas = config.tol_feas * constraint.bounds.scale();
  res.tol_cs = config.tol_cs * constraint.bounds.scale();

  KdeOptions kopt = kde;
  kopt.dims = constraint.dims;
  const std::size_t n_points = constraint.grid.size();
  std::vector<Vec> points(n_points);
  for (std::size_t i = 0; i < n_points; ++i) points[i] = constraint.grid.point(i);

  SampledMultipliers sp = res.sigma_plus, sm = res.sigma_minus;
  Vec smoothed;
  GaussianPolicy policy = initial_policy;
  CemResult search;
  CapWatch watch{config.sigma_cap, config.cap_patience};

  for (std::size_t k = 0; k < config.max_iterations; ++k) {
    const auto start = Clock::now();
    IterationRecord rec;
    rec.k = k;

    const bool active = sp.values.any() || sm.values.any();
    StateAdjustment adjust;
    if (active) {
      adjust = [&sp, &sm, &constraint](const Vec& s) {
        Vec p(static_cast<Eigen::Index>(constraint.dims.size()));
        for (std::size_t i = 0; i < constraint.dims.size(); ++i)
          p[static_cast<Eigen::Index>(i)] = s[static_cast<Eigen::Index>(constraint.dims[i])];
        return eval_multiplier(sm, p) - eval_multiplier(sp, p);
      };
    }
    CemConfig cc = config.cem;
    cc.seed = iteration_seed(config.seed ^ 0xc3aULL, k);
    if (cc.horizon == 0) cc.horizon = res.horizon;
    search = cem_search(env, adjust, cc, policy, k > 0 ? &search : nullptr);
    rec.inner_residual = search.generations.back().mean_std;

    GaussianPolicy eval_policy = policy;
    eval_policy.set_eval_mode(true);
    const ContinuousBuffer buffer =
        rollout(env, eval_policy, config.episodes, res.horizon, iteration_seed(config.seed, k), config.workers);
    kopt.thinning_seed = iteration_seed(config.seed ^ 0x7417ULL, k);
    const KernelDensity field = kde_density(buffer, env.gamma(), kopt);
    Vec rho(static_cast<Eigen::Index>(n_points));
    for (std::size_t i = 0; i < n_points; ++i) rho[static_cast<Eigen::Index>(i)] = field.eval(points[i]);
    if (config.smoothing > 0.0) rho = smoothed = smooth(smoothed, rho, config.smoothing);
    rec.j_hat = estimate_return(buffer, env.gamma());
    rec.density_mass = field.sample_mass();

    const double alpha = config.step_size(k);
    const DualStep step = dual_step(rho, constraint.bounds, sp.values, sm.values, alpha, res.tol_feas, res.tol_cs, rec);
    rec.wall_ms = elapsed_ms(start);
    res.records.push_back(rec);

    res.policy = policy;
    res.search = search;
    res.density = rho;
    res.sigma_plus = sp;
    res.sigma_minus = sm;
    res.kkt = step.kkt;
    if (step.kkt.satisfied) {
      res.reason = Termination::kkt_satisfied;
      return res;
    }
    sp.values = step.sigma_plus;
    sm.values = step.sigma_minus;
    if (watch.tripped(std::max(inf_norm(sp.values), inf_norm(sm.values)))) {
      res.reason = Termination::infeasible_diagnosis;
      return res;
    }
  }
  res.reason = Termination::max_iters;
  return res;
}

RcpoResult run_rcpo(const DiscreteMdp& mdp, const Vec& state_cost, double eta, const DcrlConfig& config) {
  require_valid(mdp);
  validate(config);
  if (static_cast<std::size_t>(state_cost.size()) != mdp.n_states)
    throw std::invalid_argument("run_rcpo: cost length must equal n_states");
  if ((state_cost.array() < 0.0).any()) throw std::invalid_argument("run_rcpo: cost must be nonnegative");
  if (!(eta >= 0.0)) throw std::invalid_argument("run_rcpo: eta must be >= 0");

  RcpoResult out;
  DcrlResult& res = out.result;
  res.horizon = config.resolved_horizon(mdp.gamma);
  const double scale = std::max(1.0, std::isfinite(eta) ? eta : 1.0);
  res.tol_feas = config.tol_feas * scale;
  res.tol_cs = config.tol_cs * scale;

  std::vector<bool> mask(mdp.n_states);
  for (std::size_t s = 0; s < mdp.n_states; ++s) mask[s] = state_cost[static_cast<Eigen::Index>(s)] > 0.0;
  RegularizedSolver exact(mdp, {config.mu, mask, config.inner_tol});
  QTable q = QTable::zeros(mdp.n_states, mdp.n_actions);
  DiscreteBuffer previous;
  CapWatch watch{config.sigma_cap, config.cap_patience};
  double lambda = 0.0;

  for (std::size_t k = 0; k < config.max_iterations; ++k) {
    const auto start = Clock::now();
    IterationRecord rec;
    rec.k = k;
    const Vec offset = -lambda * state_cost;

    TabularPolicy pi;
    if (config.solver == InnerSolver::exact) {
      const auto sol = exact.solve(offset);
      pi = sol.policy;
      rec.inner_residual = sol.gap;
    } else {
      QLearningConfig qc = config.q_learning;
      qc.seed = iteration_seed(config.seed ^ 0x9a11ULL, k);
      const auto ql = q_learning(mdp, offset, qc, &q, previous.empty() ? nullptr : &previous);
      q = ql.q;
      pi = ql.policy.tabular();
      rec.inner_residual = ql.residual;
    }

    DiscreteBuffer buffer = rollout(mdp, pi, config.episodes, res.horizon, iteration_seed(config.seed, k), config.workers);
    const Vec rho = tabular_density(buffer, mdp.gamma, mdp.n_states).values;
    rec.j_hat = estimate_return(buffer, mdp.gamma);
    rec.density_mass = rho.sum();
    const double jc = rho.dot(state_cost);

    const double alpha = config.step_size(k);
    const double next = std::isfinite(eta) ? std::max(0.0, lambda + alpha * (jc - eta)) : 0.0;
    rec.feas_violation = std::isfinite(eta) ? std::max(0.0, jc - eta) : 0.0;
    rec.cs_upper = lambda > 0.0 ? lambda * std::abs(jc - eta) : 0.0;
    rec.g_norm = std::abs(next - lambda) / alpha;
    rec.sigma_plus_max = next;
    rec.wall_ms = elapsed_ms(start);
    res.records.push_back(rec);

    res.policy = pi;
    res.density = {rho};
    res.sigma_plus = {lambda * state_cost};
    res.sigma_minus = TabularMultipliers::zeros(mdp.n_states);
    res.kkt = {rec.feas_violation, rec.cs_upper, 0.0, rec.feas_violation <= res.tol_feas && rec.cs_upper <= res.tol_cs};
    out.lambda = lambda;
    out.cost_value = jc;
    if (res.kkt.satisfied) {
      res.reason = Termination::kkt_satisfied;
      return out;
    }
    lambda = next;
    previous = std::move(buffer);
    if (watch.tripped(lambda)) {
      res.reason = Termination::infeasible_diagnosis;
      return out;
    }
  }
  res.reason = Termination::max_iters;
  return out;
}

CersResult run_cers(const DiscreteMdp& mdp, const DensityConstraint& constraint, const CersConfig& config) {
  require_valid(mdp);
  validate_constraint(constraint);
  if (constraint.size() != mdp.n_states) throw std::invalid_argument("run_cers: constraint size mismatch");
  if (config.population < 4) throw std::invalid_argument("run_cers: population must be >= 4");
  if (!(config.elite_fraction > 0.0 && config.elite_fraction < 1.0))
    throw std::invalid_argument("run_cers: elite_fraction must be in (0, 1)");

  const auto start = Clock::now();
  const std::size_t horizon = default_horizon(mdp.gamma, config.tail);
  const double tol = config.tol_feas * constraint.scale();
  const auto S = static_cast<Eigen::Index>(mdp.n_states);

  // Search coordinates: sigma_plus where an upper bound exists, sigma_minus
  // where a positive lower bound exists.
  std::vector<std::pair<Eigen::Index, bool>> coords;
  for (Eigen::Index s = 0; s < S; ++s) {
    if (std::isfinite(constraint.upper[s])) coords.emplace_back(s, true);
    if (constraint.lower[s] > 0.0) coords.emplace_back(s, false);
  }
  const auto d = static_cast<Eigen::Index>(coords.size());
  Vec mean = Vec::Constant(d, config.initial_mean);
  Vec stdev = Vec::Constant(d, config.initial_std);
  Rng sampler = Rng::stream(config.seed, 0xce25ULL);
  const std::size_t n_elite = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::lround(config.elite_fraction * static_cast<double>(config.population))));

  RegularizedSolver inner(mdp, {config.mu, constrained_mask(constraint), config.inner_tol});
  CersResult out;
  auto finish = [&](bool solved) {
    out.solved = solved;
    out.timeout = !solved;
    out.seconds = elapsed_ms(start) / 1000.0;
    return out;
  };

  for (std::size_t gen = 0; gen < config.max_generations; ++gen) {
    ++out.generations;
    std::vector<Vec> cand(config.population);
    std::vector<double> violation(config.population);
    for (std::size_t i = 0; i < config.population; ++i) {
      Vec x = mean;
      for (Eigen::Index j = 0; j < d; ++j) x[j] = std::max(0.0, x[j] + stdev[j] * sampler.normal());
      cand[i] = x;
      Vec sp = Vec::Zero(S), sm = Vec::Zero(S);
      for (Eigen::Index j = 0; j < d; ++j) (coords[static_cast<std::size_t>(j)].second ? sp : sm)[coords[static_cast<std::size_t>(j)].first] = x[j];

      const auto sol = inner.solve(reward_offset(sp, sm));
      const auto buffer = rollout(mdp, sol.policy, config.episodes, horizon, iteration_seed(config.seed, out.evaluations));
      ++out.evaluations;
      const Vec rho = tabular_density(buffer, mdp.gamma, mdp.n_states).values;
      const KktReport kkt = kkt_check(rho, constraint, Vec::Zero(S), Vec::Zero(S), tol, tol);
      // Elites are ranked by total violation; the max alone ties whenever
      // any bound is missed by its full margin.
      double total = 0.0;
      for (Eigen::Index s = 0; s < S; ++s) {
        const double over = std::isfinite(constraint.upper[s]) ? rho[s] - constraint.upper[s] : 0.0;
        total += std::max({0.0, over, constraint.lower[s] - rho[s]});
      }
      violation[i] = total;
      out.best_violation = std::min(out.best_violation, kkt.feasibility_violation);
      if (kkt.feasibility_violation <= tol) {
        out.policy = sol.policy;
        out.density = {rho};
        out.sigma_plus = sp;
        out.sigma_minus = sm;
        return finish(true);
      }
      if (elapsed_ms(start) / 1000.0 > config.time_budget_s) return finish(false);
    }

    std::vector<std::size_t> order(config.population);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return violation[a] < violation[b]; });
    Vec m = Vec::Zero(d);
    for (std::size_t e = 0; e < n_elite; ++e) m += cand[order[e]];
    m /= static_cast<double>(n_elite);
    Vec v = Vec::Zero(d);
    for (std::size_t e = 0; e < n_elite; ++e) v += (cand[order[e]] - m).cwiseAbs2();
    v /= static_cast<double>(n_elite);
    mean = m;
    stdev = v.cwiseSqrt().cwiseMax(config.std_floor);
  }
  return finish(false);
}

ThresholdConversion density_to_value_threshold(const DensityConstraint& constraint, const Vec& cost) {
  if (cost.size() != constraint.upper.size()) throw std::invalid_argument("threshold conversion: size mismatch");
  if ((cost.array() < 0.0).any()) throw std::invalid_argument("threshold conversion: cost must be nonnegative");
  if (!constraint.has_finite_upper())
    throw std::invalid_argument("threshold conversion: rho_max is infinite everywhere, no finite threshold");
  ThresholdConversion out;
  for (Eigen::Index s = 0; s < cost.size(); ++s) {
    if (cost[s] == 0.0) continue;
    if (!std::isfinite(constraint.upper[s]))
      throw std::invalid_argument("threshold conversion: infinite rho_max at costed state " + std::to_string(s));
    const double term = constraint.upper[s] * cost[s];
    out.contributions.emplace_back(static_cast<std::size_t>(s), term);
    out.eta += term;
  }
  return out;
}

void write_metrics_csv(std::ostream& out, const std::vector<IterationRecord>& records) {
  out << "k,J_hat,feas_violation,cs_upper,cs_lower,g_norm,sigma_plus_max,sigma_minus_max\n";
  out << std::setprecision(17);
  for (const auto& r : records)
    out << r.k << ',' << r.j_hat << ',' << r.feas_violation << ',' << r.cs_upper << ',' << r.cs_lower << ','
        << r.g_norm << ',' << r.sigma_plus_max << ',' << r.sigma_minus_max << '\n';
}

void write_timing_csv(std::ostream& out, const std::vector<IterationRecord>& records) {
  out << "k,wall_ms\n" << std::fixed << std::setprecision(3);
  for (const auto& r : records) out << r.k << ',' << r.wall_ms << '\n';
}

void write_diagnostics_csv(std::ostream& out, const std::vector<IterationRecord>& records) {
  out << "k,inner_residual,dual_objective,density_mass\n" << std::setprecision(17);
  for (const auto& r : records) {
    out << r.k << ',' << r.inner_residual << ',';
    if (!std::isnan(r.dual_objective)) out << r.dual_objective;
    out << ',' << r.density_mass << '\n';
  }
}

void write_state_csv(std::ostream& out, const Vec& rho, const DensityConstraint& constraint, const Vec& sigma_plus,
                     const Vec& sigma_minus) {
  out << "id,sigma_plus,sigma_minus,rho,rho_min,rho_max\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < rho.size(); ++i)
    out << i << ',' << sigma_plus[i] << ',' << sigma_minus[i] << ',' << rho[i] << ',' << constraint.lower[i] << ','
        << (std::isfinite(constraint.upper[i]) ? constraint.upper[i] : kInf) << '\n';
}

}  // namespace dcrl
