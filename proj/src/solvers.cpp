#include "dcrl/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "dcrl/exact.hpp"
#include "dcrl/rollout.hpp"

namespace dcrl {

namespace {

Vec zero_if_empty(const DiscreteMdp& mdp, const Vec& offset) {
  if (offset.size() == 0) return Vec::Zero(static_cast<Eigen::Index>(mdp.n_states));
  if (static_cast<std::size_t>(offset.size()) != mdp.n_states)
    throw std::invalid_argument("reward offset length must equal n_states");
  return offset;
}

/// Euclidean projection onto the probability simplex.
Vec project_simplex(const Vec& v) {
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0.0, theta = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    css += u[i];
    const double t = (css - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) theta = t;
  }
  return (v.array() - theta).max(0.0).matrix();
}


/// Minimizes 0.5 w'Hw - b'w over the probability simplex (H positive
/// semidefinite) by a primal active-set method started from feasible w.
Vec simplex_qp(const Mat& h, const Vec& b, Vec w) {
  const Eigen::Index k = b.size();
  const double scale = 1.0 + b.cwiseAbs().maxCoeff() + h.cwiseAbs().maxCoeff();
  const double ridge = 1e-12 * scale;
  const double tol = 1e-11 * scale;
  std::vector<bool> active(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) active[static_cast<std::size_t>(i)] = w[i] > 0.0;

  const std::size_t max_steps = 20 * static_cast<std::size_t>(k) + 100;
  for (std::size_t step = 0; step < max_steps; ++step) {
    std::vector<Eigen::Index> p;
    for (Eigen::Index i = 0; i < k; ++i)
      if (active[static_cast<std::size_t>(i)]) p.push_back(i);
    const auto m = static_cast<Eigen::Index>(p.size());
    Mat kkt = Mat::Zero(m + 1, m + 1);
    Vec rhs(m + 1);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) kkt(i, j) = h(p[i], p[j]);
      kkt(i, i) += ridge;
      kkt(i, m) = kkt(m, i) = 1.0;
      rhs[i] = b[p[i]];
    }
    rhs[m] = 1.0;
    const Vec z = kkt.colPivHouseholderQr().solve(rhs);

    double t = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index i = 0; i < m; ++i)
      if (z[i] <= 0.0 && w[p[i]] - z[i] > 0.0) {
        const double ti = w[p[i]] / (w[p[i]] - z[i]);
        if (ti < t) {
          t = ti;
          blocking = i;
        }
      }
    for (Eigen::Index i = 0; i < m; ++i) w[p[i]] += t * (z[i] - w[p[i]]);
    if (blocking >= 0) {
      for (Eigen::Index i = 0; i < m; ++i)
        if (i == blocking || w[p[i]] <= 0.0) {
          w[p[i]] = 0.0;
          active[static_cast<std::size_t>(p[i])] = false;
        }
      continue;
    }

    // Multipliers of the inactive bounds.
    const Vec g = h * w - b;
    double nu = 0.0;
    for (Eigen::Index i : p) nu -= g[i];
    nu /= static_cast<double>(m);
    Eigen::Index enter = -1;
    double most = -tol;
    for (Eigen::Index j = 0; j < k; ++j)
      if (!active[static_cast<std::size_t>(j)] && g[j] + nu < most) {
        most = g[j] + nu;
        enter = j;
      }
    if (enter < 0) break;
    active[static_cast<std::size_t>(enter)] = true;
  }
  w = w.cwiseMax(0.0);
  return w / w.sum();
}

}  // namespace

QTable QTable::zeros(std::size_t states, std::size_t actions) {
  const auto s = static_cast<Eigen::Index>(states);
  const auto a = static_cast<Eigen::Index>(actions);
  return {Mat::Zero(s, a), Mat::Zero(s, a)};
}

void write_qtable_csv(std::ostream& out, const QTable& q) {
  out << "state,action,q,visits\n" << std::setprecision(17);
  for (Eigen::Index s = 0; s < q.values.rows(); ++s)
    for (Eigen::Index a = 0; a < q.values.cols(); ++a)
      out << s << ',' << a << ',' << q.values(s, a) << ',' << (q.visits.size() ? q.visits(s, a) : 0.0) << '\n';
}

Mat q_from_values(const DiscreteMdp& mdp, const Vec& offset, const Vec& values) {
  const Vec off = zero_if_empty(mdp, offset);
  Mat q(static_cast<Eigen::Index>(mdp.n_states), static_cast<Eigen::Index>(mdp.n_actions));
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    const auto si = static_cast<Eigen::Index>(s);
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      double v = off[si];
      if (!mdp.is_terminal(s)) {
        v += mdp.expected_reward(s, a);
        double next = 0.0;
        for (std::size_t n = 0; n < mdp.n_states; ++n) next += mdp.p(s, a, n) * values[static_cast<Eigen::Index>(n)];
        v += mdp.gamma * next;
      }
      q(si, static_cast<Eigen::Index>(a)) = v;
    }
  }
  return q;
}

double bellman_residual(const DiscreteMdp& mdp, const Vec& offset, const Mat& q) {
  const Vec v = q.rowwise().maxCoeff();
  return (q - q_from_values(mdp, offset, v)).cwiseAbs().maxCoeff();
}

std::vector<std::size_t> greedy_actions(const Mat& q, double tie_tol) {
  std::vector<std::size_t> out(static_cast<std::size_t>(q.rows()));
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    const double best = q.row(s).maxCoeff();
    for (Eigen::Index a = 0; a < q.cols(); ++a)
      if (q(s, a) >= best - tie_tol) {
        out[static_cast<std::size_t>(s)] = static_cast<std::size_t>(a);
        break;
      }
  }
  return out;
}

ValueIterationResult value_iteration(const DiscreteMdp& mdp, const Vec& offset, double tol) {
  require_valid(mdp);
  const Vec off = zero_if_empty(mdp, offset);
  std::vector<std::size_t> pi(mdp.n_states, 0);
  ValueIterationResult out;
  Mat q;
  for (std::size_t it = 0; it < 10000; ++it) {
    ++out.iterations;
    const Vec v = policy_value(mdp, TabularPolicy::deterministic(pi, mdp.n_actions), off);
    q = q_from_values(mdp, off, v);
    bool changed = false;
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      const auto si = static_cast<Eigen::Index>(s);
      const std::size_t best = argmax_lowest(q.row(si).transpose());
      const double current = q(si, static_cast<Eigen::Index>(pi[s]));
      if (q(si, static_cast<Eigen::Index>(best)) > current + 1e-12 * (1.0 + std::abs(current))) {
        pi[s] = best;
        changed = true;
      }
    }
    if (!changed) break;
  }

  const double scale = 1.0 + q.cwiseAbs().maxCoeff();
  pi = greedy_actions(q, 1e-10 * scale);
  out.values = policy_value(mdp, TabularPolicy::deterministic(pi, mdp.n_actions), off);
  q = q_from_values(mdp, off, out.values);
  out.residual = bellman_residual(mdp, off, q);
  for (std::size_t sweep = 0; out.residual > tol && sweep < 100000; ++sweep) {
    q = q_from_values(mdp, off, q.rowwise().maxCoeff());
    out.residual = bellman_residual(mdp, off, q);
  }
  out.q = {q, Mat::Zero(q.rows(), q.cols())};
  out.policy = TabularPolicy::deterministic(pi, mdp.n_actions);
  return out;
}

TabularPolicy policy_from_occupancy(const Mat& rho_bar) {
  if ((rho_bar.array() < 0.0).any()) throw std::invalid_argument("policy_from_occupancy: negative occupancy");
  Mat pi(rho_bar.rows(), rho_bar.cols());
  for (Eigen::Index s = 0; s < rho_bar.rows(); ++s) {
    const double total = rho_bar.row(s).sum();
    if (total > 0.0) {
      pi.row(s) = rho_bar.row(s) / total;
      pi.row(s) /= pi.row(s).sum();
    } else {
      pi.row(s).setConstant(1.0 / static_cast<double>(rho_bar.cols()));
    }
  }
  return TabularPolicy(std::move(pi));
}

RegularizedSolver::RegularizedSolver(const DiscreteMdp& mdp, RegularizerOptions options)
    : mdp_(&mdp), options_(std::move(options)) {
  if (options_.mu < 0.0) throw std::invalid_argument("RegularizedSolver: mu must be >= 0");
  if (options_.mask.empty()) options_.mask.assign(mdp.n_states, true);
  if (options_.mask.size() != mdp.n_states) throw std::invalid_argument("RegularizedSolver: mask length mismatch");
}

double RegularizedSolver::regularized_value(const Mat& occ, const Vec& offset) const {
  const Mat r = mdp_->expected_reward_matrix();
  const Vec rho = occ.rowwise().sum();
  double v = (occ.array() * r.array()).sum() + rho.dot(offset);
  for (std::size_t s = 0; s < mdp_->n_states; ++s)
    if (options_.mask[s]) v -= 0.5 * options_.mu * rho[static_cast<Eigen::Index>(s)] * rho[static_cast<Eigen::Index>(s)];
  return v;
}

RegularizedSolver::Solution RegularizedSolver::solve(const Vec& offset_in) {
  const DiscreteMdp& mdp = *mdp_;
  const Vec offset = zero_if_empty(mdp, offset_in);
  std::vector<Eigen::Index> masked;
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    if (options_.mask[s]) masked.push_back(static_cast<Eigen::Index>(s));

  Solution sol;
  if (options_.mu == 0.0 || masked.empty()) {
    const auto vi = value_iteration(mdp, offset);
    sol.occupancy = exact_occupancy(mdp, vi.policy);
    sol.policy = vi.policy;
    sol.objective = regularized_value(sol.occupancy, offset);
    sol.vertices = 1;
    return sol;
  }

  const Mat r = mdp.expected_reward_matrix();
  auto add_vertex = [&](const ValueIterationResult& vi) {
    std::vector<std::size_t> acts(mdp.n_states);
    for (std::size_t s = 0; s < mdp.n_states; ++s) acts[s] = argmax_lowest(vi.policy.probabilities(s));
    for (const auto& existing : vertex_policies_)
      if (existing == acts) return false;
    vertices_.push_back(exact_occupancy(mdp, vi.policy));
    vertex_policies_.push_back(std::move(acts));
    weights_.conservativeResize(static_cast<Eigen::Index>(vertices_.size()));
    weights_[weights_.size() - 1] = 0.0;
    return true;
  };

  if (vertices_.empty()) {
    add_vertex(value_iteration(mdp, offset));
    weights_ = Vec::Ones(1);
  }
  if (weights_.size() != static_cast<Eigen::Index>(vertices_.size()) || weights_.sum() <= 0.0)
    weights_ = Vec::Constant(static_cast<Eigen::Index>(vertices_.size()), 1.0 / static_cast<double>(vertices_.size()));

  const double mu = options_.mu;
  Mat mix;
  for (std::size_t round = 0; round < options_.max_rounds; ++round) {
    const auto k = static_cast<Eigen::Index>(vertices_.size());
    const auto c = static_cast<Eigen::Index>(masked.size());
    Mat g(k, c);
    Vec jv(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      const Mat& v = vertices_[static_cast<std::size_t>(i)];
      const Vec rho = v.rowwise().sum();
      for (Eigen::Index j = 0; j < c; ++j) g(i, j) = rho[masked[static_cast<std::size_t>(j)]];
      jv[i] = (v.array() * r.array()).sum() + rho.dot(offset);
    }

    const Vec w = simplex_qp(mu * (g * g.transpose()), jv, project_simplex(weights_));
    weights_ = w;

    mix = Mat::Zero(r.rows(), r.cols());
    for (Eigen::Index i = 0; i < k; ++i) mix += w[i] * vertices_[static_cast<std::size_t>(i)];
    const Vec rho = mix.rowwise().sum();

    Vec lin = offset;
    for (Eigen::Index s : masked) lin[s] -= mu * rho[s];
    const auto vi = value_iteration(mdp, lin);
    const Mat vertex = exact_occupancy(mdp, vi.policy);
    Mat reward = r;
    for (Eigen::Index s = 0; s < reward.rows(); ++s) reward.row(s).array() += lin[s];
    sol.gap = ((vertex - mix).array() * reward.array()).sum();
    sol.objective = regularized_value(mix, offset);

    // Drop vertices with zero weight.
    std::vector<Mat> kept;
    std::vector<std::vector<std::size_t>> kept_pol;
    std::vector<double> kept_w;
    for (Eigen::Index i = 0; i < k; ++i) {
      if (w[i] <= 1e-13) continue;
      kept.push_back(std::move(vertices_[static_cast<std::size_t>(i)]));
      kept_pol.push_back(std::move(vertex_policies_[static_cast<std::size_t>(i)]));
      kept_w.push_back(w[i]);
    }
    vertices_ = std::move(kept);
    vertex_policies_ = std::move(kept_pol);
    weights_ = Eigen::Map<Vec>(kept_w.data(), static_cast<Eigen::Index>(kept_w.size()));
    weights_ /= weights_.sum();

    if (sol.gap <= options_.tol * (1.0 + std::abs(sol.objective))) break;
    add_vertex(vi);
  }

  sol.occupancy = mix;
  sol.policy = policy_from_occupancy(mix);
  sol.vertices = vertices_.size();
  return sol;
}

void validate(const QLearningConfig& c) {
  if (!(c.learning_rate > 0.0 && c.learning_rate <= 1.0))
    throw std::invalid_argument("q_learning: learning_rate must be in (0, 1]");
  if (c.learning_rate_decay < 0.0) throw std::invalid_argument("q_learning: learning_rate_decay must be >= 0");
  if (c.epsilon_start < 0.0 || c.epsilon_start > 1.0 || c.epsilon_end < 0.0 || c.epsilon_end > 1.0)
    throw std::invalid_argument("q_learning: epsilon must be in [0, 1]");
  if (c.horizon == 0) throw std::invalid_argument("q_learning: horizon must be positive");
}

QLearningResult q_learning(const DiscreteMdp& mdp, const Vec& offset_in, const QLearningConfig& config,
                           const QTable* warm_start, const DiscreteBuffer* replay) {
  require_valid(mdp);
  validate(config);
  const Vec off = zero_if_empty(mdp, offset_in);
  QTable q = warm_start ? *warm_start : QTable::zeros(mdp.n_states, mdp.n_actions);
  if (q.values.rows() != static_cast<Eigen::Index>(mdp.n_states) ||
      q.values.cols() != static_cast<Eigen::Index>(mdp.n_actions))
    throw std::invalid_argument("q_learning: warm-start table has wrong shape");
  if (q.visits.size() != q.values.size()) q.visits = Mat::Zero(q.values.rows(), q.values.cols());
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    if (mdp.is_terminal(s)) q.values.row(static_cast<Eigen::Index>(s)).setConstant(off[static_cast<Eigen::Index>(s)]);

  auto update = [&](std::size_t s, std::size_t a, double raw, std::size_t next) {
    const auto si = static_cast<Eigen::Index>(s);
    const auto ai = static_cast<Eigen::Index>(a);
    const double target = raw + off[si] + mdp.gamma * q.values.row(static_cast<Eigen::Index>(next)).maxCoeff();
    const double lr = config.learning_rate / (1.0 + config.learning_rate_decay * q.visits(si, ai));
    q.values(si, ai) += lr * (target - q.values(si, ai));
    q.visits(si, ai) += 1.0;
  };

  if (replay)
    for (std::size_t sweep = 0; sweep < config.replay_sweeps; ++sweep)
      for (const auto& ep : replay->episodes)
        for (const auto& t : ep.transitions)
          update(static_cast<std::size_t>(t.state), static_cast<std::size_t>(t.action), t.raw_reward,
                 static_cast<std::size_t>(t.next_state));

  for (std::size_t e = 0; e < config.episodes; ++e) {
    const double frac = config.episodes > 1 ? static_cast<double>(e) / static_cast<double>(config.episodes - 1) : 1.0;
    const double eps = config.epsilon_start + (config.epsilon_end - config.epsilon_start) * frac;
    Rng rng = Rng::stream(config.seed, e);
    std::size_t s = sample_initial(mdp, rng);
    for (std::size_t j = 0; j < config.horizon && !mdp.is_terminal(s); ++j) {
      std::size_t a;
      if (rng.uniform() < eps)
        a = rng.index(mdp.n_actions);
      else
        a = argmax_lowest(q.values.row(static_cast<Eigen::Index>(s)).transpose());
      const auto [next, raw] = sample_step(mdp, s, a, rng);
      update(s, a, raw, next);
      s = next;
    }
  }

  QLearningResult out{q, GreedyQPolicy(q.values, 0.0), 0.0};
  out.residual = bellman_residual(mdp, off, q.values);
  return out;
}

void validate(const CemConfig& c) {
  if (c.population < 4) throw std::invalid_argument("cem_search: population must be >= 4");
  if (!(c.elite_fraction > 0.0 && c.elite_fraction < 1.0))
    throw std::invalid_argument("cem_search: elite_fraction must be in (0, 1)");
  if (c.iterations == 0 || c.episodes_per_candidate == 0 || c.horizon == 0)
    throw std::invalid_argument("cem_search: iterations, episodes and horizon must be positive");
  if (c.noise_floor < 0.0 || !(c.initial_std > 0.0)) throw std::invalid_argument("cem_search: bad noise settings");
}

double evaluate_adjusted_return(const ContinuousEnv& env, const ContinuousPolicy& policy,
                                const StateAdjustment& adjust, std::size_t episodes, std::size_t horizon,
                                std::uint64_t seed) {
  const ContinuousBuffer buffer = rollout(env, policy, episodes, horizon, seed);
  const double gamma = env.gamma();
  double total = 0.0;
  for (const auto& ep : buffer.episodes) {
    double disc = 1.0;
    for (const auto& t : ep.transitions) {
      total += disc * (t.raw_reward + (adjust ? adjust(t.state) : 0.0));
      disc *= gamma;
    }
  }
  return total / static_cast<double>(episodes);
}

CemResult cem_search(const ContinuousEnv& env, const StateAdjustment& adjust, const CemConfig& config,
                     GaussianPolicy& policy, const CemResult* warm_start) {
  validate(config);
  const auto d = static_cast<Eigen::Index>(policy.n_params());
  CemResult res;
  if (warm_start && warm_start->mean.size() == d) {
    res.mean = warm_start->mean;
    res.std = warm_start->std.cwiseMax(config.noise_floor);
  } else {
    res.mean = policy.params();
    res.std = Vec::Constant(d, config.initial_std);
  }

  const std::size_t n_elite =
      std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(config.elite_fraction * static_cast<double>(config.population))));
  const std::uint64_t eval_seed = Rng::mix(config.seed ^ 0x5eedULL);
  Rng sampler = Rng::stream(config.seed, 0xce3ULL);

  for (std::size_t it = 0; it < config.iterations; ++it) {
    std::vector<Vec> cand(config.population);
    for (auto& c : cand) {
      c = res.mean;
      for (Eigen::Index i = 0; i < d; ++i) c[i] += res.std[i] * sampler.normal();
    }
    std::vector<double> returns(config.population);
    auto eval = [&](std::size_t i) {
      GaussianPolicy p = policy;
      p.set_params(cand[i]);
      p.set_eval_mode(true);
      returns[i] = evaluate_adjusted_return(env, p, adjust, config.episodes_per_candidate, config.horizon, eval_seed);
    };
    const std::size_t workers = std::max<std::size_t>(1, std::min(config.workers, config.population));
    if (workers == 1) {
      for (std::size_t i = 0; i < config.population; ++i) eval(i);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
          for (std::size_t i = w; i < config.population; i += workers) eval(i);
        });
      for (auto& t : pool) t.join();
    }

    std::vector<std::size_t> order(config.population);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return returns[a] > returns[b]; });

    // A generation with identical returns (e.g. every candidate saturates the
    // action bounds) has no ranking signal: keep the mean and widen the search.
    const bool flat = returns[order.front()] == returns[order.back()];
    if (flat) {
      res.std = res.std.cwiseMax(config.initial_std);
    } else {
      Vec mean = Vec::Zero(d);
      for (std::size_t e = 0; e < n_elite; ++e) mean += cand[order[e]];
      mean /= static_cast<double>(n_elite);
      Vec var = Vec::Zero(d);
      for (std::size_t e = 0; e < n_elite; ++e) var += (cand[order[e]] - mean).cwiseAbs2();
      var /= static_cast<double>(n_elite);
      res.mean = mean;
      res.std = var.cwiseSqrt().cwiseMax(config.noise_floor);
    }

    CemGeneration g;
    g.mean_return = std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size());
    for (std::size_t e = 0; e < n_elite; ++e) g.elite_return += returns[order[e]];
    g.elite_return /= static_cast<double>(n_elite);
    g.best_return = returns[order.front()];
    g.mean_std = res.std.mean();
    res.generations.push_back(g);
  }
  policy.set_params(res.mean);
  return res;
}

}  // namespace dcrl
