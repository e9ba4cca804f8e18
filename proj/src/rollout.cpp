#include "dcrl/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <thread>

namespace dcrl {

namespace {

template <typename Fn>
void for_each_index(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace

std::size_t default_horizon(double gamma, double tail) {
  if (gamma <= 0.0) return 1;
  if (!(tail > 0.0)) throw std::invalid_argument("default_horizon: tail must be positive");
  // gamma^(T+1) / (1 - gamma) <= tail
  const double t = std::log(tail * (1.0 - gamma)) / std::log(gamma) - 1.0;
  return static_cast<std::size_t>(std::max(1.0, std::ceil(t)));
}

double tail_mass(double gamma, std::size_t horizon) {
  return std::pow(gamma, static_cast<double>(horizon + 1)) / (1.0 - gamma);
}

std::pair<std::size_t, double> sample_step(const DiscreteMdp& mdp, std::size_t s, std::size_t a, Rng& rng) {
  const std::span<const double> row(mdp.transition.data() + mdp.idx(s, a, 0), mdp.n_states);
  const std::size_t next = rng.categorical(row);
  return {next, mdp.r(s, a, next)};
}

std::size_t sample_initial(const DiscreteMdp& mdp, Rng& rng) { return rng.categorical(mdp.initial); }

DiscreteBuffer rollout(const DiscreteMdp& mdp, const DiscretePolicy& policy, std::size_t n_episodes,
                       std::size_t horizon, std::uint64_t seed, std::size_t workers) {
  if (horizon == 0) throw std::invalid_argument("rollout: horizon must be positive");
  if (n_episodes == 0) throw std::invalid_argument("rollout: n_episodes must be positive");
  if (policy.n_states() != mdp.n_states || policy.n_actions() != mdp.n_actions)
    throw std::invalid_argument("rollout: policy does not match MDP dimensions");

  DiscreteBuffer buffer;
  buffer.seed = seed;
  buffer.horizon = horizon;
  buffer.episodes.resize(n_episodes);
  for_each_index(n_episodes, workers, [&](std::size_t i) {
    Rng rng = Rng::stream(seed, i);
    DiscreteEpisode& ep = buffer.episodes[i];
    ep.seed = i;
    std::size_t s = sample_initial(mdp, rng);
    ep.start = static_cast<int>(s);
    ep.transitions.reserve(std::min<std::size_t>(horizon, 4096));
    for (std::size_t j = 0; j < horizon && !mdp.is_terminal(s); ++j) {
      const std::size_t a = policy.act(s, rng);
      const auto [next, r] = sample_step(mdp, s, a, rng);
      ep.transitions.push_back({static_cast<int>(s), static_cast<int>(a), r, static_cast<int>(next), j});
      s = next;
    }
  });
  return buffer;
}

ContinuousBuffer rollout(const ContinuousEnv& env, const ContinuousPolicy& policy, std::size_t n_episodes,
                         std::size_t horizon, std::uint64_t seed, std::size_t workers) {
  if (horizon == 0) throw std::invalid_argument("rollout: horizon must be positive");
  if (n_episodes == 0) throw std::invalid_argument("rollout: n_episodes must be positive");

  ContinuousBuffer buffer;
  buffer.seed = seed;
  buffer.horizon = horizon;
  buffer.episodes.resize(n_episodes);
  for_each_index(n_episodes, workers, [&](std::size_t i) {
    Rng rng = Rng::stream(seed, i);
    ContinuousEpisode& ep = buffer.episodes[i];
    ep.seed = i;
    Vec s = env.reset(rng.next_u64());
    ep.start = s;
    ep.transitions.reserve(horizon);
    for (std::size_t j = 0; j < horizon; ++j) {
      Vec a = policy.act(s, rng);
      StepResult step = env.step(s, a, rng);
      ep.transitions.push_back({s, std::move(a), step.reward, step.next_state, j});
      s = std::move(step.next_state);
      if (step.done) break;
    }
  });
  return buffer;
}

}  // namespace dcrl
