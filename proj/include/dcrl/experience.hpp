#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dcrl/mdp.hpp"

namespace dcrl {

/// One observed step. raw_reward is stored exactly as emitted by the
/// environment; multiplier adjustments are applied by consumers.
template <typename State, typename Action>
struct Transition {
  State state{};
  Action action{};
  double raw_reward = 0.0;
  State next_state{};
  std::size_t step_index = 0;
};

template <typename State, typename Action>
struct Episode {
  State start{};
  std::vector<Transition<State, Action>> transitions;
  std::uint64_t seed = 0;

  std::size_t length() const { return transitions.size(); }

  /// State reached at time j, for j in [0, length()].
  const State& state_at(std::size_t j) const {
    if (j == 0) return start;
    return transitions.at(j - 1).next_state;
  }
};

template <typename State, typename Action>
struct ExperienceBuffer {
  std::vector<Episode<State, Action>> episodes;
  std::uint64_t seed = 0;
  std::size_t horizon = 0;

  bool empty() const { return episodes.empty(); }
  std::size_t size() const { return episodes.size(); }
};

using DiscreteTransition = Transition<int, int>;
using DiscreteEpisode = Episode<int, int>;
using DiscreteBuffer = ExperienceBuffer<int, int>;

using ContinuousTransition = Transition<Vec, Vec>;
using ContinuousEpisode = Episode<Vec, Vec>;
using ContinuousBuffer = ExperienceBuffer<Vec, Vec>;

/// Monte-Carlo return: mean over episodes of sum_j gamma^j r_j.
template <typename State, typename Action>
double estimate_return(const ExperienceBuffer<State, Action>& buffer, double gamma) {
  if (buffer.empty()) throw std::invalid_argument("estimate_return: empty buffer");
  double total = 0.0;
  for (const auto& ep : buffer.episodes) {
    double discount = 1.0;
    double ret = 0.0;
    for (const auto& t : ep.transitions) {
      ret += discount * t.raw_reward;
      discount *= gamma;
    }
    total += ret;
  }
  return total / static_cast<double>(buffer.size());
}

/// Standard error of the per-episode discounted return.
template <typename State, typename Action>
double return_standard_error(const ExperienceBuffer<State, Action>& buffer, double gamma) {
  if (buffer.size() < 2) return 0.0;
  std::vector<double> returns;
  returns.reserve(buffer.size());
  for (const auto& ep : buffer.episodes) {
    double discount = 1.0, ret = 0.0;
    for (const auto& t : ep.transitions) {
      ret += discount * t.raw_reward;
      discount *= gamma;
    }
    returns.push_back(ret);
  }
  double mean = 0.0;
  for (double r : returns) mean += r;
  mean /= static_cast<double>(returns.size());
  double var = 0.0;
  for (double r : returns) var += (r - mean) * (r - mean);
  var /= static_cast<double>(returns.size() - 1);
  return std::sqrt(var / static_cast<double>(returns.size()));
}

/// Smallest horizon T with tail mass gamma^(T+1) / (1 - gamma) <= tail.
std::size_t default_horizon(double gamma, double tail = 1e-3);

/// Discounted mass lost by truncating after step T.
double tail_mass(double gamma, std::size_t horizon);

}  // namespace dcrl
