#pragma once

#include <cstdint>

#include "dcrl/mdp.hpp"
#include "dcrl/rng.hpp"

namespace dcrl {

/// Axis-aligned box [lo, hi] per dimension.
struct Box {
  Vec lo;
  Vec hi;

  std::size_t dim() const { return static_cast<std::size_t>(lo.size()); }
  bool contains(const Vec& x) const;
  Vec clamp(const Vec& x) const;
};

struct StepResult {
  Vec next_state;
  double reward = 0.0;
  bool done = false;
};

/// Environment with real-vector states and actions.
///
/// Implementations must be immutable after construction: all per-episode
/// randomness comes from the Rng passed to step() or the seed given to reset().
class ContinuousEnv {
 public:
  virtual ~ContinuousEnv() = default;

  virtual std::size_t state_dim() const = 0;
  virtual std::size_t action_dim() const = 0;
  virtual const Box& state_bounds() const = 0;
  virtual const Box& action_bounds() const = 0;
  virtual double gamma() const = 0;

  virtual Vec reset(std::uint64_t seed) const = 0;
  virtual StepResult step(const Vec& state, const Vec& action, Rng& rng) const = 0;
};

}  // namespace dcrl
