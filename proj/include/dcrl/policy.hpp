#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "dcrl/continuous_env.hpp"
#include "dcrl/mdp.hpp"
#include "dcrl/rng.hpp"

namespace dcrl {

class DiscretePolicy {
 public:
  virtual ~DiscretePolicy() = default;
  virtual std::size_t n_states() const = 0;
  virtual std::size_t n_actions() const = 0;
  virtual std::size_t act(std::size_t state, Rng& rng) const = 0;
  /// pi(a | s) as a dense row.
  virtual Vec probabilities(std::size_t state) const = 0;
};

/// pi(a|s) stored as an S x A row-stochastic matrix.
class TabularPolicy final : public DiscretePolicy {
 public:
  TabularPolicy() = default;
  explicit TabularPolicy(Mat probs);

  static TabularPolicy uniform(std::size_t states, std::size_t actions);
  static TabularPolicy deterministic(const std::vector<std::size_t>& actions, std::size_t n_actions);

  std::size_t n_states() const override { return static_cast<std::size_t>(probs_.rows()); }
  std::size_t n_actions() const override { return static_cast<std::size_t>(probs_.cols()); }
  std::size_t act(std::size_t state, Rng& rng) const override;
  Vec probabilities(std::size_t state) const override { return probs_.row(static_cast<Eigen::Index>(state)).transpose(); }

  const Mat& matrix() const { return probs_; }
  double operator()(std::size_t s, std::size_t a) const {
    return probs_(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
  }

 private:
  Mat probs_;
};

/// Greedy with respect to a Q table, with epsilon-uniform exploration.
/// Ties go to the lowest action index.
class GreedyQPolicy final : public DiscretePolicy {
 public:
  GreedyQPolicy(Mat q, double epsilon);

  std::size_t n_states() const override { return static_cast<std::size_t>(q_.rows()); }
  std::size_t n_actions() const override { return static_cast<std::size_t>(q_.cols()); }
  std::size_t act(std::size_t state, Rng& rng) const override;
  Vec probabilities(std::size_t state) const override;

  std::size_t greedy_action(std::size_t state) const;
  double epsilon() const { return epsilon_; }
  const Mat& q() const { return q_; }
  TabularPolicy tabular() const;

 private:
  Mat q_;
  double epsilon_;
};

/// Index of the largest entry; lowest index among exact ties.
std::size_t argmax_lowest(const Vec& row);

class ContinuousPolicy {
 public:
  virtual ~ContinuousPolicy() = default;
  virtual Vec act(const Vec& state, Rng& rng) const = 0;
};

/// Gaussian policy with mean = W f(s) + b and fixed diagonal spread.
///
/// f maps the state box affinely onto [-1, 1]^d. Actions are clamped to the
/// action box. In evaluation mode the mean is returned without noise.
class GaussianPolicy final : public ContinuousPolicy {
 public:
  GaussianPolicy(Box state_box, Box action_box, Vec spread);

  std::size_t n_params() const;
  const Vec& params() const { return params_; }
  void set_params(Vec params);

  Vec features(const Vec& state) const;
  Vec mean(const Vec& state) const;
  Vec act(const Vec& state, Rng& rng) const override;

  void set_eval_mode(bool eval) { eval_mode_ = eval; }
  bool eval_mode() const { return eval_mode_; }
  const Vec& spread() const { return spread_; }

 private:
  Box state_box_;
  Box action_box_;
  Vec spread_;
  Vec params_;  // row-major W (action_dim x state_dim) followed by b
  bool eval_mode_ = false;
};

}  // namespace dcrl
