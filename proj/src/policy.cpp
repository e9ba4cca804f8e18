#include "dcrl/policy.hpp"

#include <cmath>
#include <stdexcept>

namespace dcrl {

bool Box::contains(const Vec& x) const {
  if (x.size() != lo.size()) return false;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (x[i] < lo[i] || x[i] > hi[i]) return false;
  return true;
}

Vec Box::clamp(const Vec& x) const { return x.cwiseMax(lo).cwiseMin(hi); }

TabularPolicy::TabularPolicy(Mat probs) : probs_(std::move(probs)) {
  for (Eigen::Index s = 0; s < probs_.rows(); ++s) {
    if ((probs_.row(s).array() < 0.0).any())
      throw std::invalid_argument("TabularPolicy: negative probability in row " + std::to_string(s));
    if (std::abs(probs_.row(s).sum() - 1.0) > 1e-9)
      throw std::invalid_argument("TabularPolicy: row " + std::to_string(s) + " does not sum to 1");
  }
}

TabularPolicy TabularPolicy::uniform(std::size_t states, std::size_t actions) {
  return TabularPolicy(Mat::Constant(states, actions, 1.0 / static_cast<double>(actions)));
}

TabularPolicy TabularPolicy::deterministic(const std::vector<std::size_t>& actions, std::size_t n_actions) {
  Mat m = Mat::Zero(static_cast<Eigen::Index>(actions.size()), static_cast<Eigen::Index>(n_actions));
  for (std::size_t s = 0; s < actions.size(); ++s) {
    if (actions[s] >= n_actions) throw std::invalid_argument("TabularPolicy::deterministic: bad action");
    m(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(actions[s])) = 1.0;
  }
  return TabularPolicy(std::move(m));
}

std::size_t TabularPolicy::act(std::size_t state, Rng& rng) const {
  const auto row = probs_.row(static_cast<Eigen::Index>(state));
  std::vector<double> p(static_cast<std::size_t>(row.size()));
  for (Eigen::Index a = 0; a < row.size(); ++a) p[static_cast<std::size_t>(a)] = row(a);
  return rng.categorical(p);
}

std::size_t argmax_lowest(const Vec& row) {
  Eigen::Index best = 0;
  for (Eigen::Index a = 1; a < row.size(); ++a)
    if (row[a] > row[best]) best = a;
  return static_cast<std::size_t>(best);
}

GreedyQPolicy::GreedyQPolicy(Mat q, double epsilon) : q_(std::move(q)), epsilon_(epsilon) {
  if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("GreedyQPolicy: epsilon must be in [0, 1]");
}

std::size_t GreedyQPolicy::greedy_action(std::size_t state) const {
  return argmax_lowest(q_.row(static_cast<Eigen::Index>(state)).transpose());
}

std::size_t GreedyQPolicy::act(std::size_t state, Rng& rng) const {
  if (epsilon_ > 0.0 && rng.uniform() < epsilon_) return rng.index(n_actions());
  return greedy_action(state);
}

Vec GreedyQPolicy::probabilities(std::size_t state) const {
  const auto na = static_cast<Eigen::Index>(n_actions());
  Vec p = Vec::Constant(na, epsilon_ / static_cast<double>(na));
  p[static_cast<Eigen::Index>(greedy_action(state))] += 1.0 - epsilon_;
  return p;
}

TabularPolicy GreedyQPolicy::tabular() const {
  Mat m(q_.rows(), q_.cols());
  for (Eigen::Index s = 0; s < q_.rows(); ++s) m.row(s) = probabilities(static_cast<std::size_t>(s)).transpose();
  return TabularPolicy(std::move(m));
}

GaussianPolicy::GaussianPolicy(Box state_box, Box action_box, Vec spread)
    : state_box_(std::move(state_box)), action_box_(std::move(action_box)), spread_(std::move(spread)) {
  if (spread_.size() != action_box_.lo.size())
    throw std::invalid_argument("GaussianPolicy: spread must match action dimension");
  params_ = Vec::Zero(static_cast<Eigen::Index>(n_params()));
}

std::size_t GaussianPolicy::n_params() const { return action_box_.dim() * (state_box_.dim() + 1); }

void GaussianPolicy::set_params(Vec params) {
  if (static_cast<std::size_t>(params.size()) != n_params())
    throw std::invalid_argument("GaussianPolicy::set_params: wrong parameter count");
  params_ = std::move(params);
}

Vec GaussianPolicy::features(const Vec& state) const {
  const Vec width = state_box_.hi - state_box_.lo;
  Vec f(state.size());
  for (Eigen::Index i = 0; i < state.size(); ++i)
    f[i] = width[i] > 0.0 ? 2.0 * (state[i] - state_box_.lo[i]) / width[i] - 1.0 : 0.0;
  return f;
}

Vec GaussianPolicy::mean(const Vec& state) const {
  const auto ad = static_cast<Eigen::Index>(action_box_.dim());
  const auto sd = static_cast<Eigen::Index>(state_box_.dim());
  const Vec f = features(state);
  Vec m(ad);
  for (Eigen::Index i = 0; i < ad; ++i) {
    double v = params_[ad * sd + i];
    for (Eigen::Index j = 0; j < sd; ++j) v += params_[i * sd + j] * f[j];
    m[i] = v;
  }
  return action_box_.clamp(m);
}

Vec GaussianPolicy::act(const Vec& state, Rng& rng) const {
  Vec m = mean(state);
  if (eval_mode_) return m;
  for (Eigen::Index i = 0; i < m.size(); ++i) m[i] += spread_[i] * rng.normal();
  return action_box_.clamp(m);
}

}  // namespace dcrl
