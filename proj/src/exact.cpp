#include "dcrl/exact.hpp"

#include <stdexcept>

namespace dcrl {

namespace {

void check_dims(const DiscreteMdp& mdp, const TabularPolicy& policy) {
  if (policy.n_states() != mdp.n_states || policy.n_actions() != mdp.n_actions)
    throw std::invalid_argument("policy does not match MDP dimensions");
}

Vec policy_reward(const DiscreteMdp& mdp, const TabularPolicy& policy, const Vec& offset) {
  const auto n = static_cast<Eigen::Index>(mdp.n_states);
  Vec r = Vec::Zero(n);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    double v = 0.0;
    for (std::size_t a = 0; a < mdp.n_actions; ++a) v += policy(s, a) * mdp.expected_reward(s, a);
    if (offset.size() > 0) v += offset[static_cast<Eigen::Index>(s)];
    r[static_cast<Eigen::Index>(s)] = v;
  }
  return r;
}

}  // namespace

Mat policy_transition(const DiscreteMdp& mdp, const TabularPolicy& policy) {
  check_dims(mdp, policy);
  const auto n = static_cast<Eigen::Index>(mdp.n_states);
  Mat p = Mat::Zero(n, n);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    if (mdp.is_terminal(s)) continue;
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      const double w = policy(s, a);
      if (w == 0.0) continue;
      for (std::size_t n2 = 0; n2 < mdp.n_states; ++n2)
        p(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(n2)) += w * mdp.p(s, a, n2);
    }
  }
  return p;
}

Vec exact_density(const DiscreteMdp& mdp, const TabularPolicy& policy) {
  const Mat p = policy_transition(mdp, policy);
  const auto n = p.rows();
  const Mat system = Mat::Identity(n, n) - mdp.gamma * p.transpose();
  const Vec phi = Eigen::Map<const Vec>(mdp.initial.data(), n);
  return system.partialPivLu().solve(phi);
}

Mat exact_occupancy(const DiscreteMdp& mdp, const TabularPolicy& policy) {
  const Vec rho = exact_density(mdp, policy);
  Mat occ = policy.matrix();
  for (Eigen::Index s = 0; s < occ.rows(); ++s) occ.row(s) *= rho[s];
  return occ;
}

double density_residual(const DiscreteMdp& mdp, const TabularPolicy& policy, const Vec& rho) {
  const Mat p = policy_transition(mdp, policy);
  const Vec phi = Eigen::Map<const Vec>(mdp.initial.data(), p.rows());
  return (rho - phi - mdp.gamma * p.transpose() * rho).cwiseAbs().maxCoeff();
}

Vec policy_value(const DiscreteMdp& mdp, const TabularPolicy& policy, const Vec& state_offset) {
  if (state_offset.size() != 0 && static_cast<std::size_t>(state_offset.size()) != mdp.n_states)
    throw std::invalid_argument("policy_value: offset length must equal n_states");
  const Mat p = policy_transition(mdp, policy);
  const Mat system = Mat::Identity(p.rows(), p.rows()) - mdp.gamma * p;
  return system.partialPivLu().solve(policy_reward(mdp, policy, state_offset));
}

double expected_return(const DiscreteMdp& mdp, const TabularPolicy& policy, const Vec& state_offset) {
  const Vec v = policy_value(mdp, policy, state_offset);
  const Vec phi = Eigen::Map<const Vec>(mdp.initial.data(), v.size());
  return phi.dot(v);
}

double expected_state_cost(const DiscreteMdp& mdp, const TabularPolicy& policy, const Vec& state_cost) {
  if (static_cast<std::size_t>(state_cost.size()) != mdp.n_states)
    throw std::invalid_argument("expected_state_cost: cost length must equal n_states");
  return exact_density(mdp, policy).dot(state_cost);
}

}  // namespace dcrl
