#include "dcrl/dual.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dcrl {

namespace {

void require_same_size(const Vec& a, const Vec& b, const char* what) {
  if (a.size() != b.size()) throw std::invalid_argument(std::string(what) + ": mismatched spaces");
}

}  // namespace

DensityConstraint::DensityConstraint(std::size_t n)
    : lower(Vec::Zero(static_cast<Eigen::Index>(n))), upper(Vec::Constant(static_cast<Eigen::Index>(n), kInf)) {}

DensityConstraint::DensityConstraint(Vec lower_bounds, Vec upper_bounds)
    : lower(std::move(lower_bounds)), upper(std::move(upper_bounds)) {
  validate_constraint(*this);
}

bool DensityConstraint::has_finite_upper() const { return upper.size() > 0 && upper.array().isFinite().any(); }

bool DensityConstraint::has_positive_lower() const { return lower.size() > 0 && (lower.array() > 0.0).any(); }

double DensityConstraint::scale() const {
  double s = 1.0;
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    s = std::max(s, lower[i]);
    if (std::isfinite(upper[i])) s = std::max(s, upper[i]);
  }
  return s;
}

void validate_constraint(const DensityConstraint& c) {
  if (c.lower.size() != c.upper.size()) throw std::invalid_argument("density constraint: bound lengths differ");
  for (Eigen::Index i = 0; i < c.lower.size(); ++i) {
    if (!(c.lower[i] >= 0.0) || !std::isfinite(c.lower[i]))
      throw std::invalid_argument("density constraint: rho_min must be finite and >= 0 at index " + std::to_string(i));
    if (!(c.upper[i] >= c.lower[i]))
      throw std::invalid_argument("density constraint: rho_min > rho_max at index " + std::to_string(i));
  }
}

SupportGrid SupportGrid::uniform(const Vec& lo, const Vec& hi, std::size_t points_per_dim) {
  if (points_per_dim < 2) throw std::invalid_argument("SupportGrid: need at least 2 points per dimension");
  SupportGrid g;
  for (Eigen::Index d = 0; d < lo.size(); ++d) {
    std::vector<double> axis(points_per_dim);
    for (std::size_t i = 0; i < points_per_dim; ++i)
      axis[i] = lo[d] + (hi[d] - lo[d]) * static_cast<double>(i) / static_cast<double>(points_per_dim - 1);
    g.axes.push_back(std::move(axis));
  }
  return g;
}

std::size_t SupportGrid::size() const {
  std::size_t n = axes.empty() ? 0 : 1;
  for (const auto& a : axes) n *= a.size();
  return n;
}

Vec SupportGrid::point(std::size_t index) const {
  Vec p(static_cast<Eigen::Index>(axes.size()));
  for (std::size_t d = axes.size(); d-- > 0;) {
    p[static_cast<Eigen::Index>(d)] = axes[d][index % axes[d].size()];
    index /= axes[d].size();
  }
  return p;
}

SampledMultipliers SampledMultipliers::zeros(SupportGrid grid) {
  SampledMultipliers m{std::move(grid), Vec()};
  m.values = Vec::Zero(static_cast<Eigen::Index>(m.grid.size()));
  return m;
}

double eval_multiplier(const TabularMultipliers& field, std::size_t state) {
  if (state >= static_cast<std::size_t>(field.values.size()))
    throw std::invalid_argument("eval_multiplier: state id out of range");
  return field.values[static_cast<Eigen::Index>(state)];
}

double eval_multiplier(const SampledMultipliers& field, const Vec& state) {
  const auto& axes = field.grid.axes;
  if (static_cast<std::size_t>(state.size()) != axes.size())
    throw std::invalid_argument("eval_multiplier: dimension mismatch");
  for (Eigen::Index d = 0; d < state.size(); ++d)
    if (std::isnan(state[d])) throw std::invalid_argument("eval_multiplier: NaN state component");

  // Per axis: lower knot index and interpolation weight toward the upper knot.
  const std::size_t dim = axes.size();
  std::vector<std::size_t> base(dim);
  std::vector<double> frac(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    const auto& ax = axes[d];
    const double x = state[static_cast<Eigen::Index>(d)];
    if (ax.size() == 1 || x <= ax.front()) {
      base[d] = 0;
      frac[d] = 0.0;
    } else if (x >= ax.back()) {
      base[d] = ax.size() - 2;
      frac[d] = 1.0;
    } else {
      const auto it = std::upper_bound(ax.begin(), ax.end(), x);
      base[d] = static_cast<std::size_t>(it - ax.begin()) - 1;
      frac[d] = (x - ax[base[d]]) / (ax[base[d] + 1] - ax[base[d]]);
    }
  }

  double total = 0.0;
  for (std::size_t corner = 0; corner < (std::size_t{1} << dim); ++corner) {
    double w = 1.0;
    std::size_t flat = 0;
    for (std::size_t d = 0; d < dim; ++d) {
      const bool up = (corner >> d) & 1U;
      const std::size_t n = axes[d].size();
      if (n == 1 && up) {
        w = 0.0;
        break;
      }
      w *= up ? frac[d] : 1.0 - frac[d];
      flat = flat * n + base[d] + (up ? 1 : 0);
    }
    if (w != 0.0) total += w * field.values[static_cast<Eigen::Index>(flat)];
  }
  return std::max(0.0, total);
}

Vec ascend_upper(const Vec& sigma_plus, const Vec& rho, const Vec& rho_max, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("ascend_upper: alpha must be positive");
  require_same_size(sigma_plus, rho, "ascend_upper");
  require_same_size(sigma_plus, rho_max, "ascend_upper");
  Vec out(sigma_plus.size());
  for (Eigen::Index i = 0; i < out.size(); ++i)
    out[i] = std::isfinite(rho_max[i]) ? std::max(0.0, sigma_plus[i] + alpha * (rho[i] - rho_max[i])) : 0.0;
  return out;
}

Vec ascend_lower(const Vec& sigma_minus, const Vec& rho, const Vec& rho_min, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("ascend_lower: alpha must be positive");
  require_same_size(sigma_minus, rho, "ascend_lower");
  require_same_size(sigma_minus, rho_min, "ascend_lower");
  Vec out(sigma_minus.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = std::max(0.0, sigma_minus[i] + alpha * (rho_min[i] - rho[i]));
  return out;
}

TabularMultipliers ascend_upper(const TabularMultipliers& sigma_plus, const Vec& rho, const Vec& rho_max, double alpha) {
  return {ascend_upper(sigma_plus.values, rho, rho_max, alpha)};
}

TabularMultipliers ascend_lower(const TabularMultipliers& sigma_minus, const Vec& rho, const Vec& rho_min, double alpha) {
  return {ascend_lower(sigma_minus.values, rho, rho_min, alpha)};
}

SampledMultipliers ascend_upper(const SampledMultipliers& sigma_plus, const Vec& rho, const Vec& rho_max, double alpha) {
  return {sigma_plus.grid, ascend_upper(sigma_plus.values, rho, rho_max, alpha)};
}

SampledMultipliers ascend_lower(const SampledMultipliers& sigma_minus, const Vec& rho, const Vec& rho_min, double alpha) {
  return {sigma_minus.grid, ascend_lower(sigma_minus.values, rho, rho_min, alpha)};
}

double adjusted_reward(double raw, std::size_t state, const TabularMultipliers& sigma_plus,
                       const TabularMultipliers& sigma_minus) {
  return raw + eval_multiplier(sigma_minus, state) - eval_multiplier(sigma_plus, state);
}

double adjusted_reward(double raw, const Vec& state, const SampledMultipliers& sigma_plus,
                       const SampledMultipliers& sigma_minus) {
  return raw + eval_multiplier(sigma_minus, state) - eval_multiplier(sigma_plus, state);
}

Vec reward_offset(const Vec& sigma_plus, const Vec& sigma_minus) {
  require_same_size(sigma_plus, sigma_minus, "reward_offset");
  return sigma_minus - sigma_plus;
}

KktReport kkt_check(const Vec& rho, const DensityConstraint& constraint, const Vec& sigma_plus,
                    const Vec& sigma_minus, double tol_feas, double tol_cs) {
  require_same_size(rho, constraint.lower, "kkt_check");
  require_same_size(rho, sigma_plus, "kkt_check");
  require_same_size(rho, sigma_minus, "kkt_check");
  KktReport r;
  for (Eigen::Index s = 0; s < rho.size(); ++s) {
    const double over = std::isfinite(constraint.upper[s]) ? rho[s] - constraint.upper[s] : 0.0;
    const double under = constraint.lower[s] - rho[s];
    r.feasibility_violation = std::max({r.feasibility_violation, over, under});
    if (sigma_plus[s] > 0.0) {
      const double gap = std::isfinite(constraint.upper[s]) ? std::abs(rho[s] - constraint.upper[s]) : kInf;
      r.comp_slack_upper = std::max(r.comp_slack_upper, sigma_plus[s] * gap);
    }
    if (sigma_minus[s] > 0.0)
      r.comp_slack_lower = std::max(r.comp_slack_lower, sigma_minus[s] * std::abs(rho[s] - constraint.lower[s]));
  }
  r.satisfied = r.feasibility_violation <= tol_feas && r.comp_slack_upper <= tol_cs && r.comp_slack_lower <= tol_cs;
  return r;
}

double residual_norm(const Vec& sigma_before, const Vec& sigma_after, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("residual_norm: alpha must be positive");
  require_same_size(sigma_before, sigma_after, "residual_norm");
  return (sigma_after - sigma_before).norm() / alpha;
}

}  // namespace dcrl
