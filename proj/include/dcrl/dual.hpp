#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

#include "dcrl/mdp.hpp"

namespace dcrl {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Pointwise bounds rho_min <= rho <= rho_max over a finite index set: state
/// ids for tabular problems, support points for sampled ones.
struct DensityConstraint {
  Vec lower;
  Vec upper;
  std::map<std::string, std::vector<std::size_t>> regions;

  DensityConstraint() = default;
  /// Unconstrained: lower 0, upper +inf.
  explicit DensityConstraint(std::size_t n);
  DensityConstraint(Vec lower_bounds, Vec upper_bounds);

  std::size_t size() const { return static_cast<std::size_t>(lower.size()); }
  bool has_finite_upper() const;
  bool has_positive_lower() const;
  /// max(1, largest finite bound); tolerances are scaled by this.
  double scale() const;
};

/// Throws std::invalid_argument unless 0 <= lower <= upper elementwise.
void validate_constraint(const DensityConstraint& c);

/// Tensor-product grid of support points. Point index is row-major over the
/// axes (last axis fastest).
struct SupportGrid {
  std::vector<std::vector<double>> axes;

  static SupportGrid uniform(const Vec& lo, const Vec& hi, std::size_t points_per_dim);
  std::size_t dim() const { return axes.size(); }
  std::size_t size() const;
  Vec point(std::size_t index) const;
};

struct TabularMultipliers {
  Vec values;

  static TabularMultipliers zeros(std::size_t n) { return {Vec::Zero(static_cast<Eigen::Index>(n))}; }
  double operator()(std::size_t s) const { return values[static_cast<Eigen::Index>(s)]; }
};

/// Multiplier values at grid support points, evaluated by multilinear
/// interpolation and held constant outside the grid.
struct SampledMultipliers {
  SupportGrid grid;
  Vec values;

  static SampledMultipliers zeros(SupportGrid grid);
};

double eval_multiplier(const TabularMultipliers& field, std::size_t state);
double eval_multiplier(const SampledMultipliers& field, const Vec& state);

/// max(0, sigma + alpha (rho - rho_max)); infinite bounds give 0.
Vec ascend_upper(const Vec& sigma_plus, const Vec& rho, const Vec& rho_max, double alpha);
/// max(0, sigma + alpha (rho_min - rho)).
Vec ascend_lower(const Vec& sigma_minus, const Vec& rho, const Vec& rho_min, double alpha);

TabularMultipliers ascend_upper(const TabularMultipliers& sigma_plus, const Vec& rho, const Vec& rho_max, double alpha);
TabularMultipliers ascend_lower(const TabularMultipliers& sigma_minus, const Vec& rho, const Vec& rho_min, double alpha);
SampledMultipliers ascend_upper(const SampledMultipliers& sigma_plus, const Vec& rho, const Vec& rho_max, double alpha);
SampledMultipliers ascend_lower(const SampledMultipliers& sigma_minus, const Vec& rho, const Vec& rho_min, double alpha);

/// raw + sigma_minus(s) - sigma_plus(s).
double adjusted_reward(double raw, std::size_t state, const TabularMultipliers& sigma_plus,
                       const TabularMultipliers& sigma_minus);
double adjusted_reward(double raw, const Vec& state, const SampledMultipliers& sigma_plus,
                       const SampledMultipliers& sigma_minus);

/// Per-state offset sigma_minus - sigma_plus.
Vec reward_offset(const Vec& sigma_plus, const Vec& sigma_minus);

struct KktReport {
  double feasibility_violation = 0.0;
  double comp_slack_upper = 0.0;
  double comp_slack_lower = 0.0;
  bool satisfied = false;
};

KktReport kkt_check(const Vec& rho, const DensityConstraint& constraint, const Vec& sigma_plus,
                    const Vec& sigma_minus, double tol_feas, double tol_cs);

/// ||sigma_after - sigma_before||_2 / alpha.
double residual_norm(const Vec& sigma_before, const Vec& sigma_after, double alpha);

}  // namespace dcrl
