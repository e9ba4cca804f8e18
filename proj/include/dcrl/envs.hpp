#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dcrl/continuous_env.hpp"
#include "dcrl/dcrl.hpp"
#include "dcrl/dual.hpp"
#include "dcrl/mdp.hpp"

namespace dcrl {

struct EnvMetadata {
  std::string name;
  std::map<std::string, std::vector<std::size_t>> regions;  // named state sets
  std::map<std::string, double> constants;
};

struct DiscreteBundle {
  DiscreteMdp mdp;
  DensityConstraint constraint;
  EnvMetadata meta;
  Mat step_cost;  // (s, a) cost for cost-reporting environments; empty otherwise
};

struct ContinuousBundle {
  std::shared_ptr<const ContinuousEnv> env;
  ContinuousConstraint constraint;
  EnvMetadata meta;
};

/// Indicator vector of a named region.
Vec region_indicator(const EnvMetadata& meta, const std::string& region, std::size_t n_states);

/// Expected discounted step cost sum_{s,a} rho_bar(s, a) cost(s, a) under pi.
double expected_step_cost(const DiscreteBundle& bundle, const TabularPolicy& pi);

struct ExpressDeliveryParams {
  std::size_t n_points = 10;
  double rho_min = 0.1;
  double gamma = 0.99;
  double goal_bonus = 10.0;
  double side = 10.0;               // service points uniform in [0, side]^2
  std::size_t center_links = 3;     // nearest points connected to the ship center
  std::size_t start_fraction = 5;   // phi uniform over the n / start_fraction farthest points
  std::uint64_t seed = 0;
};

/// Service points joined by their Gabriel graph, plus a terminal ship center
/// (state n_points). Action i moves to the i-th neighbor; slots past the
/// degree wrap around the neighbor list. Reward is minus the edge length, plus
/// the goal bonus on arrival at the center. Lower bound rho_min on every
/// service point.
DiscreteBundle make_express_delivery(const ExpressDeliveryParams& params);

struct EvGridParams {
  std::size_t width = 6;
  std::size_t height = 6;
  std::size_t n_stations = 3;
  std::size_t energy_levels = 5;
  double gamma = 0.95;
  double goal_reward = 10.0;
  double move_cost = 0.1;          // per unit-grid move
  double charge_cost = 0.02;       // per charging step
  double station_cap = kInf;       // rho_max on every station state
  double low_energy_cap = kInf;    // rho_max on states with energy <= low_energy_level
  std::size_t low_energy_level = 0;
  std::uint64_t seed = 0;
};

/// Grid of (x, y, energy) states plus a terminal goal (top-right corner) and a
/// terminal depleted state. Actions: four moves, then five charge levels
/// tau in {0, 1/4, 1/2, 3/4, 1}. A move costs one energy level; moving at
/// energy 0 depletes the battery and ends the episode. Charging at a station
/// sets energy to min(full, e + tau * full); elsewhere it idles.
DiscreteBundle make_ev_grid(const EvGridParams& params);

/// Index of (x, y, energy) in an EV grid bundle.
std::size_t ev_state(const EvGridParams& params, std::size_t x, std::size_t y, std::size_t energy);

/// Energy after charging with level tau from energy e, both on the discrete scale.
std::size_t ev_charge(std::size_t energy, double tau, std::size_t energy_levels);

struct MarsRoverParams {
  std::vector<std::string> layout;  // rows of '1' start, '2' restricted, '3' goal, '.' free, '#' rock
  double gamma = 0.95;
  double goal_reward = 10.0;
  double energy_cost = 0.1;
  double slip = 0.1;                // probability of a uniformly random move instead
  double area2_budget = 0.5;        // cap on the summed discounted density over area 2
};

/// Default 8x8 layout whose shortest route crosses area 2.
std::vector<std::string> default_rover_layout();

/// Gridworld with phi uniform over area 1, terminal area 3 paying the goal
/// reward on arrival, and a per-state cap budget / |area 2| on area 2.
DiscreteBundle make_mars_rover(const MarsRoverParams& params);

struct ThermalMotorParams {
  double gamma = 0.95;
  double drag = 0.1;             // velocity <- (1 - drag) v + gain u
  double gain = 0.1;
  double heat_gain = 0.05;       // lambda_h
  double heat_decay = 0.05;      // lambda_d
  double ref_step = 0.005;       // reference random-walk step std
  double reset_heat_hi = 0.2;    // initial heat ~ U[0, reset_heat_hi]
  double ref_lo = 0.6;           // reference range; also its initial distribution
  double ref_hi = 0.95;
  double heat_threshold = 0.5;
  double heat_cap = 1.0;         // rho_max at support points with heat >= threshold
  std::size_t grid_points = 32;  // support points along the heat axis
};

/// State (velocity, heat, reference) in [0, 1]^3, action u in [0, 1]. Episodes
/// start from velocity ~ U[0, 0.2], heat ~ U[0, reset_heat_hi], reference ~ U[ref_lo, ref_hi].
class ThermalMotor final : public ContinuousEnv {
 public:
  explicit ThermalMotor(ThermalMotorParams params);

  std::size_t state_dim() const override { return 3; }
  std::size_t action_dim() const override { return 1; }
  const Box& state_bounds() const override { return state_box_; }
  const Box& action_bounds() const override { return action_box_; }
  double gamma() const override { return params_.gamma; }
  Vec reset(std::uint64_t seed) const override;
  StepResult step(const Vec& state, const Vec& action, Rng& rng) const override;

  const ThermalMotorParams& params() const { return params_; }

 private:
  ThermalMotorParams params_;
  Box state_box_;
  Box action_box_;
};

/// Motor plus a heat-axis constraint enforced through KDE on state dim 1.
ContinuousBundle make_thermal_motor(const ThermalMotorParams& params);

}  // namespace dcrl
