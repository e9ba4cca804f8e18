#include "dcrl/envs.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <queue>
#include <stdexcept>

#include "dcrl/exact.hpp"

namespace dcrl {

namespace {

struct Point {
  double x;
  double y;
};

double dist(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

// Edge (i, j) is kept when no other point lies strictly inside the circle
// with diameter ij.
std::vector<std::vector<std::size_t>> gabriel_graph(const std::vector<Point>& pts) {
  const std::size_t n = pts.size();
  std::vector<std::vector<std::size_t>> nb(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const Point m{(pts[i].x + pts[j].x) / 2.0, (pts[i].y + pts[j].y) / 2.0};
      const double r = dist(pts[i], pts[j]) / 2.0;
      bool empty = true;
      for (std::size_t k = 0; k < n && empty; ++k)
        if (k != i && k != j && dist(pts[k], m) < r - 1e-12) empty = false;
      if (empty) {
        nb[i].push_back(j);
        nb[j].push_back(i);
      }
    }
  return nb;
}

constexpr std::array<std::array<int, 2>, 4> kMoves{{{0, 1}, {1, 0}, {0, -1}, {-1, 0}}};  // up, right, down, left

}  // namespace

Vec region_indicator(const EnvMetadata& meta, const std::string& region, std::size_t n_states) {
  const auto it = meta.regions.find(region);
  if (it == meta.regions.end()) throw std::invalid_argument("unknown region '" + region + "'");
  Vec out = Vec::Zero(static_cast<Eigen::Index>(n_states));
  for (std::size_t s : it->second) out[static_cast<Eigen::Index>(s)] = 1.0;
  return out;
}

double expected_step_cost(const DiscreteBundle& bundle, const TabularPolicy& pi) {
  if (bundle.step_cost.size() == 0) throw std::invalid_argument("environment has no step cost");
  return exact_occupancy(bundle.mdp, pi).cwiseProduct(bundle.step_cost).sum();
}

DiscreteBundle make_express_delivery(const ExpressDeliveryParams& params) {
  const std::size_t n = params.n_points;
  if (n < 3) throw std::invalid_argument("express delivery: n_points must be >= 3");
  if (params.rho_min < 0.0) throw std::invalid_argument("express delivery: rho_min must be >= 0");
  if (params.center_links == 0 || params.start_fraction == 0)
    throw std::invalid_argument("express delivery: center_links and start_fraction must be >= 1");

  Rng rng(Rng::mix(params.seed ^ 0xe4d1ULL));
  std::vector<Point> pts(n);
  for (auto& p : pts) {
    p.x = rng.uniform(0.0, params.side);
    p.y = rng.uniform(0.0, params.side);
  }
  const Point center{params.side / 2.0, params.side / 2.0};
  auto nb = gabriel_graph(pts);
  nb.emplace_back();

  std::vector<std::size_t> by_center(n);
  std::iota(by_center.begin(), by_center.end(), 0);
  std::stable_sort(by_center.begin(), by_center.end(),
                   [&](std::size_t a, std::size_t b) { return dist(pts[a], center) < dist(pts[b], center); });
  for (std::size_t i = 0; i < std::min(params.center_links, n); ++i) {
    nb[by_center[i]].push_back(n);
    nb[n].push_back(by_center[i]);
  }
  pts.push_back(center);

  std::size_t n_actions = 1;
  for (std::size_t s = 0; s < n; ++s) n_actions = std::max(n_actions, nb[s].size());

  DiscreteBundle out;
  out.mdp = DiscreteMdp(n + 1, n_actions, params.gamma);
  out.step_cost = Mat::Zero(static_cast<Eigen::Index>(n + 1), static_cast<Eigen::Index>(n_actions));
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t a = 0; a < n_actions; ++a) {
      const std::size_t to = nb[s][a % nb[s].size()];
      const double d = dist(pts[s], pts[to]);
      out.mdp.set(s, a, to, 1.0, -d + (to == n ? params.goal_bonus : 0.0));
      out.step_cost(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = d;
    }
  out.mdp.make_terminal(n);

  const std::size_t k = std::max<std::size_t>(1, n / params.start_fraction);
  std::vector<std::size_t> starts(by_center.rbegin(), by_center.rbegin() + static_cast<std::ptrdiff_t>(k));
  std::sort(starts.begin(), starts.end());
  for (std::size_t s : starts) out.mdp.initial[s] = 1.0 / static_cast<double>(k);
  require_valid(out.mdp);

  out.constraint = DensityConstraint(n + 1);
  std::vector<std::size_t> service(n);
  std::iota(service.begin(), service.end(), 0);
  for (std::size_t s : service) out.constraint.lower[static_cast<Eigen::Index>(s)] = params.rho_min;
  out.meta.name = "express_delivery";
  out.meta.regions = {{"service_points", service}, {"start", starts}, {"center", {n}}};
  out.meta.constants = {{"goal_bonus", params.goal_bonus}, {"rho_min", params.rho_min}, {"side", params.side}};
  out.constraint.regions = out.meta.regions;
  return out;
}

std::size_t ev_state(const EvGridParams& p, std::size_t x, std::size_t y, std::size_t energy) {
  return (y * p.width + x) * p.energy_levels + energy;
}

std::size_t ev_charge(std::size_t energy, double tau, std::size_t energy_levels) {
  const std::size_t full = energy_levels - 1;
  const auto add = static_cast<std::size_t>(std::lround(tau * static_cast<double>(full)));
  return std::min(full, energy + add);
}

DiscreteBundle make_ev_grid(const EvGridParams& p) {
  if (p.energy_levels < 2) throw std::invalid_argument("ev grid: energy_levels must be >= 2");
  if (p.width == 0 || p.height == 0) throw std::invalid_argument("ev grid: empty grid");
  const std::size_t cells = p.width * p.height;
  if (p.n_stations > cells) throw std::invalid_argument("ev grid: more stations than cells");

  const std::size_t L = p.energy_levels;
  const std::size_t depleted = cells * L;
  const std::size_t goal_x = p.width - 1, goal_y = p.height - 1;
  const std::array<double, 5> taus{0.0, 0.25, 0.5, 0.75, 1.0};

  std::vector<std::size_t> order(cells);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(Rng::mix(p.seed ^ 0xe7ULL));
  for (std::size_t i = 0; i < p.n_stations; ++i) std::swap(order[i], order[i + rng.index(cells - i)]);
  std::vector<bool> is_station(cells, false);
  for (std::size_t i = 0; i < p.n_stations; ++i) is_station[order[i]] = true;

  DiscreteBundle out;
  out.mdp = DiscreteMdp(depleted + 1, 4 + taus.size(), p.gamma);
  out.step_cost = Mat::Zero(static_cast<Eigen::Index>(depleted + 1), static_cast<Eigen::Index>(4 + taus.size()));
  for (std::size_t y = 0; y < p.height; ++y)
    for (std::size_t x = 0; x < p.width; ++x)
      for (std::size_t e = 0; e < L; ++e) {
        const std::size_t s = ev_state(p, x, y, e);
        if (x == goal_x && y == goal_y) {
          out.mdp.make_terminal(s);
          continue;
        }
        for (std::size_t a = 0; a < 4; ++a) {
          out.step_cost(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = p.move_cost;
          if (e == 0) {
            out.mdp.set(s, a, depleted, 1.0, 0.0);
            continue;
          }
          const long nx = static_cast<long>(x) + kMoves[a][0], ny = static_cast<long>(y) + kMoves[a][1];
          const bool inside = nx >= 0 && ny >= 0 && nx < static_cast<long>(p.width) && ny < static_cast<long>(p.height);
          const std::size_t tx = inside ? static_cast<std::size_t>(nx) : x;
          const std::size_t ty = inside ? static_cast<std::size_t>(ny) : y;
          const bool goal = tx == goal_x && ty == goal_y;
          out.mdp.set(s, a, ev_state(p, tx, ty, e - 1), 1.0, -p.move_cost + (goal ? p.goal_reward : 0.0));
        }
        for (std::size_t i = 0; i < taus.size(); ++i) {
          const std::size_t to = is_station[y * p.width + x] ? ev_charge(e, taus[i], L) : e;
          out.mdp.set(s, 4 + i, ev_state(p, x, y, to), 1.0, -p.charge_cost);
        }
      }
  out.mdp.make_terminal(depleted);
  out.mdp.initial[ev_state(p, 0, 0, L - 1)] = 1.0;
  require_valid(out.mdp);

  out.constraint = DensityConstraint(depleted + 1);
  std::vector<std::size_t> stations, low;
  for (std::size_t c = 0; c < cells; ++c) {
    if (c == goal_y * p.width + goal_x) continue;
    for (std::size_t e = 0; e < L; ++e) {
      const std::size_t s = c * L + e;
      auto& hi = out.constraint.upper[static_cast<Eigen::Index>(s)];
      if (is_station[c]) {
        stations.push_back(s);
        hi = std::min(hi, p.station_cap);
      }
      if (e <= p.low_energy_level) {
        low.push_back(s);
        hi = std::min(hi, p.low_energy_cap);
      }
    }
  }
  out.meta.name = "ev_grid";
  out.meta.regions = {{"stations", stations}, {"low_energy", low}, {"depleted", {depleted}}};
  out.meta.constants = {{"goal_reward", p.goal_reward}, {"move_cost", p.move_cost}, {"charge_cost", p.charge_cost}};
  out.constraint.regions = out.meta.regions;
  return out;
}

std::vector<std::string> default_rover_layout() {
  return {"111.....",
          "11......",
          "........",
          ".###22##",
          ".###22##",
          "........",
          "........",
          "......33"};
}

DiscreteBundle make_mars_rover(const MarsRoverParams& params) {
  const auto& rows = params.layout.empty() ? default_rover_layout() : params.layout;
  const std::size_t h = rows.size(), w = rows.front().size();
  if (params.slip < 0.0 || params.slip > 1.0) throw std::invalid_argument("mars rover: slip must be in [0, 1]");
  if (params.area2_budget < 0.0) throw std::invalid_argument("mars rover: area2_budget must be >= 0");

  std::vector<long> id(h * w, -1);
  std::vector<std::pair<std::size_t, std::size_t>> cell_of;
  std::map<char, std::vector<std::size_t>> areas;
  for (std::size_t y = 0; y < h; ++y) {
    if (rows[y].size() != w) throw std::invalid_argument("mars rover: ragged layout at row " + std::to_string(y));
    for (std::size_t x = 0; x < w; ++x) {
      const char c = rows[y][x];
      if (c == '#') continue;
      if (c != '.' && c != '1' && c != '2' && c != '3')
        throw std::invalid_argument(std::string("mars rover: unknown layout character '") + c + "'");
      id[y * w + x] = static_cast<long>(cell_of.size());
      if (c != '.') areas[c].push_back(cell_of.size());
      cell_of.emplace_back(x, y);
    }
  }
  if (areas['1'].empty()) throw std::invalid_argument("mars rover: layout has no area 1");
  if (areas['3'].empty()) throw std::invalid_argument("mars rover: layout has no area 3");

  const std::size_t S = cell_of.size();
  auto target = [&](std::size_t s, std::size_t a) {
    const auto [x, y] = cell_of[s];
    // Row 0 is drawn on top, so "up" decreases the row index.
    const long nx = static_cast<long>(x) + kMoves[a][0], ny = static_cast<long>(y) - kMoves[a][1];
    if (nx < 0 || ny < 0 || nx >= static_cast<long>(w) || ny >= static_cast<long>(h)) return s;
    const long t = id[static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx)];
    return t < 0 ? s : static_cast<std::size_t>(t);
  };

  std::vector<bool> goal(S, false);
  for (std::size_t s : areas['3']) goal[s] = true;
  // Every start cell must reach area 3.
  std::vector<bool> reach(S, false);
  std::queue<std::size_t> frontier;
  for (std::size_t s : areas['3']) {
    reach[s] = true;
    frontier.push(s);
  }
  while (!frontier.empty()) {
    const std::size_t t = frontier.front();
    frontier.pop();
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t a = 0; a < 4 && !reach[s]; ++a)
        if (!goal[s] && target(s, a) == t) {
          reach[s] = true;
          frontier.push(s);
        }
  }
  for (std::size_t s : areas['1'])
    if (!reach[s]) throw std::invalid_argument("mars rover: area 3 is not reachable from area 1");

  DiscreteBundle out;
  out.mdp = DiscreteMdp(S, 4, params.gamma);
  for (std::size_t s = 0; s < S; ++s) {
    if (goal[s]) continue;
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = 0; b < 4; ++b) {
        const double prob = (a == b ? 1.0 - params.slip : 0.0) + params.slip / 4.0;
        if (prob == 0.0) continue;
        const std::size_t t = target(s, b);
        out.mdp.transition[out.mdp.idx(s, a, t)] += prob;
        out.mdp.reward[out.mdp.idx(s, a, t)] = -params.energy_cost + (goal[t] ? params.goal_reward : 0.0);
      }
  }
  for (std::size_t s : areas['3']) out.mdp.make_terminal(s);
  for (std::size_t s : areas['1']) out.mdp.initial[s] = 1.0 / static_cast<double>(areas['1'].size());
  require_valid(out.mdp);

  out.constraint = DensityConstraint(S);
  const auto& area2 = areas['2'];
  for (std::size_t s : area2)
    out.constraint.upper[static_cast<Eigen::Index>(s)] = params.area2_budget / static_cast<double>(area2.size());
  out.meta.name = "mars_rover";
  out.meta.regions = {{"area1", areas['1']}, {"area2", area2}, {"area3", areas['3']}};
  out.meta.constants = {{"goal_reward", params.goal_reward},
                        {"energy_cost", params.energy_cost},
                        {"area2_budget", params.area2_budget},
                        {"width", static_cast<double>(w)},
                        {"height", static_cast<double>(h)}};
  out.constraint.regions = out.meta.regions;
  return out;
}

ThermalMotor::ThermalMotor(ThermalMotorParams params) : params_(params) {
  if (!(params_.heat_decay > 0.0)) throw std::invalid_argument("thermal motor: heat_decay must be positive");
  if (!(params_.heat_gain >= 0.0)) throw std::invalid_argument("thermal motor: heat_gain must be >= 0");
  if (!(params_.drag > 0.0 && params_.drag <= 1.0)) throw std::invalid_argument("thermal motor: drag must be in (0, 1]");
  if (!(params_.gamma >= 0.0 && params_.gamma < 1.0)) throw std::invalid_argument("thermal motor: discount must be < 1");
  if (!(params_.ref_lo < params_.ref_hi)) throw std::invalid_argument("thermal motor: ref_lo must be < ref_hi");
  if (params_.grid_points < 2) throw std::invalid_argument("thermal motor: grid_points must be >= 2");
  state_box_ = {Vec::Zero(3), Vec::Ones(3)};
  action_box_ = {Vec::Zero(1), Vec::Ones(1)};
}

Vec ThermalMotor::reset(std::uint64_t seed) const {
  Rng rng(seed);
  Vec s(3);
  s << rng.uniform(0.0, 0.2), rng.uniform(0.0, params_.reset_heat_hi), rng.uniform(params_.ref_lo, params_.ref_hi);
  return s;
}

StepResult ThermalMotor::step(const Vec& state, const Vec& action, Rng& rng) const {
  const double u = std::clamp(action[0], 0.0, 1.0);
  StepResult out;
  out.next_state.resize(3);
  out.next_state[0] = std::clamp((1.0 - params_.drag) * state[0] + params_.gain * u, 0.0, 1.0);
  out.next_state[1] = std::clamp((1.0 - params_.heat_decay) * state[1] + params_.heat_gain * u * u, 0.0, 1.0);
  out.next_state[2] = std::clamp(state[2] + params_.ref_step * rng.normal(), params_.ref_lo, params_.ref_hi);
  out.reward = -std::abs(out.next_state[0] - out.next_state[2]);
  return out;
}

ContinuousBundle make_thermal_motor(const ThermalMotorParams& params) {
  ContinuousBundle out;
  out.env = std::make_shared<ThermalMotor>(params);
  out.constraint.dims = {1};
  out.constraint.grid = SupportGrid::uniform(Vec::Zero(1), Vec::Ones(1), params.grid_points);
  out.constraint.bounds = DensityConstraint(params.grid_points);
  std::vector<std::size_t> hot;
  for (std::size_t i = 0; i < params.grid_points; ++i)
    if (out.constraint.grid.point(i)[0] >= params.heat_threshold) {
      out.constraint.bounds.upper[static_cast<Eigen::Index>(i)] = params.heat_cap;
      hot.push_back(i);
    }
  out.meta.name = "thermal_motor";
  out.meta.regions = {{"high_heat_points", hot}};
  out.meta.constants = {{"heat_threshold", params.heat_threshold},
                        {"heat_cap", params.heat_cap},
                        {"heat_equilibrium_full_action", params.heat_gain / params.heat_decay}};
  out.constraint.bounds.regions = out.meta.regions;
  return out;
}

}  // namespace dcrl
