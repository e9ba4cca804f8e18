#include "cli.hpp"

#include <Eigen/Core>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "dcrl/dcrl.hpp"
#include "dcrl/envs.hpp"
#include "dcrl/exact.hpp"
#include "dcrl/oracle.hpp"
#include "json.hpp"

namespace dcrl::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

constexpr const char* kVersion = "1.0.0";
constexpr std::size_t kMaxSweepCells = 1000;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// JSON helpers. Infinite bounds are written as the string "inf".

json num_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  return json(v);
}

double as_number(const json& j, const std::string& path) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  throw ConfigError("config: '" + path + "' must be a number or \"inf\"");
}

std::size_t as_count(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() < 0)
    throw ConfigError("config: '" + path + "' must be a nonnegative integer");
  return j.get<std::size_t>();
}

std::uint64_t as_u64(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() < 0)
    throw ConfigError("config: '" + path + "' must be a nonnegative integer");
  return j.get<std::uint64_t>();
}

std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError("config: '" + path + "' must be a string");
  return j.get<std::string>();
}

/// Typed view of one resolved section; `at` reports the dotted key on error.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {}
  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
  const json& raw(const std::string& k) const {
    if (!j_.contains(k)) throw ConfigError("config: missing key '" + key(k) + "'");
    return j_.at(k);
  }
  double num(const std::string& k) const { return as_number(raw(k), key(k)); }
  std::size_t count(const std::string& k) const { return as_count(raw(k), key(k)); }
  std::uint64_t u64(const std::string& k) const { return as_u64(raw(k), key(k)); }
  std::string str(const std::string& k) const { return as_string(raw(k), key(k)); }
  Section sub(const std::string& k) const {
    if (!raw(k).is_object()) throw ConfigError("config: '" + key(k) + "' must be an object");
    return {raw(k), key(k)};
  }

 private:
  const json& j_;
  std::string path_;
};

// Every key of `user` must exist in `defaults`; values whose default is not an
// object are leaves and are checked when read.
void check_keys(const json& user, const json& defaults, const std::string& path) {
  if (!user.is_object()) throw ConfigError("config: '" + (path.empty() ? std::string("<root>") : path) + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!defaults.contains(it.key())) throw ConfigError("config: unknown key '" + key + "'");
    const json& d = defaults.at(it.key());
    if (d.is_object() && !d.empty()) check_keys(it.value(), d, key);
  }
}

// ---------------------------------------------------------------------------
// Defaults

json express_defaults() {
  const ExpressDeliveryParams p;
  return {{"n_points", p.n_points}, {"rho_min", p.rho_min}, {"gamma", p.gamma},
          {"goal_bonus", p.goal_bonus}, {"side", p.side}, {"center_links", p.center_links},
          {"start_fraction", p.start_fraction}, {"seed", p.seed}};
}

json ev_defaults() {
  const EvGridParams p;
  return {{"width", p.width}, {"height", p.height}, {"n_stations", p.n_stations},
          {"energy_levels", p.energy_levels}, {"gamma", p.gamma}, {"goal_reward", p.goal_reward},
          {"move_cost", p.move_cost}, {"charge_cost", p.charge_cost}, {"station_cap", num_or_inf(p.station_cap)},
          {"low_energy_cap", num_or_inf(p.low_energy_cap)}, {"low_energy_level", p.low_energy_level},
          {"seed", p.seed}};
}

json rover_defaults() {
  const MarsRoverParams p;
  return {{"layout", default_rover_layout()}, {"gamma", p.gamma}, {"goal_reward", p.goal_reward},
          {"energy_cost", p.energy_cost}, {"slip", p.slip}, {"area2_budget", p.area2_budget}};
}

json motor_defaults() {
  const ThermalMotorParams p;
  return {{"gamma", p.gamma}, {"drag", p.drag}, {"gain", p.gain}, {"heat_gain", p.heat_gain},
          {"heat_decay", p.heat_decay}, {"ref_step", p.ref_step}, {"reset_heat_hi", p.reset_heat_hi},
          {"ref_lo", p.ref_lo}, {"ref_hi", p.ref_hi}, {"heat_threshold", p.heat_threshold},
          {"heat_cap", num_or_inf(p.heat_cap)}, {"grid_points", p.grid_points}};
}

json env_defaults(const std::string& name) {
  if (name == "express_delivery") return express_defaults();
  if (name == "ev_grid") return ev_defaults();
  if (name == "mars_rover") return rover_defaults();
  if (name == "thermal_motor") return motor_defaults();
  if (name == "mdp_file") return {{"path", ""}};
  throw ConfigError("config: unknown environment '" + name + "' at key 'environment.name'");
}

json config_defaults(const std::string& env_name) {
  const DcrlConfig d;
  const CersConfig c;
  const QLearningConfig q;
  const CemConfig m;
  return {
      {"name", ""},
      {"environment", {{"name", env_name}, {"params", env_defaults(env_name)}}},
      {"constraint", {{"overrides", json::array()}}},
      {"method", "dcrl"},
      {"seed", d.seed},
      {"output", ""},
      {"solver",
       {{"kind", "auto"},
        {"mu", d.mu},
        {"inner_tol", d.inner_tol},
        {"policy_spread", 0.1},
        {"q_learning",
         {{"learning_rate", q.learning_rate}, {"learning_rate_decay", q.learning_rate_decay},
          {"epsilon_start", q.epsilon_start}, {"epsilon_end", q.epsilon_end}, {"episodes", q.episodes},
          {"horizon", q.horizon}, {"replay_sweeps", q.replay_sweeps}}},
        {"cem",
         {{"population", m.population}, {"elite_fraction", m.elite_fraction}, {"noise_floor", m.noise_floor},
          {"initial_std", m.initial_std}, {"iterations", m.iterations},
          {"episodes_per_candidate", m.episodes_per_candidate}, {"horizon", 0}}}}},
      {"dual",
       {{"alpha", d.alpha}, {"schedule", to_string(d.schedule)}, {"tol_feas", d.tol_feas}, {"tol_cs", d.tol_cs},
        {"max_iterations", d.max_iterations}, {"sigma_cap", d.sigma_cap}, {"cap_patience", d.cap_patience}}},
      {"density",
       {{"episodes", d.episodes}, {"tail", d.tail}, {"horizon", d.horizon}, {"smoothing", d.smoothing},
        {"workers", d.workers}, {"kernel", "gaussian"}, {"bandwidth", json::array()}, {"max_samples", 0}}},
      {"cers",
       {{"population", c.population}, {"elite_fraction", c.elite_fraction}, {"initial_mean", c.initial_mean},
        {"initial_std", c.initial_std}, {"std_floor", c.std_floor}, {"max_generations", c.max_generations},
        {"time_budget_s", c.time_budget_s}}},
      {"rcpo", {{"region", ""}, {"eta", nullptr}}},
      {"convert", {{"region", ""}}},
      {"oracle", {{"max_states", 50}}},
  };
}

// ---------------------------------------------------------------------------
// Loading

enum class Method { dcrl, rcpo, cers, unconstrained };

Method parse_method(const std::string& name) {
  if (name == "dcrl") return Method::dcrl;
  if (name == "rcpo") return Method::rcpo;
  if (name == "cers") return Method::cers;
  if (name == "unconstrained") return Method::unconstrained;
  throw ConfigError("config: unknown method '" + name + "' at key 'method' (expected dcrl, rcpo, cers or unconstrained)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::dcrl: return "dcrl";
    case Method::rcpo: return "rcpo";
    case Method::cers: return "cers";
    case Method::unconstrained: return "unconstrained";
  }
  return "";
}

struct Loaded {
  json resolved;
  Method method = Method::dcrl;
  std::optional<DiscreteBundle> discrete;
  std::optional<ContinuousBundle> continuous;
  DcrlConfig dcrl;
  CersConfig cers;
  KdeOptions kde;
  double policy_spread = 0.1;
  std::string rcpo_region;
  std::optional<double> rcpo_eta;
  std::string convert_region;
  std::size_t oracle_max_states = 50;
  fs::path output;
};

DiscreteBundle load_mdp_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read MDP file '" + path.string() + "' (key 'environment.params.path')");
  DiscreteBundle b;
  b.mdp = read_mdp(in);
  b.constraint = DensityConstraint(b.mdp.n_states);
  b.meta.name = "mdp_file";
  return b;
}

void build_environment(const Section& env, const fs::path& base_dir, Loaded& L) {
  const std::string name = env.str("name");
  const Section p = env.sub("params");
  if (name == "express_delivery") {
    ExpressDeliveryParams e;
    e.n_points = p.count("n_points");
    e.rho_min = p.num("rho_min");
    e.gamma = p.num("gamma");
    e.goal_bonus = p.num("goal_bonus");
    e.side = p.num("side");
    e.center_links = p.count("center_links");
    e.start_fraction = p.count("start_fraction");
    e.seed = p.u64("seed");
    L.discrete = make_express_delivery(e);
  } else if (name == "ev_grid") {
    EvGridParams e;
    e.width = p.count("width");
    e.height = p.count("height");
    e.n_stations = p.count("n_stations");
    e.energy_levels = p.count("energy_levels");
    e.gamma = p.num("gamma");
    e.goal_reward = p.num("goal_reward");
    e.move_cost = p.num("move_cost");
    e.charge_cost = p.num("charge_cost");
    e.station_cap = p.num("station_cap");
    e.low_energy_cap = p.num("low_energy_cap");
    e.low_energy_level = p.count("low_energy_level");
    e.seed = p.u64("seed");
    L.discrete = make_ev_grid(e);
  } else if (name == "mars_rover") {
    MarsRoverParams e;
    const json& layout = p.raw("layout");
    if (!layout.is_array()) throw ConfigError("config: 'environment.params.layout' must be an array of strings");
    for (const auto& row : layout) e.layout.push_back(as_string(row, "environment.params.layout"));
    e.gamma = p.num("gamma");
    e.goal_reward = p.num("goal_reward");
    e.energy_cost = p.num("energy_cost");
    e.slip = p.num("slip");
    e.area2_budget = p.num("area2_budget");
    L.discrete = make_mars_rover(e);
  } else if (name == "thermal_motor") {
    ThermalMotorParams e;
    e.gamma = p.num("gamma");
    e.drag = p.num("drag");
    e.gain = p.num("gain");
    e.heat_gain = p.num("heat_gain");
    e.heat_decay = p.num("heat_decay");
    e.ref_step = p.num("ref_step");
    e.reset_heat_hi = p.num("reset_heat_hi");
    e.ref_lo = p.num("ref_lo");
    e.ref_hi = p.num("ref_hi");
    e.heat_threshold = p.num("heat_threshold");
    e.heat_cap = p.num("heat_cap");
    e.grid_points = p.count("grid_points");
    L.continuous = make_thermal_motor(e);
  } else if (name == "mdp_file") {
    fs::path path = p.str("path");
    if (path.is_relative()) path = base_dir / path;
    L.discrete = load_mdp_file(path);
  } else {
    env_defaults(name);  // throws the unknown-environment error
  }
}

// {"states": [ids] | "region": name, "lower": x, "upper": x}
void apply_overrides(const json& overrides, Loaded& L) {
  if (!overrides.is_array()) throw ConfigError("config: 'constraint.overrides' must be an array");
  if (overrides.empty()) return;
  DensityConstraint& c = L.discrete ? L.discrete->constraint : L.continuous->constraint.bounds;
  const EnvMetadata& meta = L.discrete ? L.discrete->meta : L.continuous->meta;
  for (std::size_t i = 0; i < overrides.size(); ++i) {
    const std::string path = "constraint.overrides[" + std::to_string(i) + "]";
    const json& o = overrides[i];
    if (!o.is_object()) throw ConfigError("config: '" + path + "' must be an object");
    for (auto it = o.begin(); it != o.end(); ++it)
      if (it.key() != "states" && it.key() != "region" && it.key() != "lower" && it.key() != "upper")
        throw ConfigError("config: unknown key '" + path + "." + it.key() + "'");
    std::vector<std::size_t> ids;
    if (o.contains("states")) {
      for (const auto& s : o.at("states")) ids.push_back(as_count(s, path + ".states"));
    } else if (o.contains("region")) {
      const auto name = as_string(o.at("region"), path + ".region");
      const auto it = meta.regions.find(name);
      if (it == meta.regions.end()) throw ConfigError("config: unknown region '" + name + "' at key '" + path + ".region'");
      ids = it->second;
    } else {
      throw ConfigError("config: '" + path + "' needs 'states' or 'region'");
    }
    for (std::size_t s : ids) {
      if (s >= c.size()) throw ConfigError("config: state " + std::to_string(s) + " out of range at key '" + path + ".states'");
      const auto si = static_cast<Eigen::Index>(s);
      if (o.contains("lower")) c.lower[si] = as_number(o.at("lower"), path + ".lower");
      if (o.contains("upper")) c.upper[si] = as_number(o.at("upper"), path + ".upper");
    }
  }
  try {
    validate_constraint(c);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: constraint.overrides: ") + e.what());
  }
}

Loaded load(const json& user, const fs::path& base_dir, std::optional<std::uint64_t> seed_override,
            const std::optional<std::string>& out_override) {
  if (!user.is_object()) throw ConfigError("config: top level must be an object");
  if (!user.contains("environment") || !user.at("environment").is_object() ||
      !user.at("environment").contains("name"))
    throw ConfigError("config: missing key 'environment.name'");
  const std::string env_name = as_string(user.at("environment").at("name"), "environment.name");
  json resolved = config_defaults(env_name);
  check_keys(user, resolved, "");
  resolved.merge_patch(user);
  // merge_patch drops null members; keep rcpo.eta present.
  if (!resolved["rcpo"].contains("eta")) resolved["rcpo"]["eta"] = nullptr;
  if (seed_override) resolved["seed"] = *seed_override;

  Loaded L;
  const Section root(resolved, "");
  L.method = parse_method(root.str("method"));
  try {
    build_environment(root.sub("environment"), base_dir, L);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: environment: ") + e.what());
  }
  apply_overrides(resolved.at("constraint").at("overrides"), L);

  DcrlConfig& d = L.dcrl;
  d.seed = root.u64("seed");
  const Section solver = root.sub("solver");
  const std::string kind = solver.str("kind");
  if (L.discrete) {
    if (kind == "auto" || kind == "exact") d.solver = InnerSolver::exact;
    else if (kind == "q_learning") d.solver = InnerSolver::q_learning;
    else throw ConfigError("config: solver kind '" + kind + "' at key 'solver.kind' is not available for a discrete environment");
  } else if (kind != "auto" && kind != "cem") {
    throw ConfigError("config: solver kind '" + kind + "' at key 'solver.kind' is not available for a continuous environment");
  }
  d.mu = solver.num("mu");
  d.inner_tol = solver.num("inner_tol");
  L.policy_spread = solver.num("policy_spread");
  const Section q = solver.sub("q_learning");
  d.q_learning.learning_rate = q.num("learning_rate");
  d.q_learning.learning_rate_decay = q.num("learning_rate_decay");
  d.q_learning.epsilon_start = q.num("epsilon_start");
  d.q_learning.epsilon_end = q.num("epsilon_end");
  d.q_learning.episodes = q.count("episodes");
  d.q_learning.horizon = q.count("horizon");
  d.q_learning.replay_sweeps = q.count("replay_sweeps");
  const Section m = solver.sub("cem");
  d.cem.population = m.count("population");
  d.cem.elite_fraction = m.num("elite_fraction");
  d.cem.noise_floor = m.num("noise_floor");
  d.cem.initial_std = m.num("initial_std");
  d.cem.iterations = m.count("iterations");
  d.cem.episodes_per_candidate = m.count("episodes_per_candidate");
  d.cem.horizon = m.count("horizon");

  const Section dual = root.sub("dual");
  d.alpha = dual.num("alpha");
  try {
    d.schedule = parse_step_schedule(dual.str("schedule"));
  } catch (const std::invalid_argument&) {
    throw ConfigError("config: unknown schedule '" + dual.str("schedule") + "' at key 'dual.schedule'");
  }
  d.tol_feas = dual.num("tol_feas");
  d.tol_cs = dual.num("tol_cs");
  d.max_iterations = dual.count("max_iterations");
  d.sigma_cap = dual.num("sigma_cap");
  d.cap_patience = dual.count("cap_patience");

  const Section dens = root.sub("density");
  d.episodes = dens.count("episodes");
  d.tail = dens.num("tail");
  d.horizon = dens.count("horizon");
  d.smoothing = dens.num("smoothing");
  d.workers = std::max<std::size_t>(1, dens.count("workers"));
  d.cem.workers = d.workers;
  try {
    L.kde.kind = parse_kernel_kind(dens.str("kernel"));
  } catch (const std::invalid_argument&) {
    throw ConfigError("config: unknown kernel '" + dens.str("kernel") + "' at key 'density.kernel'");
  }
  const json& bw = dens.raw("bandwidth");
  if (!bw.is_array()) throw ConfigError("config: 'density.bandwidth' must be an array");
  L.kde.bandwidth = Vec(static_cast<Eigen::Index>(bw.size()));
  for (std::size_t i = 0; i < bw.size(); ++i) L.kde.bandwidth[static_cast<Eigen::Index>(i)] = as_number(bw[i], "density.bandwidth");
  L.kde.max_samples = dens.count("max_samples");

  try {
    validate(d);
    if (d.solver == InnerSolver::q_learning) validate(d.q_learning);
    if (L.continuous) validate(d.cem);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  const Section cers = root.sub("cers");
  CersConfig& c = L.cers;
  c.population = cers.count("population");
  c.elite_fraction = cers.num("elite_fraction");
  c.initial_mean = cers.num("initial_mean");
  c.initial_std = cers.num("initial_std");
  c.std_floor = cers.num("std_floor");
  c.max_generations = cers.count("max_generations");
  c.time_budget_s = cers.num("time_budget_s");
  c.episodes = d.episodes;
  c.tail = d.tail;
  c.tol_feas = d.tol_feas;
  c.mu = d.mu;
  c.inner_tol = d.inner_tol;
  c.seed = d.seed;

  const Section rcpo = root.sub("rcpo");
  L.rcpo_region = rcpo.str("region");
  if (!rcpo.raw("eta").is_null()) L.rcpo_eta = rcpo.num("eta");
  L.convert_region = root.sub("convert").str("region");
  L.oracle_max_states = root.sub("oracle").count("max_states");

  std::string out = out_override ? *out_override : root.str("output");
  if (out.empty()) out = "runs/" + to_string(L.method);
  L.output = out;
  resolved["output"] = out;
  L.resolved = std::move(resolved);
  return L;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Artifacts

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  body(f);
}

void write_policy_csv(std::ostream& out, const TabularPolicy& pi) {
  out << "state";
  for (std::size_t a = 0; a < pi.n_actions(); ++a) out << ",a" << a;
  out << '\n' << std::setprecision(17);
  for (std::size_t s = 0; s < pi.n_states(); ++s) {
    out << s;
    for (std::size_t a = 0; a < pi.n_actions(); ++a) out << ',' << pi(s, a);
    out << '\n';
  }
}

void write_support_csv(std::ostream& out, const SupportGrid& grid, const std::vector<std::size_t>& dims) {
  out << "id";
  for (std::size_t d : dims) out << ",x" << d;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out << i;
    const Vec p = grid.point(i);
    for (Eigen::Index d = 0; d < p.size(); ++d) out << ',' << p[d];
    out << '\n';
  }
}

struct Summary {
  bool solved = false;
  double wall_s = 0.0;
  double cost = std::numeric_limits<double>::quiet_NaN();
  int exit_code = kExitOk;
  std::string status;
};

void write_records(const fs::path& dir, const std::vector<IterationRecord>& records) {
  write_file(dir / "metrics.csv", [&](std::ostream& o) { write_metrics_csv(o, records); });
  write_file(dir / "timing.csv", [&](std::ostream& o) { write_timing_csv(o, records); });
  write_file(dir / "diagnostics.csv", [&](std::ostream& o) { write_diagnostics_csv(o, records); });
}

// Expected travel cost where the environment reports one, else minus the
// exact expected return.
double discrete_cost(const DiscreteBundle& b, const TabularPolicy& pi) {
  return b.step_cost.size() ? expected_step_cost(b, pi) : -expected_return(b.mdp, pi);
}

Summary run_discrete(const Loaded& L, json& meta) {
  const DiscreteBundle& b = *L.discrete;
  const fs::path& dir = L.output;
  Summary sum;
  const auto t0 = Clock::now();
  auto finish_dcrl = [&](const DcrlResult& r) {
    write_records(dir, r.records);
    write_file(dir / "final_state.csv", [&](std::ostream& o) {
      write_state_csv(o, r.density.values, b.constraint, r.sigma_plus.values, r.sigma_minus.values);
    });
    write_file(dir / "policy.csv", [&](std::ostream& o) { write_policy_csv(o, r.policy); });
    sum.cost = discrete_cost(b, r.policy);
    meta["termination"] = dcrl::to_string(r.reason);
    meta["iterations"] = r.records.size();
    meta["horizon"] = r.horizon;
    meta["tail_bound"] = tail_mass(b.mdp.gamma, r.horizon);
    meta["tol_feas_abs"] = r.tol_feas;
    meta["tol_cs_abs"] = r.tol_cs;
    meta["kkt"] = {{"feasibility_violation", r.kkt.feasibility_violation},
                   {"comp_slack_upper", r.kkt.comp_slack_upper},
                   {"comp_slack_lower", r.kkt.comp_slack_lower}};
    meta["J_exact"] = expected_return(b.mdp, r.policy);
  };

  switch (L.method) {
    case Method::dcrl: {
      const auto r = run_dcrl(b.mdp, b.constraint, L.dcrl);
      finish_dcrl(r);
      sum.solved = r.reason == Termination::kkt_satisfied;
      if (r.reason == Termination::infeasible_diagnosis) sum.exit_code = kExitInfeasible;
      sum.status = dcrl::to_string(r.reason);
      break;
    }
    case Method::unconstrained: {
      DcrlConfig cfg = L.dcrl;
      cfg.max_iterations = 1;  // sigma stays 0: the inner solver's plain policy
      const auto r = run_dcrl(b.mdp, b.constraint, cfg);
      finish_dcrl(r);
      sum.solved = r.kkt.feasibility_violation <= r.tol_feas;
      sum.status = sum.solved ? "feasible" : "infeasible_policy";
      break;
    }
    case Method::rcpo: {
      if (L.rcpo_region.empty()) throw ConfigError("config: method rcpo needs key 'rcpo.region'");
      const auto rit = b.meta.regions.find(L.rcpo_region);
      if (rit == b.meta.regions.end())
        throw ConfigError("config: unknown region '" + L.rcpo_region + "' at key 'rcpo.region'");
      const Vec cost = region_indicator(b.meta, L.rcpo_region, b.mdp.n_states);
      double eta = 0.0;
      if (L.rcpo_eta) {
        eta = *L.rcpo_eta;
      } else {
        try {
          eta = density_to_value_threshold(b.constraint, cost).eta;
        } catch (const std::invalid_argument& e) {
          throw ConfigError(std::string("config: rcpo threshold: ") + e.what());
        }
      }
      const auto rr = run_rcpo(b.mdp, cost, eta, L.dcrl);
      finish_dcrl(rr.result);
      meta["rcpo"] = {{"region", L.rcpo_region}, {"eta", eta}, {"lambda", rr.lambda}, {"cost_value", rr.cost_value}};
      // RCPO is judged on the density bounds, like every other method.
      const auto kkt = kkt_check(rr.result.density.values, b.constraint, Vec::Zero(rr.result.density.values.size()),
                                 Vec::Zero(rr.result.density.values.size()), rr.result.tol_feas, rr.result.tol_feas);
      sum.solved = rr.result.reason == Termination::kkt_satisfied && kkt.feasibility_violation <= rr.result.tol_feas;
      if (rr.result.reason == Termination::infeasible_diagnosis) sum.exit_code = kExitInfeasible;
      sum.status = dcrl::to_string(rr.result.reason);
      break;
    }
    case Method::cers: {
      const auto c = run_cers(b.mdp, b.constraint, L.cers);
      write_file(dir / "cers.csv", [&](std::ostream& o) {
        o << "solved,timeout,seconds,generations,evaluations,best_violation\n"
          << std::setprecision(17) << c.solved << ',' << c.timeout << ',' << c.seconds << ',' << c.generations << ','
          << c.evaluations << ',' << c.best_violation << '\n';
      });
      if (c.solved) {
        write_file(dir / "final_state.csv",
                   [&](std::ostream& o) { write_state_csv(o, c.density.values, b.constraint, c.sigma_plus, c.sigma_minus); });
        write_file(dir / "policy.csv", [&](std::ostream& o) { write_policy_csv(o, c.policy); });
        sum.cost = discrete_cost(b, c.policy);
        meta["J_exact"] = expected_return(b.mdp, c.policy);
      }
      sum.solved = c.solved;
      sum.status = c.solved ? "solved" : "timeout";
      meta["termination"] = sum.status;
      meta["generations"] = c.generations;
      meta["evaluations"] = c.evaluations;
      meta["best_violation"] = c.best_violation;
      break;
    }
  }
  sum.wall_s = std::chrono::duration<double>(Clock::now() - t0).count();
  return sum;
}

Summary run_continuous(const Loaded& L, json& meta) {
  const ContinuousBundle& b = *L.continuous;
  if (L.method == Method::rcpo || L.method == Method::cers)
    throw ConfigError("config: method '" + to_string(L.method) + "' at key 'method' needs a discrete environment");
  const fs::path& dir = L.output;
  const auto t0 = Clock::now();
  DcrlConfig cfg = L.dcrl;
  if (L.method == Method::unconstrained) cfg.max_iterations = 1;
  const auto& env = *b.env;
  const GaussianPolicy initial(env.state_bounds(), env.action_bounds(),
                               Vec::Constant(static_cast<Eigen::Index>(env.action_dim()), L.policy_spread));
  const auto r = run_dcrl(env, b.constraint, initial, cfg, L.kde);
  write_records(dir, r.records);
  write_file(dir / "final_state.csv", [&](std::ostream& o) {
    write_state_csv(o, r.density, b.constraint.bounds, r.sigma_plus.values, r.sigma_minus.values);
  });
  write_file(dir / "support.csv", [&](std::ostream& o) { write_support_csv(o, b.constraint.grid, b.constraint.dims); });
  write_file(dir / "policy.csv", [&](std::ostream& o) {
    o << "param,value\n" << std::setprecision(17);
    for (Eigen::Index i = 0; i < r.policy.params().size(); ++i) o << i << ',' << r.policy.params()[i] << '\n';
  });
  Summary sum;
  sum.wall_s = std::chrono::duration<double>(Clock::now() - t0).count();
  sum.cost = r.records.empty() ? sum.cost : -r.records.back().j_hat;
  if (L.method == Method::unconstrained) {
    sum.solved = r.kkt.feasibility_violation <= r.tol_feas;
    sum.status = sum.solved ? "feasible" : "infeasible_policy";
  } else {
    sum.solved = r.reason == Termination::kkt_satisfied;
    sum.status = dcrl::to_string(r.reason);
    if (r.reason == Termination::infeasible_diagnosis) sum.exit_code = kExitInfeasible;
  }
  meta["termination"] = sum.status;
  meta["iterations"] = r.records.size();
  meta["horizon"] = r.horizon;
  meta["tail_bound"] = tail_mass(env.gamma(), r.horizon);
  meta["tol_feas_abs"] = r.tol_feas;
  meta["tol_cs_abs"] = r.tol_cs;
  meta["kkt"] = {{"feasibility_violation", r.kkt.feasibility_violation},
                 {"comp_slack_upper", r.kkt.comp_slack_upper},
                 {"comp_slack_lower", r.kkt.comp_slack_lower}};
  return sum;
}

Summary execute(const Loaded& L) {
  fs::create_directories(L.output);
  json meta = {{"version", kVersion},
               {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                             std::to_string(EIGEN_MINOR_VERSION)},
               {"method", to_string(L.method)},
               {"seed", L.dcrl.seed},
               {"config", L.resolved}};
  Summary sum = L.discrete ? run_discrete(L, meta) : run_continuous(L, meta);
  meta["solved"] = sum.solved;
  meta["cost"] = std::isfinite(sum.cost) ? json(sum.cost) : json(nullptr);
  meta["wall_s"] = sum.wall_s;
  write_file(L.output / "run_meta.json", [&](std::ostream& o) { o << meta.dump(2) << '\n'; });
  return sum;
}

// ---------------------------------------------------------------------------
// Commands

struct CommonOptions {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
};

Loaded load_file(const CommonOptions& o) {
  const fs::path path = o.config;
  return load(read_json_file(path), path.parent_path(), o.seed, o.out);
}

std::string format_cost(double c) {
  if (!std::isfinite(c)) return "";
  std::ostringstream s;
  s << std::setprecision(10) << c;
  return s.str();
}

int cmd_run(const CommonOptions& o, std::ostream& out) {
  const Loaded L = load_file(o);
  const Summary s = execute(L);
  out << "method=" << to_string(L.method) << " status=" << s.status << " solved=" << (s.solved ? "true" : "false")
      << " cost=" << format_cost(s.cost) << " wall_s=" << std::fixed << std::setprecision(3) << s.wall_s
      << " out=" << L.output.string() << '\n';
  return s.exit_code;
}

int cmd_oracle(const CommonOptions& o, std::ostream& out, std::ostream& err) {
  const Loaded L = load_file(o);
  if (!L.discrete) throw ConfigError("config: the oracle needs a discrete environment");
  const DiscreteBundle& b = *L.discrete;
  if (b.mdp.n_states > L.oracle_max_states) {
    err << "oracle restricted to small instances: " << b.mdp.n_states << " states exceeds oracle.max_states = "
        << L.oracle_max_states << '\n';
    return kExitConfig;
  }
  fs::create_directories(L.output);
  const OccupancyLp lp = build_occupancy_lp(b.mdp, b.constraint);
  write_file(L.output / "occupancy.lp", [&](std::ostream& f) { write_occupancy_lp(f, lp); });
  const LpSolution sol = solve_lp(lp);
  json report = {{"status", to_string(sol.status)}, {"n_states", b.mdp.n_states}, {"n_actions", b.mdp.n_actions}};
  if (sol.status == LpStatus::optimal) {
    const DualityReport d = duality_check(b.mdp, b.constraint);
    report["J_d_star"] = d.lp_objective;
    report["policy_return"] = d.policy_return;
    report["duality_gap"] = d.objective_gap;
    report["relative_gap"] = d.objective_gap / std::max(1e-12, std::abs(d.lp_objective));
    report["adjusted_optimum"] = d.adjusted_optimum;
    report["dual_value"] = d.dual_value;
    report["bound_violation"] = d.bound_violation;
    report["slackness_residual"] = d.slackness_residual;
    report["lp_slackness_residual"] = sol.slackness_residual;
    report["flow_residual"] = sol.flow_residual;
    report["passed"] = d.passed;
    report["message"] = d.message;
    write_file(L.output / "oracle_state.csv",
               [&](std::ostream& f) { write_state_csv(f, sol.rho, b.constraint, sol.sigma_plus, sol.sigma_minus); });
    write_file(L.output / "oracle_policy.csv", [&](std::ostream& f) { write_policy_csv(f, d.policy); });
  }
  write_file(L.output / "oracle_report.json", [&](std::ostream& f) { f << report.dump(2) << '\n'; });
  out << "oracle status=" << report["status"].get<std::string>();
  if (report.contains("duality_gap"))
    out << " J_d*=" << std::setprecision(10) << report["J_d_star"].get<double>()
        << " gap=" << report["duality_gap"].get<double>() << " passed=" << (report["passed"].get<bool>() ? "true" : "false");
  out << '\n';
  return kExitOk;
}

int cmd_convert(const CommonOptions& o, std::ostream& out) {
  const Loaded L = load_file(o);
  if (L.convert_region.empty()) throw ConfigError("config: convert needs key 'convert.region'");
  const EnvMetadata& meta = L.discrete ? L.discrete->meta : L.continuous->meta;
  const DensityConstraint& c = L.discrete ? L.discrete->constraint : L.continuous->constraint.bounds;
  if (!meta.regions.count(L.convert_region))
    throw ConfigError("config: unknown region '" + L.convert_region + "' at key 'convert.region'");
  const Vec cost = region_indicator(meta, L.convert_region, c.size());
  ThresholdConversion t;
  try {
    t = density_to_value_threshold(c, cost);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("convert: ") + e.what());
  }
  out << std::setprecision(17) << "eta=" << t.eta << '\n' << "state,contribution\n";
  for (const auto& [s, v] : t.contributions) out << s << ',' << v << '\n';
  return kExitOk;
}

void set_dotted(json& j, const std::string& dotted, const json& value) {
  json* at = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted.find('.', start);
    const std::string part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("config: bad sweep key '" + dotted + "'");
    if (dot == std::string::npos) {
      (*at)[part] = value;
      return;
    }
    if (!at->contains(part)) (*at)[part] = json::object();
    at = &(*at)[part];
    if (!at->is_object()) throw ConfigError("config: sweep key '" + dotted + "' crosses a non-object");
    start = dot + 1;
  }
}

// "a|b" links keys a and b into one axis whose values are [a, b] pairs.
std::vector<std::string> linked_keys(const std::string& axis) {
  std::vector<std::string> keys;
  std::size_t start = 0;
  while (true) {
    const auto bar = axis.find('|', start);
    keys.push_back(axis.substr(start, bar == std::string::npos ? std::string::npos : bar - start));
    if (bar == std::string::npos) return keys;
    start = bar + 1;
  }
}

std::string csv_quote(const std::string& s) {
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

int cmd_sweep(const CommonOptions& o, std::ostream& out, std::ostream& err) {
  const fs::path path = o.config;
  json root = read_json_file(path);
  if (!root.is_object() || !root.contains("sweep")) throw ConfigError("config: sweep needs key 'sweep'");
  json sweep = root["sweep"];
  root.erase("sweep");
  if (!sweep.is_object() || !sweep.contains("grid") || !sweep["grid"].is_object())
    throw ConfigError("config: sweep needs an object at key 'sweep.grid'");
  for (auto it = sweep.begin(); it != sweep.end(); ++it)
    if (it.key() != "grid") throw ConfigError("config: unknown key 'sweep." + it.key() + "'");
  std::vector<std::pair<std::string, json>> axes;
  std::size_t cells = 1;
  for (auto it = sweep["grid"].begin(); it != sweep["grid"].end(); ++it) {
    if (!it.value().is_array() || it.value().empty())
      throw ConfigError("config: 'sweep.grid." + it.key() + "' must be a nonempty array");
    const auto keys = linked_keys(it.key());
    if (keys.size() > 1)
      for (const auto& v : it.value())
        if (!v.is_array() || v.size() != keys.size())
          throw ConfigError("config: each value of 'sweep.grid." + it.key() + "' must be an array of " +
                            std::to_string(keys.size()) + " entries");
    axes.emplace_back(it.key(), it.value());
    cells *= it.value().size();
    if (cells > kMaxSweepCells) break;
  }
  if (cells > kMaxSweepCells) {
    err << "sweep grid exceeds " << kMaxSweepCells << " cells\n";
    return kExitConfig;
  }
  std::string out_name = o.out ? *o.out : root.value("output", std::string());
  if (out_name.empty()) out_name = "runs/sweep";
  const fs::path out_dir = out_name;

  // Resolve every cell before running any, so config errors fail fast.
  std::vector<Loaded> loaded;
  std::vector<json> assignment;
  for (std::size_t cell = 0; cell < cells; ++cell) {
    json cfg = root;
    json params = json::object();
    std::size_t code = cell;
    for (auto a = axes.rbegin(); a != axes.rend(); ++a) {
      const json& v = a->second[code % a->second.size()];
      code /= a->second.size();
      const auto keys = linked_keys(a->first);
      for (std::size_t k = 0; k < keys.size(); ++k) {
        const json& part = keys.size() == 1 ? v : v.at(k);
        set_dotted(cfg, keys[k], part);
        if (keys[k] != "method") params[keys[k]] = part;
      }
    }
    json ordered = json::object();
    for (const auto& a : axes)
      for (const auto& k : linked_keys(a.first))
        if (params.contains(k)) ordered[k] = params[k];
    std::ostringstream name;
    name << "cell_" << std::setw(4) << std::setfill('0') << cell;
    loaded.push_back(load(cfg, path.parent_path(), o.seed, (out_dir / name.str()).string()));
    assignment.push_back(ordered);
  }

  std::vector<Summary> results(cells);
  std::vector<std::string> errors(cells);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < cells;) {
      try {
        results[i] = execute(loaded[i]);
      } catch (const std::exception& e) {
        errors[i] = e.what();
        results[i].status = "error";
        results[i].exit_code = kExitConfig;
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(o.workers, cells));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  fs::create_directories(out_dir);
  int code = kExitOk;
  write_file(out_dir / "sweep.csv", [&](std::ostream& f) {
    f << "cell,method,params,solved,wall_s,cost,status\n";
    for (std::size_t i = 0; i < cells; ++i) {
      const Summary& s = results[i];
      f << i << ',' << to_string(loaded[i].method) << ',' << csv_quote(assignment[i].dump()) << ','
        << (s.solved ? "true" : "false") << ',' << std::fixed << std::setprecision(3) << s.wall_s << ','
        << std::defaultfloat << format_cost(s.cost) << ',' << s.status << '\n';
    }
  });
  for (std::size_t i = 0; i < cells; ++i)
    if (!errors[i].empty()) {
      err << "cell " << i << ": " << errors[i] << '\n';
      code = kExitConfig;
    }
  out << "sweep cells=" << cells << " out=" << (out_dir / "sweep.csv").string() << '\n';
  return code;
}

}  // namespace

int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Density constrained reinforcement learning experiments"};
  app.require_subcommand(1);
  CommonOptions opts;
  std::uint64_t seed = 0;
  std::string outdir;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config, "JSON run configuration")->required();
    sub->add_option("--out", outdir, "output directory (overrides config 'output')");
    sub->add_option("--seed", seed, "root seed (overrides config 'seed')");
  };
  CLI::App* run = app.add_subcommand("run", "run one method on one environment");
  CLI::App* oracle = app.add_subcommand("oracle", "solve the occupancy LP and check duality");
  CLI::App* convert = app.add_subcommand("convert", "convert a regional density cap to a value threshold");
  CLI::App* sweep = app.add_subcommand("sweep", "run a parameter grid");
  for (CLI::App* sub : {run, oracle, convert, sweep}) add_common(sub);
  sweep->add_option("--workers", opts.workers, "parallel sweep cells")->check(CLI::PositiveNumber);

  std::vector<const char*> argv{"dcrl"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kExitConfig;
  }
  CLI::App* active = app.get_subcommands().front();
  if (active->count("--out")) opts.out = outdir;
  if (active->count("--seed")) opts.seed = seed;

  try {
    if (active == run) return cmd_run(opts, out);
    if (active == oracle) return cmd_oracle(opts, out, err);
    if (active == convert) return cmd_convert(opts, out);
    return cmd_sweep(opts, out, err);
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace dcrl::cli
