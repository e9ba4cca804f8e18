#include "dcrl/density.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "dcrl/rng.hpp"

namespace dcrl {

namespace {

double unit_ball_volume(std::size_t d) {
  const double half = static_cast<double>(d) / 2.0;
  return std::pow(std::numbers::pi, half) / std::tgamma(half + 1.0);
}

void check_bandwidth(const Vec& h) {
  if (h.size() == 0) throw std::invalid_argument("kernel bandwidth is empty");
  for (Eigen::Index i = 0; i < h.size(); ++i)
    if (!(h[i] > 0.0)) throw std::invalid_argument("kernel bandwidth must be positive");
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

KernelKind parse_kernel_kind(const std::string& name) {
  if (name == "gaussian") return KernelKind::gaussian;
  if (name == "epanechnikov") return KernelKind::epanechnikov;
  if (name == "spheric") return KernelKind::spheric;
  throw std::invalid_argument("unknown kernel '" + name + "'");
}

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::gaussian: return "gaussian";
    case KernelKind::epanechnikov: return "epanechnikov";
    case KernelKind::spheric: return "spheric";
  }
  return "gaussian";
}

double kernel_value(const KernelSpec& spec, const Vec& offset) {
  const Vec& h = spec.bandwidth;
  if (offset.size() != h.size()) throw std::invalid_argument("kernel_value: dimension mismatch");
  if (!(h.array() > 0.0).all()) throw std::invalid_argument("kernel_value: bandwidth must be positive");
  switch (spec.kind) {
    case KernelKind::gaussian: {
      double q = 0.0, norm = 1.0;
      for (Eigen::Index i = 0; i < h.size(); ++i) {
        const double u = offset[i] / h[i];
        q += u * u;
        norm *= h[i] * std::sqrt(2.0 * std::numbers::pi);
      }
      return std::exp(-0.5 * q) / norm;
    }
    case KernelKind::epanechnikov: {
      double v = 1.0;
      for (Eigen::Index i = 0; i < h.size(); ++i) {
        const double u = offset[i] / h[i];
        if (std::abs(u) >= 1.0) return 0.0;
        v *= 0.75 * (1.0 - u * u) / h[i];
      }
      return v;
    }
    case KernelKind::spheric: {
      double q = 0.0, vol = unit_ball_volume(static_cast<std::size_t>(h.size()));
      for (Eigen::Index i = 0; i < h.size(); ++i) {
        const double u = offset[i] / h[i];
        q += u * u;
        vol *= h[i];
      }
      return q <= 1.0 ? 1.0 / vol : 0.0;
    }
  }
  return 0.0;
}

KernelDensity::KernelDensity(KernelSpec spec, std::vector<Vec> samples, std::vector<double> weights)
    : spec_(std::move(spec)), samples_(std::move(samples)), weights_(std::move(weights)) {
  check_bandwidth(spec_.bandwidth);
  if (samples_.size() != weights_.size()) throw std::invalid_argument("KernelDensity: samples/weights size mismatch");
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (samples_[i].size() != spec_.bandwidth.size())
      throw std::invalid_argument("KernelDensity: sample dimension mismatch");
    if (!(weights_[i] >= 0.0)) throw std::invalid_argument("KernelDensity: negative weight");
  }
}

double KernelDensity::eval(const Vec& x) const {
  if (x.size() != spec_.bandwidth.size()) throw std::invalid_argument("KernelDensity::eval: dimension mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < samples_.size(); ++i) total += weights_[i] * kernel_value(spec_, x - samples_[i]);
  return total;
}

double KernelDensity::sample_mass() const {
  double total = 0.0;
  for (double w : weights_) total += w;
  return total;
}

TabularDensity tabular_density(const DiscreteBuffer& buffer, double gamma, std::size_t n_states) {
  if (buffer.empty()) throw std::invalid_argument("tabular_density: empty buffer");
  TabularDensity out{Vec::Zero(static_cast<Eigen::Index>(n_states))};
  const double inv_n = 1.0 / static_cast<double>(buffer.size());
  for (const auto& ep : buffer.episodes) {
    double w = inv_n;
    for (std::size_t j = 0; j <= ep.length(); ++j) {
      const int s = ep.state_at(j);
      if (s < 0 || static_cast<std::size_t>(s) >= n_states)
        throw std::invalid_argument("tabular_density: state id out of range");
      out.values[s] += w;
      w *= gamma;
    }
  }
  return out;
}

Vec scott_bandwidth(const std::vector<Vec>& samples) {
  if (samples.empty()) throw std::invalid_argument("scott_bandwidth: no samples");
  const auto d = samples.front().size();
  const double m = static_cast<double>(samples.size());
  Vec mean = Vec::Zero(d);
  for (const auto& x : samples) mean += x;
  mean /= m;
  Vec var = Vec::Zero(d);
  for (const auto& x : samples) var += (x - mean).cwiseAbs2();
  var /= std::max(1.0, m - 1.0);
  const double factor = std::pow(m, -1.0 / (static_cast<double>(d) + 4.0));
  Vec h(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double sd = std::sqrt(var[i]);
    h[i] = (sd > 1e-12 ? sd : 1e-3) * factor;
  }
  return h;
}

KernelDensity kde_density(const ContinuousBuffer& buffer, double gamma, const KdeOptions& options) {
  if (buffer.empty()) throw std::invalid_argument("kde_density: empty buffer");
  const double inv_n = 1.0 / static_cast<double>(buffer.size());
  std::vector<Vec> samples;
  std::vector<double> weights;
  for (const auto& ep : buffer.episodes) {
    double w = inv_n;
    for (std::size_t j = 0; j <= ep.length(); ++j) {
      const Vec& s = ep.state_at(j);
      if (options.dims.empty()) {
        samples.push_back(s);
      } else {
        Vec p(static_cast<Eigen::Index>(options.dims.size()));
        for (std::size_t k = 0; k < options.dims.size(); ++k) {
          if (options.dims[k] >= static_cast<std::size_t>(s.size()))
            throw std::invalid_argument("kde_density: projection dimension out of range");
          p[static_cast<Eigen::Index>(k)] = s[static_cast<Eigen::Index>(options.dims[k])];
        }
        samples.push_back(std::move(p));
      }
      weights.push_back(w);
      w *= gamma;
    }
  }

  if (options.max_samples > 0 && samples.size() > options.max_samples) {
    // Uniform thinning without replacement; weights rescaled to keep total mass.
    const double before = [&] {
      double t = 0.0;
      for (double w : weights) t += w;
      return t;
    }();
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(options.thinning_seed);
    for (std::size_t i = 0; i < options.max_samples; ++i) std::swap(order[i], order[i + rng.index(order.size() - i)]);
    order.resize(options.max_samples);
    std::sort(order.begin(), order.end());
    std::vector<Vec> kept;
    std::vector<double> kept_w;
    double after = 0.0;
    for (std::size_t i : order) {
      kept.push_back(samples[i]);
      kept_w.push_back(weights[i]);
      after += weights[i];
    }
    if (after > 0.0)
      for (double& w : kept_w) w *= before / after;
    samples = std::move(kept);
    weights = std::move(kept_w);
  }

  KernelSpec spec{options.kind, options.bandwidth};
  if (spec.bandwidth.size() == 0) spec.bandwidth = scott_bandwidth(samples);
  check_bandwidth(spec.bandwidth);
  return KernelDensity(std::move(spec), std::move(samples), std::move(weights));
}

double eval_density(const TabularDensity& field, std::size_t state) {
  if (state >= field.size()) throw std::invalid_argument("eval_density: state id out of range");
  return field.values[static_cast<Eigen::Index>(state)];
}

double eval_density(const KernelDensity& field, const Vec& state) { return field.eval(state); }

Vec smooth(const Vec& previous, const Vec& current, double beta) {
  if (beta < 0.0 || beta >= 1.0) throw std::invalid_argument("smooth: beta must be in [0, 1)");
  if (previous.size() == 0) return current;
  if (previous.size() != current.size()) throw std::invalid_argument("smooth: size mismatch");
  return beta * previous + (1.0 - beta) * current;
}

void write_density_csv(std::ostream& out, const TabularDensity& field) {
  out << "state_id,density\n" << std::setprecision(17);
  for (Eigen::Index s = 0; s < field.values.size(); ++s) out << s << ',' << field.values[s] << '\n';
}

TabularDensity read_density_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "state_id,density")
    throw std::invalid_argument("read_density_csv: missing header");
  std::vector<std::pair<std::size_t, double>> rows;
  std::size_t max_id = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 2) throw std::invalid_argument("read_density_csv: expected 2 columns");
    const std::size_t id = std::stoul(cells[0]);
    rows.emplace_back(id, std::stod(cells[1]));
    max_id = std::max(max_id, id);
  }
  TabularDensity out{Vec::Zero(rows.empty() ? 0 : static_cast<Eigen::Index>(max_id + 1))};
  for (const auto& [id, v] : rows) out.values[static_cast<Eigen::Index>(id)] = v;
  return out;
}

void write_kernel_samples(std::ostream& out, const KernelDensity& field) {
  out << std::setprecision(17);
  out << "# kernel " << to_string(field.spec().kind) << " bandwidth";
  for (Eigen::Index i = 0; i < field.spec().bandwidth.size(); ++i) out << ' ' << field.spec().bandwidth[i];
  out << '\n';
  for (std::size_t d = 0; d < field.dim(); ++d) out << 'x' << d << ',';
  out << "weight\n";
  for (std::size_t i = 0; i < field.samples().size(); ++i) {
    for (Eigen::Index d = 0; d < field.samples()[i].size(); ++d) out << field.samples()[i][d] << ',';
    out << field.weights()[i] << '\n';
  }
}

KernelDensity read_kernel_samples(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("read_kernel_samples: empty input");
  std::istringstream hs(line);
  std::string hash, word, kind, bw;
  hs >> hash >> word >> kind >> bw;
  if (hash != "#" || word != "kernel" || bw != "bandwidth")
    throw std::invalid_argument("read_kernel_samples: bad kernel header");
  std::vector<double> h;
  double v;
  while (hs >> v) h.push_back(v);
  KernelSpec spec{parse_kernel_kind(kind), Eigen::Map<Vec>(h.data(), static_cast<Eigen::Index>(h.size()))};
  if (!std::getline(in, line)) throw std::invalid_argument("read_kernel_samples: missing column header");
  std::vector<Vec> samples;
  std::vector<double> weights;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != h.size() + 1) throw std::invalid_argument("read_kernel_samples: wrong column count");
    Vec x(static_cast<Eigen::Index>(h.size()));
    for (std::size_t d = 0; d < h.size(); ++d) x[static_cast<Eigen::Index>(d)] = std::stod(cells[d]);
    samples.push_back(std::move(x));
    weights.push_back(std::stod(cells.back()));
  }
  return KernelDensity(std::move(spec), std::move(samples), std::move(weights));
}

}  // namespace dcrl
