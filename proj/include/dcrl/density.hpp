#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dcrl/experience.hpp"
#include "dcrl/mdp.hpp"

namespace dcrl {

/// Discounted visitation density over state ids.
struct TabularDensity {
  Vec values;

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
  double total_mass() const { return values.sum(); }
};

enum class KernelKind { gaussian, epanechnikov, spheric };

KernelKind parse_kernel_kind(const std::string& name);
std::string to_string(KernelKind kind);

struct KernelSpec {
  KernelKind kind = KernelKind::gaussian;
  Vec bandwidth;  // one entry per dimension, all > 0
};

/// K_h(offset) for the product Gaussian / product Epanechnikov kernels, or the
/// uniform density on the ellipsoid {sum (x_d / h_d)^2 <= 1} for spheric.
double kernel_value(const KernelSpec& spec, const Vec& offset);

/// Weighted sample set evaluated as rho(x) = sum_i w_i K_h(x - x_i).
class KernelDensity {
 public:
  KernelDensity(KernelSpec spec, std::vector<Vec> samples, std::vector<double> weights);

  double eval(const Vec& x) const;
  const KernelSpec& spec() const { return spec_; }
  const std::vector<Vec>& samples() const { return samples_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t dim() const { return static_cast<std::size_t>(spec_.bandwidth.size()); }
  double sample_mass() const;

 private:
  KernelSpec spec_;
  std::vector<Vec> samples_;
  std::vector<double> weights_;
};

/// rho(s) = (1/N) sum_i sum_{j=0}^{T_i} gamma^j 1[s_ij = s], where s_i0 is the
/// episode start and s_iT_i its final state.
TabularDensity tabular_density(const DiscreteBuffer& buffer, double gamma, std::size_t n_states);

struct KdeOptions {
  KernelKind kind = KernelKind::gaussian;
  Vec bandwidth;                   // empty: Scott's rule
  std::vector<std::size_t> dims;   // project onto these state components; empty: all
  std::size_t max_samples = 0;     // 0: keep every sample
  std::uint64_t thinning_seed = 0;
};

/// Per-dimension Scott bandwidth sigma_d * M^(-1/(d+4)).
Vec scott_bandwidth(const std::vector<Vec>& samples);

KernelDensity kde_density(const ContinuousBuffer& buffer, double gamma, const KdeOptions& options = {});

double eval_density(const TabularDensity& field, std::size_t state);
double eval_density(const KernelDensity& field, const Vec& state);

/// (1/N) sum_i sum_{j=0}^{T_i} gamma^j, the mass every estimator must carry.
template <typename State, typename Action>
double discounted_mass(const ExperienceBuffer<State, Action>& buffer, double gamma) {
  if (buffer.empty()) throw std::invalid_argument("discounted_mass: empty buffer");
  double total = 0.0;
  for (const auto& ep : buffer.episodes) {
    double w = 1.0;
    for (std::size_t j = 0; j <= ep.length(); ++j) {
      total += w;
      w *= gamma;
    }
  }
  return total / static_cast<double>(buffer.size());
}

/// Exponential moving average: beta * previous + (1 - beta) * current.
Vec smooth(const Vec& previous, const Vec& current, double beta);

void write_density_csv(std::ostream& out, const TabularDensity& field);
TabularDensity read_density_csv(std::istream& in);
void write_kernel_samples(std::ostream& out, const KernelDensity& field);
KernelDensity read_kernel_samples(std::istream& in);

}  // namespace dcrl
