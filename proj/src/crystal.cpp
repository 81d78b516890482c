#include "lpgate/crystal.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lpgate/constants.hpp"
#include "lpgate/errors.hpp"

namespace lpgate {

double IonSpecies::mass_kg() const { return mass_amu * kAtomicMassUnit; }

double IonSpecies::coulomb_strength() const {
  const double q = charge * kElementaryCharge;
  return kCoulombConstant * q * q;
}

void IonSpecies::validate() const {
  if (!(mass_amu > 0.0)) throw ConfigError("ion mass must be positive");
  if (charge < 1) throw ConfigError("ion charge must be >= 1");
}

void CrystalConfig::validate() const {
  species.validate();
  if (const auto* chain = std::get_if<Chain1D>(&geometry)) {
    if (chain->ions < 1) throw ConfigError("chain needs at least one ion");
    if (!(chain->axial_freq > 0.0)) throw ConfigError("chain axial frequency must be positive");
    if (!(chain->transverse_freq > 0.0))
      throw ConfigError("chain transverse frequency must be positive");
    if (targets) {
      const auto [a, b] = *targets;
      if (a < 0 || b < 0 || a >= chain->ions || b >= chain->ions || a == b)
        throw ConfigError("gate targets must be two distinct ions of the chain");
    }
  } else {
    const auto& lat = std::get<UniformLattice>(geometry);
    if (!(lat.spacing > 0.0)) throw ConfigError("lattice spacing must be positive");
    if (!(lat.coordination > 0.0)) throw ConfigError("lattice coordination number must be positive");
    if (!(lat.local_freq > 0.0)) throw ConfigError("lattice local frequency must be positive");
  }
  if (coordination && !(*coordination > 0.0))
    throw ConfigError("coordination number must be positive");
}

namespace {

// Gradient of the dimensionless chain potential sum u^2/2 + sum_{i<j} 1/|u_i-u_j|.
Eigen::VectorXd chain_gradient(const Eigen::VectorXd& u) {
  const auto n = u.size();
  Eigen::VectorXd g = u;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double r = u(i) - u(j);
      g(i) -= (r > 0 ? 1.0 : -1.0) / (r * r);
    }
  return g;
}

Eigen::MatrixXd chain_hessian(const Eigen::VectorXd& u) {
  const auto n = u.size();
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double c = 2.0 / std::pow(std::abs(u(i) - u(j)), 3);
      h(i, i) += c;
      h(i, j) -= c;
    }
  return h;
}

bool strictly_ordered(const Eigen::VectorXd& u) {
  for (Eigen::Index i = 1; i < u.size(); ++i)
    if (!(u(i) > u(i - 1))) return false;
  return true;
}

}  // namespace

std::vector<double> equilibrium_positions(const CrystalConfig& config,
                                          const EquilibriumOptions& options) {
  config.validate();
  const auto* chain = std::get_if<Chain1D>(&config.geometry);
  if (chain == nullptr) throw ConfigError("equilibrium positions are only solved for Chain1D");

  const int n = chain->ions;
  const double m = config.species.mass_kg();
  const double length =
      std::cbrt(config.species.coulomb_strength() / (m * chain->axial_freq * chain->axial_freq));

  Eigen::VectorXd u(n);
  const double guess_spacing = n > 1 ? 2.018 / std::pow(n, 0.559) : 0.0;
  for (int i = 0; i < n; ++i) u(i) = (i - 0.5 * (n - 1)) * guess_spacing;

  Eigen::VectorXd g = chain_gradient(u);
  int iter = 0;
  while (g.lpNorm<Eigen::Infinity>() >= options.force_tolerance) {
    if (++iter > options.max_iterations) {
      std::ostringstream msg;
      msg << "chain equilibrium did not converge after " << options.max_iterations
          << " Newton iterations; residual force " << g.lpNorm<Eigen::Infinity>()
          << " k_c e^2/l^2";
      throw NumericalError(msg.str());
    }
    const Eigen::VectorXd step = chain_hessian(u).ldlt().solve(-g);
    double lambda = 1.0;
    Eigen::VectorXd trial = u + step;
    Eigen::VectorXd trial_g;
    for (int k = 0; k < 40; ++k, lambda *= 0.5, trial = u + lambda * step) {
      if (!strictly_ordered(trial)) continue;
      trial_g = chain_gradient(trial);
      if (trial_g.norm() < g.norm() || trial_g.lpNorm<Eigen::Infinity>() < options.force_tolerance)
        break;
    }
    if (trial_g.size() == 0) trial_g = chain_gradient(trial);
    u = trial;
    g = trial_g;
  }
  // Symmetrise: the exact solution is antisymmetric about the trap centre.
  Eigen::VectorXd sym = 0.5 * (u - u.reverse());
  if (chain_gradient(sym).lpNorm<Eigen::Infinity>() <= g.lpNorm<Eigen::Infinity>()) u = sym;

  std::vector<double> positions(n);
  for (int i = 0; i < n; ++i) positions[i] = u(i) * length;
  return positions;
}

double max_force_residual(const std::vector<double>& positions, const IonSpecies& species,
                          double axial_freq) {
  const double m = species.mass_kg();
  const double k = species.coulomb_strength();
  double worst = 0.0;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    double f = -m * axial_freq * axial_freq * positions[i];
    for (std::size_t j = 0; j < positions.size(); ++j) {
      if (i == j) continue;
      const double r = positions[i] - positions[j];
      f += (r > 0 ? 1.0 : -1.0) * k / (r * r);
    }
    worst = std::max(worst, std::abs(f));
  }
  return worst;
}

std::vector<double> local_frequencies(const std::vector<double>& positions,
                                      const IonSpecies& species, double transverse_freq) {
  const double m = species.mass_kg();
  const double k = species.coulomb_strength();
  std::vector<double> freqs(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    double w2 = transverse_freq * transverse_freq;
    for (std::size_t j = 0; j < positions.size(); ++j) {
      if (i == j) continue;
      const double r = std::abs(positions[i] - positions[j]);
      if (r == 0.0) throw ConfigError("coincident ion positions");
      w2 -= k / (m * r * r * r);
    }
    if (!(w2 > 0.0)) {
      std::ostringstream msg;
      msg << "crystal unstable for the chosen transverse frequency: local omega^2 <= 0 at ion "
          << i;
      throw ConfigError(msg.str());
    }
    freqs[i] = std::sqrt(w2);
  }
  return freqs;
}

Eigen::MatrixXd coupling_matrix(const std::vector<double>& positions, const IonSpecies& species) {
  const auto n = static_cast<Eigen::Index>(positions.size());
  const double m = species.mass_kg();
  const double k = species.coulomb_strength();
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double r = std::abs(positions[i] - positions[j]);
      if (r == 0.0) throw ConfigError("coincident ion positions");
      c(i, j) = c(j, i) = k / (m * r * r * r);
    }
  return c;
}

InteractionRate interaction_rate(double spacing, double local_freq, const IonSpecies& species) {
  if (!(spacing > 0.0) || !(local_freq > 0.0))
    throw ConfigError("interaction rate needs positive spacing and local frequency");
  const double m = species.mass_kg();
  const double k = species.coulomb_strength();
  InteractionRate rate;
  rate.t_p = std::sqrt(m * spacing * spacing * spacing / k);
  rate.v_p = std::sqrt(k / (m * spacing));
  rate.omega_I = 1.0 / (local_freq * rate.t_p * rate.t_p);
  return rate;
}

InteractionRate interaction_rate(const CrystalModel& model) {
  return interaction_rate(model.spacing, model.drive_freq, model.species);
}

double spacing_for_interaction_rate(double omega_I, double local_freq, const IonSpecies& species) {
  if (!(omega_I > 0.0) || !(local_freq > 0.0))
    throw ConfigError("interaction rate and local frequency must be positive");
  return std::cbrt(species.coulomb_strength() / (species.mass_kg() * local_freq * omega_I));
}

CrystalModel build_crystal(const CrystalConfig& config, const EquilibriumOptions& options) {
  config.validate();
  CrystalModel model;
  model.species = config.species;

  if (const auto* chain = std::get_if<Chain1D>(&config.geometry)) {
    model.positions = equilibrium_positions(config, options);
    model.local_freqs = local_frequencies(model.positions, config.species, chain->transverse_freq);
    model.coupling = coupling_matrix(model.positions, config.species);
    if (chain->ions < 2 && !config.targets) {
      model.targets = {0, 0};
    } else if (config.targets) {
      model.targets = *config.targets;
    } else {
      const int right = chain->ions / 2;
      model.targets = {right - 1, right};
    }
    model.coordination = config.coordination.value_or(2.0);
    if (chain->ions >= 2) {
      const auto [a, b] = model.targets;
      model.spacing = std::abs(model.positions[a] - model.positions[b]);
      model.drive_freq = 0.5 * (model.local_freqs[a] + model.local_freqs[b]);
      model.rate = interaction_rate(model.spacing, model.drive_freq, model.species);
    } else {
      model.drive_freq = model.local_freqs[0];
    }
  } else {
    const auto& lat = std::get<UniformLattice>(config.geometry);
    model.is_lattice = true;
    // Two gate ions plus one in-line neighbour, enough for the exact simulator.
    model.positions = {0.0, lat.spacing, 2.0 * lat.spacing};
    model.local_freqs.assign(3, lat.local_freq);
    model.coupling = coupling_matrix(model.positions, config.species);
    model.targets = {0, 1};
    model.spacing = lat.spacing;
    model.drive_freq = lat.local_freq;
    model.coordination = config.coordination.value_or(lat.coordination);
    model.rate = interaction_rate(lat.spacing, lat.local_freq, config.species);
  }
  return model;
}

}  // namespace lpgate
