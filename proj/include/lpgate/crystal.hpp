#pragma once

#include <array>
#include <optional>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace lpgate {

struct IonSpecies {
  double mass_amu = 171.0;
  int charge = 1;

  double mass_kg() const;
  // k_c (Z e)^2, the Coulomb strength between two ions of this species.
  double coulomb_strength() const;
  void validate() const;
};

// Linear Paul-trap chain driven on its transverse local modes.
struct Chain1D {
  int ions = 2;
  double axial_freq = 0.0;       // rad/s
  double transverse_freq = 0.0;  // rad/s
};

// Idealised uniform lattice: every ion has the same local frequency and the
// nearest-neighbour spacing is `spacing`. Used for large 1D/2D crystals where
// only d, n_c and omega enter the gate model.
struct UniformLattice {
  double spacing = 0.0;      // m
  double coordination = 2.0;
  double local_freq = 0.0;   // rad/s
};

struct CrystalConfig {
  IonSpecies species;
  std::variant<Chain1D, UniformLattice> geometry;
  // Indices of the two gate ions; for a chain, defaults to the central pair.
  std::optional<std::array<int, 2>> targets;
  // Coordination number override for chains (n_c); lattices carry their own.
  std::optional<double> coordination;

  void validate() const;
};

struct InteractionRate {
  double omega_I = 0.0;  // rad/s
  double t_p = 0.0;      // s
  double v_p = 0.0;      // m/s
};

struct CrystalModel {
  IonSpecies species;
  std::vector<double> positions;    // m (along the chain; lattice: 1D cut)
  std::vector<double> local_freqs;  // rad/s
  Eigen::MatrixXd coupling;         // omega^2_{mu mu'} in rad^2/s^2, zero diagonal
  std::array<int, 2> targets{0, 1};
  double spacing = 0.0;             // nearest-neighbour distance of the target pair
  double drive_freq = 0.0;          // local frequency of the target ions
  double coordination = 2.0;        // n_c
  InteractionRate rate;
  bool is_lattice = false;
};

struct EquilibriumOptions {
  // Residual force tolerance, relative to the characteristic force k_c e^2 / l^2.
  double force_tolerance = 1e-12;
  int max_iterations = 200;
};

// Equilibrium axial positions of a Chain1D (m), ascending.
std::vector<double> equilibrium_positions(const CrystalConfig& config,
                                          const EquilibriumOptions& options = {});

// omega_mu for transverse motion of a linear chain.
std::vector<double> local_frequencies(const std::vector<double>& positions,
                                      const IonSpecies& species, double transverse_freq);

// omega^2_{mu mu'} = k_c e^2 / (m |x_mu - x_mu'|^3) for transverse displacements.
Eigen::MatrixXd coupling_matrix(const std::vector<double>& positions, const IonSpecies& species);

InteractionRate interaction_rate(double spacing, double local_freq, const IonSpecies& species);
InteractionRate interaction_rate(const CrystalModel& model);

// Lattice spacing that yields the requested interaction rate at `local_freq`.
double spacing_for_interaction_rate(double omega_I, double local_freq, const IonSpecies& species);

CrystalModel build_crystal(const CrystalConfig& config, const EquilibriumOptions& options = {});

// Maximum per-ion force imbalance (N) of a chain configuration.
double max_force_residual(const std::vector<double>& positions, const IonSpecies& species,
                          double axial_freq);

}  // namespace lpgate
