#pragma once

#include <array>
#include <complex>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "lpgate/crystal.hpp"
#include "lpgate/sequence.hpp"

namespace lpgate {

// omega_I tau (eta |Omega| tau)^2 (2 n_c omega_I tau)^7 (2 nbar + 1), times `blocks`.
double analytic_infidelity(const DriveParams& params, double omega_I, double n_c, double nbar,
                           int blocks);
// (pi^2 / 2) eta^4 (nbar + 1/2)^2
double higher_order_ld_infidelity(double eta, double nbar);

struct ThermalSpec {
  double nbar = 0.0;
  double weight_cutoff = 1.0 - 1e-3;
  void validate() const;
};

struct FockConfig {
  std::vector<int> n;
  double weight = 0.0;
};

// Product Fock states in descending probability (ties in lexicographic order) until the
// cumulative weight reaches the cutoff; every level stays below `max_level`.
std::vector<FockConfig> thermal_ensemble(const ThermalSpec& thermal, int modes, int max_level);

enum class GateTarget { cpf, identity, design_phase };

struct SimConfig {
  int n_ions = 2;          // driven target ions plus an optional spectator (3)
  int fock_cutoff = 0;     // 0 selects a cutoff from the thermal ensemble
  double steps_per_period = 200.0;
  bool include_coupling = true;
  std::array<cplx, 4> spin_input{0.5, 0.5, 0.5, 0.5};  // |++>, basis order ++, +-, -+, --
  GateTarget target = GateTarget::cpf;
  double leakage_tolerance = 1e-6;
  double norm_tolerance = 1e-8;
  double convergence_tolerance = 1e-8;
  bool convergence_check = true;

  void validate() const;
};

// Local modes retained in the exact simulation.
struct SimModel {
  std::vector<double> freqs;  // omega_mu, rad/s
  Eigen::MatrixXd hopping;    // g_{mu nu} = omega^2_{mu nu} / sqrt(omega_mu omega_nu)
  std::vector<double> eta;    // per mode; driven modes are the first `driven`
  int driven = 2;
};

SimModel make_sim_model(const CrystalModel& crystal, const DriveParams& drive,
                        const SimConfig& sim);

// Piecewise-linear drive phase c(t) = slope * omega * (t - origin) + offset.
struct SchedulePiece {
  double t0 = 0.0;
  double t1 = 0.0;
  double origin = 0.0;
  int slope = 1;
  double offset = 0.0;
};

struct DriveSchedule {
  std::vector<SchedulePiece> pieces;
  double rabi = 0.0;
  double omega = 0.0;
  double duration() const { return pieces.empty() ? 0.0 : pieces.back().t1; }
  double phase(const SchedulePiece& piece, double t) const {
    return piece.slope * omega * (t - piece.origin) + piece.offset;
  }
};

DriveSchedule make_schedule(const GateDesign& design);
// A single base interval driven with `profile`.
DriveSchedule make_interval_schedule(const DriveParams& drive, const PhaseProfile& profile);

// Motional Hamiltonian of one spin branch (s_1, s_2[, spectator undriven]).
class BranchHamiltonian {
 public:
  BranchHamiltonian(const SimModel& model, const DriveSchedule& schedule, std::array<int, 2> signs,
                    int cutoff);

  const SimModel& model() const { return model_; }
  const DriveSchedule& schedule() const { return schedule_; }
  std::array<int, 2> signs() const { return signs_; }
  int cutoff() const { return cutoff_; }
  int modes() const { return static_cast<int>(model_.freqs.size()); }
  Eigen::Index dimension() const;

  // cos(eta X) and sin(eta X) for driven mode i, X = a + a^dagger.
  const Eigen::MatrixXd& cos_x(int i) const { return cos_x_[i]; }
  const Eigen::MatrixXd& sin_x(int i) const { return sin_x_[i]; }

  // Full lab-frame matrix at time t inside `piece` (small systems; tests and oracles).
  Eigen::MatrixXcd lab_matrix(const SchedulePiece& piece, double t) const;

 private:
  SimModel model_;
  DriveSchedule schedule_;
  std::array<int, 2> signs_;
  int cutoff_;
  std::vector<Eigen::MatrixXd> cos_x_, sin_x_;
};

std::array<BranchHamiltonian, 4> build_hamiltonian_branches(const SimModel& model,
                                                            const DriveSchedule& schedule,
                                                            int cutoff);

struct EvolveOptions {
  double steps_per_period = 200.0;
  double norm_tolerance = 1e-8;
  // Called after every step with t and <a_mu> of the first state column.
  std::function<void(double, const std::vector<cplx>&)> observer;
};

struct BranchEvolution {
  Eigen::MatrixXcd states;  // lab-frame final states, one column per initial state
  double max_norm_drift = 0.0;
  std::vector<double> top_population;  // per mode, population in the top two Fock levels
  std::vector<cplx> classical_final;   // alpha_i(T) of the driven modes
  long steps = 0;
};

// Column index of a product Fock state in the tensor layout (mode 0 fastest).
Eigen::Index fock_index(const std::vector<int>& n, int cutoff);

// Evolves the columns of `initial` (lab frame) over the whole schedule.
BranchEvolution evolve_branch(const BranchHamiltonian& h, const Eigen::MatrixXcd& initial,
                              const EvolveOptions& options = {});

struct BranchRecord {
  std::array<int, 2> signs{1, 1};
  double return_overlap = 0.0;  // |<psi(0)|psi(T)>| for the most probable thermal state
  double phase = 0.0;           // arg <psi(0)|psi(T)>
  double norm_drift = 0.0;
};

struct FidelityReport {
  double dF_analytic = 0.0;
  double dF_higher_order = 0.0;
  double dF_numeric = 0.0;
  double fidelity = 1.0;
  std::array<BranchRecord, 4> branches;
  double measured_phi_c = 0.0;
  double target_phase = 0.0;
  std::array<double, 2> z_correction{0.0, 0.0};
  double retained_weight = 0.0;
  int thermal_states = 0;
  int fock_cutoff = 0;
  double max_top_population = 0.0;
  double max_norm_drift = 0.0;
  std::optional<double> step_halving_change;
};

// Fock cutoff used when SimConfig::fock_cutoff is 0.
int auto_fock_cutoff(const ThermalSpec& thermal, int modes);

FidelityReport numeric_gate_fidelity(const CrystalModel& crystal, const GateDesign& design,
                                     const SimConfig& sim, const ThermalSpec& thermal);

}  // namespace lpgate
