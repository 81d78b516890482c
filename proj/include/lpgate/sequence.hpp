#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "lpgate/constants.hpp"
#include "lpgate/crystal.hpp"
#include "lpgate/trajectory.hpp"

namespace lpgate {

struct SequenceSpec {
  int n = 3;                        // sequence length 2^n per block
  std::vector<double> phase_flips;  // phi_aj in {0, pi}
  // Extra phase added to phi(t) in a second block (pi/2 for the two-phi8 combination).
  std::optional<double> second_block_offset;

  int blocks() const { return second_block_offset ? 2 : 1; }
  int intervals_per_block() const { return static_cast<int>(phase_flips.size()); }
  int total_intervals() const { return blocks() * intervals_per_block(); }
  // Total phase offset of interval j (counted across blocks), excluding phi0.
  double interval_offset(int j) const;
  void validate() const;
};

// phi2 / phi4 / phi8 flip tables; `two_blocks` appends a second block shifted by pi/2.
SequenceSpec compose_sequence(int n, bool two_blocks = false);

struct ConditionalPhase {
  double phi_c = 0.0;  // coefficient of sigma1 sigma2
  double phi_s = 0.0;  // coefficient of sigma1 + sigma2
  // Richardson estimate of the composite-Simpson error, relative to |phi_c|.
  double quadrature_error = 0.0;
};

// phi_c = omega_I int (Re a+ - Re a-)^2, phi_s = omega_I int (Re a+^2 - Re a-^2).
ConditionalPhase conditional_phase(const TrajectorySolution& traj, double omega_I);

// eta^2 omega_I tau |Omega|^2 / (6 omega^2) [omega^2 tau^2 + 36 cos^2 phi0 - 6].
double ld_phase_closed_form(const DriveParams& params, double omega_I);
// Closed form summed over the intervals of a sequence.
double ld_sequence_phase_closed_form(const DriveParams& params, double omega_I,
                                     const SequenceSpec& sequence);

struct SequencePhase {
  ConditionalPhase total;
  std::vector<ConditionalPhase> intervals;
  double max_closure = 0.0;  // worst normalized closure residual over intervals
};

// Re-integrates the trajectory for each distinct total interval offset and sums the phases.
SequencePhase sequence_phase(const DriveParams& params, const PhaseProfile& profile,
                             const SequenceSpec& sequence, double omega_I,
                             const TrajectoryOptions& options = {});

enum class PhaseModel { numeric, closed_form };
enum class ProfileKind { lamb_dicke, designed };
enum class FreeParameter { rabi, tau };

struct CalibrationSpec {
  double eta = 0.05;
  double phi0 = 0.0;
  std::optional<int> k_multiple;  // fixes tau = 2 K pi / omega
  std::optional<double> tau;
  std::optional<double> rabi;
  FreeParameter free = FreeParameter::rabi;
  double rabi_cap = std::numeric_limits<double>::infinity();
  double tau_cap = std::numeric_limits<double>::infinity();
  double target_phase = kPi / 4;
  PhaseModel model = PhaseModel::numeric;
  ProfileKind profile = ProfileKind::lamb_dicke;
  DesignOptions design;
  // Relative tolerance on the calibrated phase.
  double tolerance = 1e-8;

  void validate() const;
};

struct GateDesign {
  DriveParams drive;
  PhaseProfile profile;
  SequenceSpec sequence;
  ConditionalPhase total_phase;
  std::vector<ConditionalPhase> interval_phases;
  double gate_time = 0.0;
  double omega_I = 0.0;
  double target_phase = kPi / 4;
  double closed_form_phase = 0.0;  // Lamb-Dicke closed form at the same drive
  double max_closure = 0.0;
  PhaseModel model = PhaseModel::numeric;
  ProfileKind profile_kind = ProfileKind::lamb_dicke;

  double k_effective() const { return drive.omega * drive.tau / kTwoPi; }
};

// Evaluates a fully specified drive without calibration.
GateDesign evaluate_design(const DriveParams& drive, const SequenceSpec& sequence, double omega_I,
                           PhaseModel model = PhaseModel::numeric,
                           ProfileKind profile = ProfileKind::lamb_dicke,
                           const DesignOptions& design = {});

// Solves the free member of (|Omega|, tau) so that the sequence phase equals the target.
GateDesign calibrate_cpf(const CrystalModel& model, const CalibrationSpec& spec,
                         const SequenceSpec& sequence);

}  // namespace lpgate
