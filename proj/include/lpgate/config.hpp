#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "lpgate/crystal.hpp"
#include "lpgate/fidelity.hpp"
#include "lpgate/sequence.hpp"

namespace lpgate {

enum class Dimension { none, frequency, length, time, mass, angle };

// Parses "<number> <unit>" (space optional). Frequencies come back in Hz (ordinary
// frequency nu), lengths in m, times in s, masses in amu, angles in rad.
double parse_quantity(const std::string& text, Dimension dim);
// Canonical text that parses back to exactly `value`.
std::string format_quantity(double value, Dimension dim);

struct LatticeSection {
  std::optional<double> spacing;           // m
  std::optional<double> interaction_rate;  // Hz; derives the spacing when set
  double coordination = 2.0;
  double local_freq = 0.0;                 // Hz
  bool operator==(const LatticeSection&) const = default;
};

struct ChainSection {
  int ions = 2;
  double axial_freq = 0.0;       // Hz
  double transverse_freq = 0.0;  // Hz
  std::optional<std::array<int, 2>> targets;
  std::optional<double> coordination;
  bool operator==(const ChainSection&) const = default;
};

struct CrystalSection {
  double mass_amu = 171.0;
  int charge = 1;
  std::optional<LatticeSection> lattice;
  std::optional<ChainSection> chain;
  bool operator==(const CrystalSection&) const = default;
};

enum class TauKind { periods, seconds, free };

struct DriveSection {
  double eta = 0.05;
  std::optional<double> rabi;  // Hz; empty when free
  TauKind tau_kind = TauKind::periods;
  int periods = 1;             // K, tau = 2 pi K / omega
  double tau = 0.0;            // s, when tau_kind == seconds
  double phi0 = 0.0;           // rad
  std::optional<double> rabi_cap;  // Hz
  std::optional<double> tau_cap;   // s
  double target_phase = kPi / 4;   // rad
  PhaseModel phase_model = PhaseModel::numeric;
  ProfileKind profile = ProfileKind::lamb_dicke;
  int segments_per_half = 2;

  int free_count() const;
  bool operator==(const DriveSection&) const = default;
};

struct SequenceSection {
  int order = 3;  // phi2, phi4, phi8 for 1, 2, 3
  bool two_blocks = false;
  bool operator==(const SequenceSection&) const = default;
};

struct ThermalSection {
  double nbar = 0.0;
  double weight_cutoff = 0.999;
  bool operator==(const ThermalSection&) const = default;
};

struct SimSection {
  int ions = 2;
  int fock_cutoff = 0;
  double steps_per_period = 200.0;
  bool include_coupling = true;
  GateTarget target = GateTarget::cpf;
  bool convergence_check = true;
  double leakage_tolerance = 1e-6;
  std::vector<double> nbar_sweep;  // extra thermal points for the linearity fit
  bool operator==(const SimSection&) const = default;
};

enum class ScanAxisKind { spacing, frequency, periods, nbar, eta };

struct ScanAxis {
  ScanAxisKind kind = ScanAxisKind::spacing;
  std::vector<double> values;  // SI / Hz / integer K / dimensionless
  bool operator==(const ScanAxis&) const = default;
};

struct ScanSection {
  std::vector<ScanAxis> axes;
  bool numeric = false;
  bool operator==(const ScanSection&) const = default;
};

enum class OutputFormat { json, csv };

struct OutputSection {
  std::string dir = "out";
  OutputFormat format = OutputFormat::json;
  bool operator==(const OutputSection&) const = default;
};

struct RunConfig {
  CrystalSection crystal;
  DriveSection drive;
  SequenceSection sequence;
  ThermalSection thermal;
  std::optional<SimSection> sim;
  std::optional<ScanSection> scan;
  OutputSection output;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

// YAML or JSON text; throws ConfigError on any schema violation.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
// Canonical JSON echo; parse_config(emit_config(c)) == c.
std::string emit_config(const RunConfig& config);

CrystalConfig to_crystal_config(const CrystalSection& section);
// Requires exactly one free member.
CalibrationSpec to_calibration_spec(const DriveSection& drive);
// Requires a fully specified drive; omega in rad/s.
DriveParams to_drive_params(const DriveSection& drive, double omega);
SequenceSpec to_sequence(const SequenceSection& section);
ThermalSpec to_thermal(const ThermalSection& section);
SimConfig to_sim_config(const SimSection& section);

std::string to_string(ScanAxisKind kind);
std::string to_string(GateTarget target);

}  // namespace lpgate
