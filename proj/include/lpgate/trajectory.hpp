#pragma once

#include <complex>
#include <optional>
#include <vector>

namespace lpgate {

using cplx = std::complex<double>;

struct DriveParams {
  double eta = 0.05;   // Lamb-Dicke parameter
  double rabi = 0.0;   // |Omega|, rad/s
  double phi0 = 0.0;   // optical phase, rad
  double omega = 0.0;  // local frequency, rad/s
  double tau = 0.0;    // base interval, s
  // When set, omega * tau = 2 K pi.
  std::optional<int> k_multiple;

  // Drive whose base interval is K local periods.
  static DriveParams with_periods(double eta, double rabi, double phi0, double omega, int k);
  void validate() const;
};

// One piece of the controlled phase: phi(t) = slope * omega * t + offset, with t
// measured from the start of the base interval.
struct PhaseSegment {
  double duration = 0.0;
  int slope = 1;
  double offset = 0.0;
};

struct PhaseProfile {
  std::vector<PhaseSegment> segments;
  // Set when phi(t - tau/2) is even; segments are then mirror images about tau/2.
  bool symmetric = false;

  double duration() const;
  std::vector<double> boundaries() const;  // segment start times plus the end time
  // Right-continuous phase at time t in [0, tau].
  double phase(double t, double omega) const;

  // phi = omega t on [0, tau/2] and omega t + pi on (tau/2, tau].
  static PhaseProfile lamb_dicke(double tau);
  // Mirror a first-half profile about tau/2: phi(t) = phi(tau - t).
  static PhaseProfile mirrored(const std::vector<PhaseSegment>& first_half, double tau,
                               double omega);

  void validate(double tau) const;
};

struct TrajectoryOptions {
  double rel_tol = 1e-10;
  // Absolute tolerance in units of eta |Omega| tau.
  double abs_tol_scale = 1e-10;
  int samples_per_period = 200;
};

struct TrajectorySolution {
  std::vector<double> times;
  std::vector<cplx> alpha_plus;
  std::vector<cplx> alpha_minus;
  // Sample indices of piece boundaries (segment edges and tau/2), including
  // 0 and the last index. Every piece holds a multiple of four intervals.
  std::vector<std::size_t> breaks;
  double closure_residual = 0.0;  // max(|alpha_+(tau)|, |alpha_-(tau)|)
  double midpoint_imag = 0.0;     // Im alpha_+(tau/2)
  double midpoint_imag_minus = 0.0;

  double max_abs_alpha() const;
};

// Sample grid over [0, tau] with at least `samples_per_period` points per local
// period, aligned to the profile's segment boundaries and to tau/2.
std::vector<double> sample_grid(const PhaseProfile& profile, double omega, int samples_per_period,
                                std::vector<std::size_t>* breaks = nullptr);

// Integrates d(alpha)/dt = -i w alpha + i 2 eta |Omega| sigma sin(eta (alpha + alpha*) + phi_t + phi0)
// from alpha(0) = 0, returning alpha on `times`. `times` must start at 0 and
// align with the profile's segment boundaries.
std::vector<cplx> integrate_alpha(const PhaseProfile& profile, const DriveParams& params, int sigma,
                                  const std::vector<double>& times,
                                  const TrajectoryOptions& options = {});

// Both spin branches on a common grid.
TrajectorySolution solve_trajectory(const PhaseProfile& profile, const DriveParams& params,
                                    const TrajectoryOptions& options = {});

// Closed-form Lamb-Dicke solution for the two-piece profile of PhaseProfile::lamb_dicke.
cplx analytic_ld_alpha(double t, const DriveParams& params, int sigma);

struct ClosureReport {
  double residual_plus = 0.0;
  double residual_minus = 0.0;
  double scale = 0.0;       // max_t |alpha_pm(t)|
  double normalized = 0.0;  // max residual / scale (0 for a vanishing trajectory)
  bool pass = true;
};

ClosureReport closure_check(const TrajectorySolution& solution, double tolerance = 1e-6);

struct DesignOptions {
  int segments_per_half = 2;
  // Slope sign per first-half segment; empty means all +1.
  std::vector<int> slopes;
  // The Lamb-Dicke profile is kept when its normalized closure residual is below this.
  double ld_tolerance = 1e-4;
  // Required |Im alpha_pm(tau/2)| / max|alpha| for a solved profile.
  double closure_tolerance = 1e-8;
  int offset_scan_points = 48;
  // On failure, retry with quarter-period segments when slopes are not pinned.
  bool auto_refine = true;
  TrajectoryOptions integration;
};

// Phase profile for which both spin branches return to alpha = 0 at tau.
PhaseProfile design_phase_profile(const DriveParams& params, const DesignOptions& options = {});

}  // namespace lpgate
