#include "lpgate/sequence.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <boost/math/tools/roots.hpp>

#include "lpgate/errors.hpp"

namespace lpgate {

double SequenceSpec::interval_offset(int j) const {
  const int per = intervals_per_block();
  const double block = (j >= per && second_block_offset) ? *second_block_offset : 0.0;
  return phase_flips.at(j % per) + block;
}

void SequenceSpec::validate() const {
  if (n < 1 || n > 3) throw ConfigError("sequence exponent n must be 1, 2 or 3");
  const SequenceSpec ref = compose_sequence(n);
  if (phase_flips != ref.phase_flips)
    throw ConfigError("phase flips do not match the protocol table for this n");
  if (second_block_offset && !std::isfinite(*second_block_offset))
    throw ConfigError("second block offset must be finite");
}

SequenceSpec compose_sequence(int n, bool two_blocks) {
  SequenceSpec s;
  s.n = n;
  switch (n) {
    case 1: s.phase_flips = {0, kPi}; break;
    case 2: s.phase_flips = {0, kPi, kPi, 0}; break;
    case 3: s.phase_flips = {0, kPi, kPi, 0, kPi, 0, 0, kPi}; break;
    default: throw ConfigError("unsupported sequence exponent; use n = 1, 2 or 3");
  }
  if (two_blocks) s.second_block_offset = 0.5 * kPi;
  return s;
}

namespace {

// Composite Simpson over samples [a, b] of a uniform piece taking every `stride`-th point.
double simpson(const std::vector<double>& f, const std::vector<double>& t, std::size_t a,
               std::size_t b, std::size_t stride) {
  const std::size_t m = (b - a) / stride;
  const double h = (t[b] - t[a]) / static_cast<double>(m);
  double sum = f[a] + f[b];
  for (std::size_t k = 1; k < m; ++k) sum += (k % 2 ? 4.0 : 2.0) * f[a + k * stride];
  return sum * h / 3.0;
}

}  // namespace

ConditionalPhase conditional_phase(const TrajectorySolution& traj, double omega_I) {
  const std::size_t n = traj.times.size();
  if (traj.alpha_plus.size() != n || traj.alpha_minus.size() != n)
    throw ConfigError("spin branches are not sampled on a common grid");
  if (n < 5) throw ConfigError("trajectory grid too short for Simpson quadrature");
  std::vector<std::size_t> breaks = traj.breaks;
  if (breaks.empty()) breaks = {0, n - 1};
  if (breaks.front() != 0 || breaks.back() != n - 1)
    throw ConfigError("trajectory breaks must span the grid");

  std::vector<double> fc(n), fs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = traj.alpha_plus[i].real();
    const double m = traj.alpha_minus[i].real();
    fc[i] = (p - m) * (p - m);
    fs[i] = p * p - m * m;
  }
  double c1 = 0, c2 = 0, s1 = 0, s2 = 0;
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    const std::size_t a = breaks[k], b = breaks[k + 1];
    if ((b - a) % 4 != 0)
      throw ConfigError("each trajectory piece needs a multiple of four intervals");
    c1 += simpson(fc, traj.times, a, b, 1);
    c2 += simpson(fc, traj.times, a, b, 2);
    s1 += simpson(fs, traj.times, a, b, 1);
    s2 += simpson(fs, traj.times, a, b, 2);
  }
  ConditionalPhase out;
  out.phi_c = omega_I * (c1 + (c1 - c2) / 15.0);
  out.phi_s = omega_I * (s1 + (s1 - s2) / 15.0);
  const double err = omega_I * std::abs(c1 - c2) / 15.0;
  out.quadrature_error = out.phi_c != 0.0 ? err / std::abs(out.phi_c) : 0.0;
  return out;
}

double ld_phase_closed_form(const DriveParams& p, double omega_I) {
  const double wt = p.omega * p.tau;
  const double c = std::cos(p.phi0);
  return p.eta * p.eta * omega_I * p.tau * p.rabi * p.rabi / (6.0 * p.omega * p.omega) *
         (wt * wt + 36.0 * c * c - 6.0);
}

double ld_sequence_phase_closed_form(const DriveParams& params, double omega_I,
                                     const SequenceSpec& sequence) {
  double total = 0.0;
  for (int j = 0; j < sequence.total_intervals(); ++j) {
    DriveParams p = params;
    p.phi0 = params.phi0 + sequence.interval_offset(j);
    total += ld_phase_closed_form(p, omega_I);
  }
  return total;
}

SequencePhase sequence_phase(const DriveParams& params, const PhaseProfile& profile,
                             const SequenceSpec& sequence, double omega_I,
                             const TrajectoryOptions& options) {
  params.validate();
  sequence.validate();
  profile.validate(params.tau);

  struct Cached {
    ConditionalPhase phase;
    double closure = 0.0;
  };
  std::map<long long, Cached> cache;
  SequencePhase out;
  double err2 = 0.0;
  for (int j = 0; j < sequence.total_intervals(); ++j) {
    double offset = std::fmod(params.phi0 + sequence.interval_offset(j), kTwoPi);
    if (offset < 0) offset += kTwoPi;
    const long long key = std::llround(offset * 1e12);
    auto it = cache.find(key);
    if (it == cache.end()) {
      DriveParams p = params;
      p.phi0 = offset;
      const auto traj = solve_trajectory(profile, p, options);
      Cached c{conditional_phase(traj, omega_I), closure_check(traj).normalized};
      it = cache.emplace(key, c).first;
    }
    out.intervals.push_back(it->second.phase);
    out.total.phi_c += it->second.phase.phi_c;
    out.total.phi_s += it->second.phase.phi_s;
    err2 += std::abs(it->second.phase.phi_c) * it->second.phase.quadrature_error;
    out.max_closure = std::max(out.max_closure, it->second.closure);
  }
  out.total.quadrature_error = out.total.phi_c != 0.0 ? err2 / std::abs(out.total.phi_c) : 0.0;
  return out;
}

void CalibrationSpec::validate() const {
  if (!(eta > 0.0)) throw ConfigError("eta must be positive");
  if (!(target_phase > 0.0)) throw ConfigError("target phase must be positive");
  if (free == FreeParameter::rabi) {
    if (rabi) throw ConfigError("rabi is the free parameter and must not be given");
    if (!tau && !k_multiple) throw ConfigError("fixed-tau calibration needs tau or K");
    if (tau && k_multiple) throw ConfigError("give either tau or K, not both");
  } else {
    if (!rabi) throw ConfigError("tau-free calibration needs a fixed Rabi frequency");
    if (tau || k_multiple) throw ConfigError("tau is the free parameter and must not be given");
  }
}

GateDesign evaluate_design(const DriveParams& drive, const SequenceSpec& sequence, double omega_I,
                           PhaseModel model, ProfileKind profile, const DesignOptions& design) {
  drive.validate();
  sequence.validate();
  GateDesign g;
  g.drive = drive;
  g.sequence = sequence;
  g.omega_I = omega_I;
  g.model = model;
  g.profile_kind = profile;
  g.gate_time = sequence.total_intervals() * drive.tau;
  g.closed_form_phase = ld_sequence_phase_closed_form(drive, omega_I, sequence);
  g.profile = profile == ProfileKind::designed ? design_phase_profile(drive, design)
                                               : PhaseProfile::lamb_dicke(drive.tau);
  if (model == PhaseModel::closed_form) {
    g.total_phase.phi_c = g.closed_form_phase;
    const auto sp = sequence_phase(drive, g.profile, sequence, omega_I, design.integration);
    g.max_closure = sp.max_closure;
  } else {
    const auto sp = sequence_phase(drive, g.profile, sequence, omega_I, design.integration);
    g.total_phase = sp.total;
    g.interval_phases = sp.intervals;
    g.max_closure = sp.max_closure;
  }
  return g;
}

namespace {

double model_phase(const DriveParams& drive, const SequenceSpec& sequence, double omega_I,
                   const CalibrationSpec& spec) {
  if (spec.model == PhaseModel::closed_form)
    return ld_sequence_phase_closed_form(drive, omega_I, sequence);
  const PhaseProfile profile = spec.profile == ProfileKind::designed
                                   ? design_phase_profile(drive, spec.design)
                                   : PhaseProfile::lamb_dicke(drive.tau);
  return sequence_phase(drive, profile, sequence, omega_I, spec.design.integration).total.phi_c;
}

template <class F>
double solve_bracketed(F&& f, double lo, double hi, double flo, double fhi, double rel_tol) {
  const int bits = std::clamp(static_cast<int>(-std::log2(rel_tol * 1e-3)), 20, 52);
  boost::uintmax_t iters = 200;
  auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi,
                                                  boost::math::tools::eps_tolerance<double>(bits),
                                                  iters);
  return 0.5 * (a + b);
}

}  // namespace

GateDesign calibrate_cpf(const CrystalModel& model, const CalibrationSpec& spec,
                         const SequenceSpec& sequence) {
  spec.validate();
  sequence.validate();
  const double omega = model.drive_freq;
  const double omega_I = model.rate.omega_I;
  if (!(omega > 0.0) || !(omega_I > 0.0))
    throw ConfigError("crystal model has no drive frequency or interaction rate");

  DriveParams drive;
  drive.eta = spec.eta;
  drive.phi0 = spec.phi0;
  drive.omega = omega;

  if (spec.free == FreeParameter::rabi) {
    if (spec.k_multiple) {
      drive = DriveParams::with_periods(spec.eta, 0.0, spec.phi0, omega, *spec.k_multiple);
    } else {
      drive.tau = *spec.tau;
    }
    drive.rabi = 1.0;
    drive.validate();
    const double unit = ld_sequence_phase_closed_form(drive, omega_I, sequence);
    if (!(unit > 0.0))
      throw NumericalError("closed-form phase is not positive at this tau; no |Omega| reaches the target");
    auto f = [&](double rabi) {
      DriveParams d = drive;
      d.rabi = rabi;
      return model_phase(d, sequence, omega_I, spec) - spec.target_phase;
    };
    const double guess = std::sqrt(spec.target_phase / unit);
    double lo = 0.5 * guess, hi = 2.0 * guess;
    double flo = f(lo);
    for (int k = 0; flo > 0.0 && k < 60; ++k) flo = f(lo *= 0.5);
    double fhi = f(std::min(hi, spec.rabi_cap));
    hi = std::min(hi, spec.rabi_cap);
    for (int k = 0; fhi < 0.0 && k < 20 && hi < spec.rabi_cap; ++k) {
      hi = std::min(2.0 * hi, spec.rabi_cap);
      fhi = f(hi);
    }
    if (flo > 0.0 || fhi < 0.0) {
      std::ostringstream msg;
      msg << "no Rabi frequency up to " << hi / kTwoPi << " Hz (x 2 pi) reaches the target phase "
          << spec.target_phase;
      throw NumericalError(msg.str());
    }
    drive.rabi = solve_bracketed(f, lo, hi, flo, fhi, spec.tolerance);
  } else {
    drive.rabi = *spec.rabi;
    auto tau_params = [&](double tau) {
      DriveParams d = drive;
      d.tau = tau;
      return d;
    };
    auto closed = [&](double tau) {
      return ld_sequence_phase_closed_form(tau_params(tau), omega_I, sequence) - spec.target_phase;
    };
    // Closed-form scan for the first crossing, then refine with the chosen model.
    const double period = kTwoPi / omega;
    double a = 0.25 * period, fa = closed(a);
    double b = a, fb = fa;
    while (fb < 0.0) {
      a = b;
      fa = fb;
      b *= 1.25;
      if (b > spec.tau_cap || b > 1e9 * period)
        throw NumericalError("no interval tau below the cap reaches the target phase");
      fb = closed(b);
    }
    double tau0 = fa < 0.0 ? solve_bracketed(closed, a, b, fa, fb, 1e-12) : b;
    auto f = [&](double tau) { return model_phase(tau_params(tau), sequence, omega_I, spec) - spec.target_phase; };
    double lo = tau0 / 1.05, hi = std::min(tau0 * 1.05, spec.tau_cap);
    double flo = f(lo), fhi = f(hi);
    for (int k = 0; flo > 0.0 && k < 40; ++k) flo = f(lo /= 1.1);
    for (int k = 0; fhi < 0.0 && k < 40 && hi < spec.tau_cap; ++k)
      fhi = f(hi = std::min(hi * 1.1, spec.tau_cap));
    if (flo > 0.0 || fhi < 0.0) throw NumericalError("could not bracket tau for the target phase");
    drive.tau = solve_bracketed(f, lo, hi, flo, fhi, spec.tolerance);
  }

  GateDesign g = evaluate_design(drive, sequence, omega_I, spec.model, spec.profile, spec.design);
  g.target_phase = spec.target_phase;
  const double rel = std::abs(g.total_phase.phi_c - spec.target_phase) / spec.target_phase;
  if (rel > spec.tolerance) {
    std::ostringstream msg;
    msg << "calibrated phase misses the target by " << rel << " (relative)";
    throw NumericalError(msg.str());
  }
  return g;
}

}  // namespace lpgate
