#include "lpgate/trajectory.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <sstream>

#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>

#include "lpgate/constants.hpp"
#include "lpgate/errors.hpp"

namespace lpgate {

namespace odeint = boost::numeric::odeint;

DriveParams DriveParams::with_periods(double eta, double rabi, double phi0, double omega, int k) {
  DriveParams p;
  p.eta = eta;
  p.rabi = rabi;
  p.phi0 = phi0;
  p.omega = omega;
  p.k_multiple = k;
  p.tau = k * kTwoPi / omega;
  return p;
}

void DriveParams::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be positive");
  if (!(rabi >= 0.0) || !std::isfinite(rabi)) throw ConfigError("Rabi frequency must be >= 0");
  if (!(omega > 0.0) || !std::isfinite(omega)) throw ConfigError("local frequency must be positive");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("interval tau must be positive");
  if (!std::isfinite(phi0)) throw ConfigError("phi0 must be finite");
  if (k_multiple) {
    if (*k_multiple < 1) throw ConfigError("K must be a positive integer");
    const double expected = *k_multiple * kTwoPi;
    if (std::abs(omega * tau - expected) > 1e-12 * expected)
      throw ConfigError("omega * tau is not 2 K pi for the requested K");
  }
}

double PhaseProfile::duration() const {
  double total = 0.0;
  for (const auto& s : segments) total += s.duration;
  return total;
}

std::vector<double> PhaseProfile::boundaries() const {
  std::vector<double> b{0.0};
  double t = 0.0;
  for (const auto& s : segments) {
    t += s.duration;
    b.push_back(t);
  }
  return b;
}

double PhaseProfile::phase(double t, double omega) const {
  double start = 0.0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    if (t < start + s.duration || i + 1 == segments.size())
      return s.slope * omega * t + s.offset;
    start += s.duration;
  }
  throw ConfigError("phase profile has no segments");
}

PhaseProfile PhaseProfile::lamb_dicke(double tau) {
  PhaseProfile p;
  p.segments = {{0.5 * tau, 1, 0.0}, {0.5 * tau, 1, kPi}};
  return p;
}

PhaseProfile PhaseProfile::mirrored(const std::vector<PhaseSegment>& first_half, double tau,
                                    double omega) {
  PhaseProfile p;
  p.symmetric = true;
  p.segments = first_half;
  for (auto it = first_half.rbegin(); it != first_half.rend(); ++it)
    p.segments.push_back({it->duration, -it->slope, it->slope * omega * tau + it->offset});
  return p;
}

void PhaseProfile::validate(double tau) const {
  if (segments.empty()) throw ConfigError("phase profile has no segments");
  for (const auto& s : segments) {
    if (!(s.duration > 0.0)) throw ConfigError("phase segment durations must be positive");
    if (s.slope != 1 && s.slope != -1) throw ConfigError("phase segment slope must be +1 or -1");
  }
  if (std::abs(duration() - tau) > 1e-9 * tau)
    throw ConfigError("phase profile duration differs from tau");
}

double TrajectorySolution::max_abs_alpha() const {
  double m = 0.0;
  for (const auto& a : alpha_plus) m = std::max(m, std::abs(a));
  for (const auto& a : alpha_minus) m = std::max(m, std::abs(a));
  return m;
}

std::vector<double> sample_grid(const PhaseProfile& profile, double omega, int samples_per_period,
                                std::vector<std::size_t>* breaks) {
  if (samples_per_period < 4) throw ConfigError("need at least 4 samples per period");
  std::vector<double> edges = profile.boundaries();
  const double tau = edges.back();
  const double half = 0.5 * tau;
  bool has_half = false;
  for (double e : edges) has_half = has_half || std::abs(e - half) <= 1e-12 * tau;
  if (!has_half) {
    edges.push_back(half);
    std::sort(edges.begin(), edges.end());
  }
  const double period = kTwoPi / omega;
  std::vector<double> times{0.0};
  if (breaks) breaks->assign(1, 0);
  for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
    const double a = edges[k];
    const double b = edges[k + 1];
    auto n = static_cast<long>(std::ceil((b - a) / period * samples_per_period - 1e-9));
    n = std::max<long>(4, ((n + 3) / 4) * 4);
    for (long i = 1; i <= n; ++i) times.push_back(i == n ? b : a + (b - a) * i / n);
    if (breaks) breaks->push_back(times.size() - 1);
  }
  return times;
}

std::vector<cplx> integrate_alpha(const PhaseProfile& profile, const DriveParams& params, int sigma,
                                  const std::vector<double>& times,
                                  const TrajectoryOptions& options) {
  params.validate();
  if (sigma != 1 && sigma != -1) throw ConfigError("spin sign must be +1 or -1");
  if (times.empty() || times.front() != 0.0) throw ConfigError("time grid must start at 0");

  using State = std::array<double, 2>;
  const double w = params.omega;
  const double force = 2.0 * params.eta * params.rabi * sigma;
  const double two_eta = 2.0 * params.eta;
  const double abs_tol =
      options.abs_tol_scale * std::max(params.eta * params.rabi * params.tau, 1e-300);

  std::vector<cplx> out;
  out.reserve(times.size());
  out.emplace_back(0.0, 0.0);
  State x{0.0, 0.0};

  const std::vector<double> edges = profile.boundaries();
  std::size_t idx = 0;
  for (std::size_t seg = 0; seg < profile.segments.size() && idx + 1 < times.size(); ++seg) {
    const double seg_end = edges[seg + 1];
    const bool last = seg + 1 == profile.segments.size();
    std::vector<double> piece{times[idx]};
    std::size_t j = idx + 1;
    while (j < times.size() && (last || times[j] <= seg_end * (1.0 + 1e-14))) piece.push_back(times[j++]);
    if (piece.size() < 2) continue;

    const int slope = profile.segments[seg].slope;
    const double offset = profile.segments[seg].offset + params.phi0;
    auto rhs = [&](const State& s, State& ds, double t) {
      ds[0] = w * s[1];
      ds[1] = -w * s[0] + force * std::sin(two_eta * s[0] + slope * w * t + offset);
    };
    auto observer = [&](const State& s, double t) {
      if (!std::isfinite(s[0]) || !std::isfinite(s[1])) {
        std::ostringstream msg;
        msg << "trajectory diverged at t = " << t << " s";
        throw NumericalError(msg.str());
      }
      if (t != piece.front()) out.emplace_back(s[0], s[1]);
    };
    auto stepper = odeint::make_controlled<odeint::runge_kutta_dopri5<State>>(abs_tol,
                                                                              options.rel_tol);
    const double dt0 = std::min(piece[1] - piece[0], 0.02 / w);
    try {
      odeint::integrate_times(stepper, rhs, x, piece.begin(), piece.end(), dt0, observer);
    } catch (const NumericalError&) {
      throw;
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << "trajectory integration failed in segment " << seg << ": " << e.what();
      throw NumericalError(msg.str());
    }
    idx = j - 1;
  }
  if (out.size() != times.size()) throw ConfigError("time grid extends past the phase profile");
  return out;
}

TrajectorySolution solve_trajectory(const PhaseProfile& profile, const DriveParams& params,
                                    const TrajectoryOptions& options) {
  params.validate();
  profile.validate(profile.duration());
  TrajectorySolution sol;
  sol.times = sample_grid(profile, params.omega, options.samples_per_period, &sol.breaks);
  sol.alpha_plus = integrate_alpha(profile, params, +1, sol.times, options);
  sol.alpha_minus = integrate_alpha(profile, params, -1, sol.times, options);
  sol.closure_residual = std::max(std::abs(sol.alpha_plus.back()), std::abs(sol.alpha_minus.back()));
  const double half = 0.5 * sol.times.back();
  for (std::size_t b : sol.breaks)
    if (std::abs(sol.times[b] - half) <= 1e-12 * sol.times.back()) {
      sol.midpoint_imag = sol.alpha_plus[b].imag();
      sol.midpoint_imag_minus = sol.alpha_minus[b].imag();
    }
  return sol;
}

cplx analytic_ld_alpha(double t, const DriveParams& params, int sigma) {
  const double w = params.omega;
  const double p0 = params.phi0;
  const double half = 0.5 * params.tau;
  const cplx i(0.0, 1.0);
  const double amp = params.eta * params.rabi * sigma;
  cplx bracket;
  if (t <= half) {
    bracket = std::exp(i * (w * t + p0)) * std::sin(w * t) - w * t * std::exp(-i * p0);
  } else {
    bracket = -std::exp(i * (w * t + w * half + p0)) * std::sin(w * (t - half)) +
              std::exp(i * (w * half + p0)) * std::sin(w * half) +
              w * (t - params.tau) * std::exp(-i * p0);
  }
  return amp * std::exp(-i * w * t) * bracket / w;
}

ClosureReport closure_check(const TrajectorySolution& solution, double tolerance) {
  ClosureReport r;
  r.residual_plus = std::abs(solution.alpha_plus.back());
  r.residual_minus = std::abs(solution.alpha_minus.back());
  r.scale = solution.max_abs_alpha();
  const double worst = std::max(r.residual_plus, r.residual_minus);
  r.normalized = r.scale > 0.0 ? worst / r.scale : 0.0;
  r.pass = r.normalized <= tolerance;
  return r;
}

namespace {

// Im alpha(tau/2) for both branches of the first half of a mirrored profile.
struct HalfResult {
  double p_plus = 0.0;
  double p_minus = 0.0;
  double scale = 0.0;
};

class HalfIntegrator {
 public:
  HalfIntegrator(const DriveParams& params, const DesignOptions& options)
      : params_(params), options_(options) {
    const int n = options.segments_per_half;
    slopes_ = options.slopes.empty() ? std::vector<int>(n, 1) : options.slopes;
    seeds_.resize(n);
    for (int j = 0; j < n; ++j) seeds_[j] = slopes_[j] > 0 ? 0.0 : kPi;
  }

  std::vector<PhaseSegment> segments(double delta, double mu) const {
    const int n = static_cast<int>(slopes_.size());
    std::vector<PhaseSegment> segs(n);
    for (int j = 0; j < n; ++j) {
      segs[j].duration = 0.5 * params_.tau / n;
      segs[j].slope = slopes_[j];
      segs[j].offset = seeds_[j];
    }
    segs[n - 2].offset += mu - delta;
    segs[n - 1].offset += mu + delta;
    return segs;
  }

  HalfResult operator()(double delta, double mu) const {
    PhaseProfile half;
    half.segments = segments(delta, mu);
    const auto times = sample_grid(half, params_.omega, options_.integration.samples_per_period);
    const auto ap = integrate_alpha(half, params_, +1, times, options_.integration);
    const auto am = integrate_alpha(half, params_, -1, times, options_.integration);
    HalfResult r;
    r.p_plus = ap.back().imag();
    r.p_minus = am.back().imag();
    for (std::size_t k = 0; k < ap.size(); ++k)
      r.scale = std::max({r.scale, std::abs(ap[k]), std::abs(am[k])});
    return r;
  }

 private:
  DriveParams params_;
  DesignOptions options_;
  std::vector<int> slopes_;
  std::vector<double> seeds_;
};

// Finds a sign change of f near x0 by stepping outward, then refines it.
std::optional<double> root_near(const std::function<double(double)>& f, double x0, double step,
                                double limit) {
  const double f0 = f(x0);
  if (f0 == 0.0) return x0;
  for (double h = step; h <= limit + 1e-12; h += step) {
    for (double sgn : {1.0, -1.0}) {
      const double a = x0 + sgn * (h - step);
      const double b = x0 + sgn * h;
      const double fa = h == step ? f0 : f(a);
      const double fb = f(b);
      if (fa * fb <= 0.0) {
        boost::uintmax_t iters = 200;
        auto tol = boost::math::tools::eps_tolerance<double>(50);
        const auto lo = std::min(a, b);
        const auto hi = std::max(a, b);
        auto [x1, x2] = boost::math::tools::toms748_solve(f, lo, hi, lo == a ? fa : fb,
                                                          lo == a ? fb : fa, tol, iters);
        return 0.5 * (x1 + x2);
      }
    }
  }
  return std::nullopt;
}

}  // namespace

namespace {

// Solves the last two first-half offsets; nullopt when no bracket is found.
std::optional<PhaseProfile> solve_offsets(const DriveParams& params, const DesignOptions& options) {
  const HalfIntegrator half(params, options);
  auto inner_mu = [&](double delta) -> std::optional<double> {
    auto odd = [&](double mu) {
      const auto r = half(delta, mu);
      return r.p_plus - r.p_minus;
    };
    return root_near(odd, 0.0, 0.05, kPi);
  };
  auto even = [&](double delta) {
    const auto mu = inner_mu(delta);
    if (!mu) throw NumericalError("no offset balances the two spin branches");
    const auto r = half(delta, *mu);
    return r.p_plus + r.p_minus;
  };

  // Scan delta for the first sign change of the spin-even residual.
  const int points = std::max(4, options.offset_scan_points);
  double prev_d = 0.0;
  double prev_f = even(0.0);
  std::optional<std::pair<double, double>> bracket;
  for (int k = 1; k <= points && !bracket; ++k) {
    const double d = 0.5 * kPi * k / points;
    const double f = even(d);
    if (prev_f * f <= 0.0) bracket = std::make_pair(prev_d, d);
    prev_d = d;
    prev_f = f;
  }
  if (!bracket) return std::nullopt;
  boost::uintmax_t iters = 200;
  auto [d1, d2] = boost::math::tools::toms748_solve(even, bracket->first, bracket->second,
                                                    boost::math::tools::eps_tolerance<double>(50),
                                                    iters);
  double delta = 0.5 * (d1 + d2);
  double mu = inner_mu(delta).value();

  // Newton polish on both residuals.
  auto eval = [&](double d, double m) {
    const auto r = half(d, m);
    return std::array<double, 3>{r.p_plus, r.p_minus, r.scale};
  };
  auto res = eval(delta, mu);
  for (int it = 0; it < 8; ++it) {
    if (std::max(std::abs(res[0]), std::abs(res[1])) <= 0.1 * options.closure_tolerance * res[2])
      break;
    const double h = 1e-7;
    const auto rd = eval(delta + h, mu);
    const auto rm = eval(delta, mu + h);
    const double j00 = (rd[0] - res[0]) / h, j01 = (rm[0] - res[0]) / h;
    const double j10 = (rd[1] - res[1]) / h, j11 = (rm[1] - res[1]) / h;
    const double det = j00 * j11 - j01 * j10;
    if (det == 0.0 || !std::isfinite(det)) break;
    const double dd = -(j11 * res[0] - j01 * res[1]) / det;
    const double dm = -(-j10 * res[0] + j00 * res[1]) / det;
    const auto trial = eval(delta + dd, mu + dm);
    if (std::max(std::abs(trial[0]), std::abs(trial[1])) >=
        std::max(std::abs(res[0]), std::abs(res[1])))
      break;
    delta += dd;
    mu += dm;
    res = trial;
  }
  const double normalized = std::max(std::abs(res[0]), std::abs(res[1])) / res[2];
  if (normalized > options.closure_tolerance) {
    std::ostringstream msg;
    msg << "designed profile leaves |Im alpha(tau/2)| / max|alpha| = " << normalized
        << ", above the tolerance " << options.closure_tolerance;
    throw NumericalError(msg.str());
  }
  return PhaseProfile::mirrored(half.segments(delta, mu), params.tau, params.omega);
}

}  // namespace

PhaseProfile design_phase_profile(const DriveParams& params, const DesignOptions& options) {
  params.validate();
  if (options.segments_per_half < 2)
    throw ConfigError("profile design needs at least two segments per half interval");
  if (!options.slopes.empty() &&
      static_cast<int>(options.slopes.size()) != options.segments_per_half)
    throw ConfigError("slopes must list one sign per first-half segment");
  for (int s : options.slopes)
    if (s != 1 && s != -1) throw ConfigError("segment slopes must be +1 or -1");

  const PhaseProfile ld = PhaseProfile::lamb_dicke(params.tau);
  if (params.rabi == 0.0) return ld;
  const auto ld_solution = solve_trajectory(ld, params, options.integration);
  if (closure_check(ld_solution, options.ld_tolerance).pass) return ld;

  if (auto prof = solve_offsets(params, options)) return *prof;

  // Retry with quarter-period segments, which keep the offsets effective for long intervals.
  const int quarter = 2 * static_cast<int>(std::lround(params.omega * params.tau / kTwoPi));
  if (options.auto_refine && options.slopes.empty() && quarter > options.segments_per_half) {
    DesignOptions refined = options;
    refined.segments_per_half = quarter;
    if (auto prof = solve_offsets(params, refined)) return *prof;
  }
  std::ostringstream msg;
  msg << "could not close both spin branches with " << options.segments_per_half
      << " segments per half interval at eta |Omega| / omega = "
      << params.eta * params.rabi / params.omega << "; try more segments or a weaker drive";
  throw NumericalError(msg.str());
}

}  // namespace lpgate
