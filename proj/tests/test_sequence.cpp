#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "lpgate/constants.hpp"
#include "lpgate/errors.hpp"
#include "lpgate/sequence.hpp"

using namespace lpgate;

namespace {

constexpr double kW = kTwoPi * 3e6;

DriveParams ld_drive(double eta_rabi_tau, int k, double phi0, double eta = 0.05) {
  const double tau = k * kTwoPi / kW;
  return DriveParams::with_periods(eta, eta_rabi_tau / (eta * tau), phi0, kW, k);
}

// Independent route: trapezoid integral of the analytic Lamb-Dicke trajectories on a fine grid.
double oracle_phi_c(const DriveParams& p, double omega_I, int samples = 200000) {
  double sum = 0.0;
  const double h = p.tau / samples;
  for (int i = 0; i <= samples; ++i) {
    const double t = i * h;
    const double d = analytic_ld_alpha(t, p, 1).real() - analytic_ld_alpha(t, p, -1).real();
    sum += (i == 0 || i == samples ? 0.5 : 1.0) * d * d;
  }
  return omega_I * sum * h;
}

CrystalModel lattice(double omega_I, double n_c = 2.0) {
  CrystalConfig c;
  c.geometry = UniformLattice{spacing_for_interaction_rate(omega_I, kW, IonSpecies{}), n_c, kW};
  return build_crystal(c);
}

}  // namespace

TEST_CASE("protocol tables") {
  CHECK(compose_sequence(1).phase_flips == std::vector<double>{0, kPi});
  CHECK(compose_sequence(2).phase_flips == std::vector<double>{0, kPi, kPi, 0});
  CHECK(compose_sequence(3).phase_flips == std::vector<double>{0, kPi, kPi, 0, kPi, 0, 0, kPi});
  CHECK_THROWS_AS(compose_sequence(4), ConfigError);
  CHECK_THROWS_AS(compose_sequence(0), ConfigError);
  auto two = compose_sequence(3, true);
  CHECK(two.total_intervals() == 16);
  CHECK(two.interval_offset(9) == doctest::Approx(kPi + kPi / 2));
  CHECK(two.interval_offset(3) == 0.0);
}

TEST_CASE("zero drive has no conditional phase") {
  auto p = ld_drive(0.0, 1, 0.0);
  auto s = solve_trajectory(PhaseProfile::lamb_dicke(p.tau), p);
  auto c = conditional_phase(s, 1e5);
  CHECK(c.phi_c == 0.0);
  CHECK(c.phi_s == 0.0);
}

TEST_CASE("closed-form phase agrees with an independent quadrature of the analytic trajectory") {
  const double wI = kTwoPi * 1e4;
  for (int k : {1, 2, 3})
    for (double phi0 : {0.0, kPi / 4, kPi / 2, 1.1}) {
      auto p = ld_drive(0.1, k, phi0);
      CHECK(ld_phase_closed_form(p, wI) == doctest::Approx(oracle_phi_c(p, wI)).epsilon(1e-8));
    }
}

TEST_CASE("numeric phase agrees with the closed form within 1% in the Lamb-Dicke regime") {
  const double wI = kTwoPi * 1e4;
  for (int k : {1, 2, 3})
    for (double phi0 : {0.0, kPi / 4, kPi / 2})
      for (double x : {0.01, 0.1}) {
        auto p = ld_drive(x, k, phi0);
        auto s = solve_trajectory(PhaseProfile::lamb_dicke(p.tau), p);
        auto c = conditional_phase(s, wI);
        CHECK(c.phi_c == doctest::Approx(ld_phase_closed_form(p, wI)).epsilon(1e-2));
        CHECK(c.quadrature_error < 1e-6);
        CHECK(c.phi_c > 0.0);
      }
}

TEST_CASE("phi_s vanishes for antisymmetric branches") {
  auto p = ld_drive(1e-3, 1, 0.0, 0.001);
  auto s = solve_trajectory(PhaseProfile::lamb_dicke(p.tau), p);
  auto c = conditional_phase(s, kTwoPi * 1e4);
  CHECK(std::abs(c.phi_s) < 1e-6 * c.phi_c);
}

TEST_CASE("closed-form special values") {
  const double wI = kTwoPi * 1e4;
  auto p = ld_drive(0.1, 3, kPi / 2);
  const double pre = p.eta * p.eta * wI * p.tau * p.rabi * p.rabi / (6 * kW * kW);
  CHECK(ld_phase_closed_form(p, wI) == doctest::Approx(pre * (36 * kPi * kPi - 6)).epsilon(1e-12));
  auto q = ld_drive(0.1, 3, 0.0);
  auto r = ld_drive(0.1, 3, kPi);
  CHECK(ld_phase_closed_form(q, wI) == doctest::Approx(ld_phase_closed_form(r, wI)).epsilon(1e-14));
  auto big = ld_drive(0.1, 500, 0.3);
  const double limit = big.eta * big.eta * wI * std::pow(big.tau, 3) * big.rabi * big.rabi / 6;
  CHECK(ld_phase_closed_form(big, wI) == doctest::Approx(limit).epsilon(1e-5));
}

TEST_CASE("two-phi8 closed form is phi0 independent and matches the compact expression") {
  const double wI = kTwoPi * 1e4;
  const auto seq = compose_sequence(3, true);
  for (int k : {1, 3}) {
    auto p = ld_drive(0.2, k, 0.0);
    const double wt = kW * p.tau;
    const double x = p.eta * p.rabi * p.tau;
    const double compact = 8.0 / 3.0 * wI * p.tau * x * x * (1 + 12 / (wt * wt));
    for (int j = 0; j < 16; ++j) {
      p.phi0 = j * kPi / 8;
      CHECK(ld_sequence_phase_closed_form(p, wI, seq) == doctest::Approx(compact).epsilon(1e-13));
    }
  }
}

TEST_CASE("sequence phase is additive over intervals in the Lamb-Dicke regime") {
  const double wI = kTwoPi * 1e4;
  auto p = ld_drive(0.05, 2, 0.3);
  const auto prof = PhaseProfile::lamb_dicke(p.tau);
  for (int n : {1, 2, 3}) {
    auto sp = sequence_phase(p, prof, compose_sequence(n), wI);
    auto single = conditional_phase(solve_trajectory(prof, p), wI);
    CHECK(sp.total.phi_c == doctest::Approx((1 << n) * single.phi_c).epsilon(1e-9));
    CHECK(std::abs(sp.total.phi_s) < 1e-9 * sp.total.phi_c);
  }
}

TEST_CASE("two-phi8 numeric phase varies by less than 1% over phi0") {
  const double wI = kTwoPi * 1e4;
  auto p = ld_drive(0.1, 3, 0.0);
  const auto seq = compose_sequence(3, true);
  const auto prof = PhaseProfile::lamb_dicke(p.tau);
  double lo = 1e300, hi = -1e300, mean = 0.0;
  for (int j = 0; j < 16; ++j) {
    p.phi0 = j * kPi / 8;
    const double v = sequence_phase(p, prof, seq, wI).total.phi_c;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    mean += v / 16;
  }
  CHECK((hi - lo) <= 1e-2 * mean);
}

TEST_CASE("single phi8 at omega tau = 144 pi is nearly phi0 independent") {
  const double wI = kTwoPi * 55.0;
  auto p = ld_drive(0.1, 72, 0.0);
  const auto seq = compose_sequence(3);
  const double approx = 4.0 / 3.0 * wI * p.tau * std::pow(p.eta * p.rabi * p.tau, 2);
  double lo = 1e300, hi = -1e300;
  for (double phi0 : {0.0, 0.4, kPi / 2, 2.5}) {
    p.phi0 = phi0;
    const double v = ld_sequence_phase_closed_form(p, wI, seq);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK((hi - lo) / lo < 1e-3);
  CHECK(lo == doctest::Approx(approx).epsilon(1e-3));
}

TEST_CASE("calibration reproduces the 1D and 2D drive strengths") {
  const auto seq = compose_sequence(3, true);
  CalibrationSpec spec;
  spec.k_multiple = 3;
  for (auto [rate, expect] : {std::pair{1e4, 6.8e6}, std::pair{3.6e3, 11.5e6}}) {
    auto g = calibrate_cpf(lattice(kTwoPi * rate), spec, seq);
    CHECK(g.drive.rabi / kTwoPi == doctest::Approx(expect).epsilon(0.05));
    CHECK(g.gate_time == doctest::Approx(16e-6).epsilon(1e-12));
    CHECK(g.total_phase.phi_c == doctest::Approx(kPi / 4).epsilon(1e-8));
    // Re-evaluation returns the target.
    auto again = evaluate_design(g.drive, seq, g.omega_I);
    CHECK(again.total_phase.phi_c == doctest::Approx(kPi / 4).epsilon(1e-8));
  }
}

TEST_CASE("closed-form calibration solves the compact expression exactly") {
  const auto seq = compose_sequence(3, true);
  CalibrationSpec spec;
  spec.k_multiple = 3;
  spec.model = PhaseModel::closed_form;
  auto m = lattice(kTwoPi * 1e4);
  auto g = calibrate_cpf(m, spec, seq);
  const double wt = 6 * kPi;
  const double x2 = (kPi / 4) / (8.0 / 3.0 * m.rate.omega_I * g.drive.tau * (1 + 12 / (wt * wt)));
  CHECK(g.drive.eta * g.drive.rabi * g.drive.tau == doctest::Approx(std::sqrt(x2)).epsilon(1e-10));
}

TEST_CASE("tau-free calibration is consistent with the rabi-free design") {
  const auto seq = compose_sequence(3, true);
  auto m = lattice(kTwoPi * 1e4);
  CalibrationSpec a;
  a.k_multiple = 3;
  auto ga = calibrate_cpf(m, a, seq);
  CalibrationSpec b;
  b.free = FreeParameter::tau;
  b.rabi = ga.drive.rabi;
  auto gb = calibrate_cpf(m, b, seq);
  CHECK(gb.total_phase.phi_c == doctest::Approx(kPi / 4).epsilon(1e-8));
  CHECK(gb.drive.tau == doctest::Approx(ga.drive.tau).epsilon(1e-6));
}

TEST_CASE("calibration rejects malformed specs and unreachable caps") {
  const auto seq = compose_sequence(3, true);
  auto m = lattice(kTwoPi * 1e4);
  CalibrationSpec both;
  both.k_multiple = 3;
  both.rabi = 1e7;
  CHECK_THROWS_AS(calibrate_cpf(m, both, seq), ConfigError);
  CalibrationSpec none;
  CHECK_THROWS_AS(calibrate_cpf(m, none, seq), ConfigError);
  CalibrationSpec capped;
  capped.k_multiple = 3;
  capped.rabi_cap = kTwoPi * 1e6;
  CHECK_THROWS_AS(calibrate_cpf(m, capped, seq), NumericalError);
}

TEST_CASE("mismatched grids are rejected") {
  auto p = ld_drive(0.1, 1, 0.0);
  auto s = solve_trajectory(PhaseProfile::lamb_dicke(p.tau), p);
  s.alpha_minus.pop_back();
  CHECK_THROWS_AS(conditional_phase(s, 1.0), ConfigError);
}
