#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "doctest.h"
#include "lpgate/constants.hpp"
#include "lpgate/errors.hpp"
#include "lpgate/fidelity.hpp"

using namespace lpgate;

namespace {

constexpr double kW = kTwoPi * 1e6;

CrystalModel desk_lattice(double ratio) {
  CrystalConfig c;
  c.geometry = UniformLattice{spacing_for_interaction_rate(ratio * kW, kW, IonSpecies{}), 2.0, kW};
  return build_crystal(c);
}

Eigen::MatrixXd xop(int n) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k + 1 < n; ++k) x(k, k + 1) = x(k + 1, k) = std::sqrt(k + 1.0);
  return x;
}

Eigen::MatrixXcd kron(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
  Eigen::MatrixXcd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      out.block(r * b.rows(), c * b.cols(), b.rows(), b.cols()) = a(r, c) * b;
  return out;
}

}  // namespace

TEST_CASE("analytic infidelity formula") {
  // 1D point: omega_I tau = 0.0628, eta |Omega| tau = 2.13 (omega_I = 2 pi x 10 kHz, tau = 1 us).
  auto p = DriveParams::with_periods(0.05, 2.13 / (0.05 * 1e-6), 0.0, kTwoPi * 3e6, 3);
  const double wI = kTwoPi * 1e4;
  const double df = analytic_infidelity(p, wI, 2.0, 1.0, 2);
  CHECK(df == doctest::Approx(1.0e-4).epsilon(0.15));
  CHECK(analytic_infidelity(p, wI, 2.0, 1.0, 1) * 2 == doctest::Approx(df));
  CHECK(analytic_infidelity(p, wI, 2.0, 1.0, 2) / analytic_infidelity(p, wI, 2.0, 0.0, 2) ==
        doctest::Approx(3.0).epsilon(1e-14));
  CHECK_THROWS_AS(analytic_infidelity(p, wI, 2.0, 1.0, 3), ConfigError);
}

TEST_CASE("higher-order Lamb-Dicke term") {
  CHECK(higher_order_ld_infidelity(0.05, 0.5) == doctest::Approx(3.0843e-5).epsilon(1e-4));
  CHECK(higher_order_ld_infidelity(0.05, 1.0) == doctest::Approx(6.9397e-5).epsilon(1e-4));
  CHECK(higher_order_ld_infidelity(0.0, 1.0) == 0.0);
}

TEST_CASE("thermal ensemble ordering, weights and symmetry") {
  auto vac = thermal_ensemble(ThermalSpec{0.0}, 3, 50);
  REQUIRE(vac.size() == 1);
  CHECK(vac[0].n == std::vector<int>{0, 0, 0});
  CHECK(vac[0].weight == 1.0);

  auto one = thermal_ensemble(ThermalSpec{1.0, 0.999}, 1, 1000);
  double total = 0.0;
  for (std::size_t k = 0; k < one.size(); ++k) {
    CHECK(one[k].n[0] == static_cast<int>(k));
    CHECK(one[k].weight == doctest::Approx(std::pow(0.5, k + 1)));
    total += one[k].weight;
  }
  CHECK(total >= 0.999);

  auto two = thermal_ensemble(ThermalSpec{0.7, 0.999}, 2, 1000);
  total = 0.0;
  for (std::size_t k = 0; k < two.size(); ++k) {
    total += two[k].weight;
    if (k > 0) CHECK(two[k].weight <= two[k - 1].weight * (1 + 1e-12));
    const std::vector<int> sw{two[k].n[1], two[k].n[0]};
    CHECK(std::any_of(two.begin(), two.end(), [&](const FockConfig& f) { return f.n == sw; }));
  }
  CHECK(total >= 0.999);
  CHECK_THROWS_AS(thermal_ensemble(ThermalSpec{2.0, 0.999}, 1, 5), ConfigError);
  CHECK_THROWS_AS(thermal_ensemble(ThermalSpec{-1.0}, 1, 5), ConfigError);
}

TEST_CASE("operator cosine identity against a direct matrix function") {
  const int n = 12;
  SimModel m;
  m.freqs = {kW, kW};
  m.eta = {0.3, 0.3};
  m.hopping = Eigen::MatrixXd::Zero(2, 2);
  DriveSchedule s;
  s.rabi = 1.0;
  s.omega = kW;
  s.pieces = {{0.0, 1e-6, 0.0, 1, 0.0}};
  BranchHamiltonian h(m, s, {1, 1}, n);
  const Eigen::MatrixXd x = 0.3 * xop(n);
  for (double c : {0.0, 0.37, 1.9, -2.4, 5.5}) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(x + c * Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd direct = eig.eigenvectors() *
                                   eig.eigenvalues().array().cos().matrix().asDiagonal() *
                                   eig.eigenvectors().transpose();
    const Eigen::MatrixXd split = std::cos(c) * h.cos_x(0) - std::sin(c) * h.sin_x(0);
    CHECK((direct - split).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("zero drive branches equal the free Hamiltonian; +- equals -+ with ions swapped") {
  auto crystal = desk_lattice(0.02);
  auto drive = DriveParams::with_periods(0.1, 0.0, 0.0, kW, 1);
  SimConfig sim;
  auto model = make_sim_model(crystal, drive, sim);
  auto sched = make_interval_schedule(drive, PhaseProfile::lamb_dicke(drive.tau));
  const int n = 5;
  auto br = build_hamiltonian_branches(model, sched, n);
  const auto h0 = br[0].lab_matrix(sched.pieces[0], 0.2e-6);
  for (const auto& b : br) CHECK((b.lab_matrix(sched.pieces[0], 0.2e-6) - h0).norm() == 0.0);

  drive.rabi = 3e7;
  sched = make_interval_schedule(drive, PhaseProfile::lamb_dicke(drive.tau));
  br = build_hamiltonian_branches(model, sched, n);
  for (double t : {0.1e-6, 0.7e-6}) {
    const auto& piece = t < 0.5e-6 ? sched.pieces[0] : sched.pieces[1];
    const auto pm = br[1].lab_matrix(piece, t);
    const auto mp = br[2].lab_matrix(piece, t);
    double worst = 0.0;
    for (int i0 = 0; i0 < n; ++i0)
      for (int i1 = 0; i1 < n; ++i1)
        for (int j0 = 0; j0 < n; ++j0)
          for (int j1 = 0; j1 < n; ++j1)
            worst = std::max(worst, std::abs(pm(i0 + n * i1, j0 + n * j1) -
                                             mp(i1 + n * i0, j1 + n * j0)));
    CHECK(worst < 1e-6);
    CHECK((pm - pm.adjoint()).norm() < 1e-6 * pm.norm());
  }
}

TEST_CASE("free evolution of a Fock state") {
  auto crystal = desk_lattice(0.02);
  auto drive = DriveParams::with_periods(0.1, 0.0, 0.0, kW, 1);
  drive.k_multiple.reset();
  drive.tau = 0.37e-6;
  SimConfig sim;
  sim.include_coupling = false;
  auto model = make_sim_model(crystal, drive, sim);
  auto sched = make_interval_schedule(drive, PhaseProfile::lamb_dicke(drive.tau));
  const int n = 6;
  BranchHamiltonian h(model, sched, {1, -1}, n);
  Eigen::MatrixXcd init = Eigen::MatrixXcd::Zero(n * n, 1);
  init(fock_index({3, 1}, n), 0) = 1.0;
  auto ev = evolve_branch(h, init);
  const cplx expect = std::polar(1.0, -kW * 4 * drive.tau);
  CHECK(std::abs(ev.states(fock_index({3, 1}, n), 0) - expect) < 1e-12);
  CHECK(std::abs(ev.states.norm() - 1.0) < 1e-12);
}

TEST_CASE("single-ion mean amplitude follows the classical trajectory") {
  auto crystal = desk_lattice(0.02);
  const double eta = 0.1;
  for (double x : {0.25, 0.5}) {
    auto drive = DriveParams::with_periods(eta, x / (eta * 1e-6), 0.2, kW, 1);
    const auto prof = PhaseProfile::lamb_dicke(drive.tau);
    SimConfig sim;
    sim.n_ions = 1;
    auto model = make_sim_model(crystal, drive, sim);
    BranchHamiltonian h(model, make_interval_schedule(drive, prof), {1, 1}, 16);
    std::vector<double> times{0.0};
    std::vector<cplx> mean{0.0};
    EvolveOptions opt;
    opt.observer = [&](double t, const std::vector<cplx>& a) {
      times.push_back(t);
      mean.push_back(a[0]);
    };
    Eigen::MatrixXcd init = Eigen::MatrixXcd::Zero(16, 1);
    init(0, 0) = 1.0;
    evolve_branch(h, init, opt);
    const auto classical = integrate_alpha(prof, drive, +1, times);
    double err = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      err = std::max(err, std::abs(mean[i] - classical[i]));
      scale = std::max(scale, std::abs(classical[i]));
    }
    CHECK(err <= 1e-2 * scale);
  }
}

TEST_CASE("branch decomposition reproduces the full spin-motion evolution") {
  // Two ions, phi2 sequence, moderate drive; full Hilbert space (4 spin states x n^2).
  auto crystal = desk_lattice(0.03);
  const double eta = 0.1;
  auto drive = DriveParams::with_periods(eta, 0.6 / (eta * 1e-6), 0.3, kW, 1);
  auto design = evaluate_design(drive, compose_sequence(1), crystal.rate.omega_I);
  SimConfig sim;
  auto model = make_sim_model(crystal, drive, sim);
  const auto sched = make_schedule(design);
  const int n = 9;
  const Eigen::Index dm = n * n;
  auto branches = build_hamiltonian_branches(model, sched, n);

  // Ion 1 is the fast motional factor, matching the branch tensor layout.
  Eigen::MatrixXcd num = Eigen::MatrixXcd::Zero(n, n);
  for (int k = 0; k < n; ++k) num(k, k) = k;
  const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(n, n);
  const Eigen::MatrixXcd x = xop(n).cast<cplx>();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(eta * xop(n));
  const Eigen::MatrixXcd cx = (eig.eigenvectors() * eig.eigenvalues().array().cos().matrix().asDiagonal() *
                               eig.eigenvectors().transpose()).cast<cplx>();
  const Eigen::MatrixXcd sx = (eig.eigenvectors() * eig.eigenvalues().array().sin().matrix().asDiagonal() *
                               eig.eigenvectors().transpose()).cast<cplx>();
  const Eigen::MatrixXcd h_free = kW * (kron(id, num) + kron(num, id)) -
                                  model.hopping(0, 1) * kron(x, x);
  Eigen::MatrixXcd sz = Eigen::MatrixXcd::Zero(2, 2);
  sz(0, 0) = 1.0;
  sz(1, 1) = -1.0;
  const Eigen::MatrixXcd i2 = Eigen::MatrixXcd::Identity(2, 2);
  const Eigen::MatrixXcd s1 = kron(sz, i2), s2 = kron(i2, sz);
  const Eigen::MatrixXcd full_free = kron(Eigen::MatrixXcd::Identity(4, 4), h_free);
  const Eigen::MatrixXcd c1 = kron(s1, kron(id, cx)), sn1 = kron(s1, kron(id, sx));
  const Eigen::MatrixXcd c2 = kron(s2, kron(cx, id)), sn2 = kron(s2, kron(sx, id));

  using State = std::vector<cplx>;
  const Eigen::Index dim = 4 * dm;
  State psi(dim, 0.0);
  for (int b = 0; b < 4; ++b) psi[b * dm] = 0.5;  // |++> x |00>
  namespace odeint = boost::numeric::odeint;
  for (const auto& piece : sched.pieces) {
    auto rhs = [&](const State& y, State& dy, double t) {
      const double c = sched.phase(piece, t);
      const Eigen::MatrixXcd h = full_free + 2.0 * sched.rabi *
                                                 (std::cos(c) * (c1 + c2) - std::sin(c) * (sn1 + sn2));
      Eigen::Map<const Eigen::VectorXcd> v(y.data(), dim);
      Eigen::Map<Eigen::VectorXcd> d(dy.data(), dim);
      d.noalias() = cplx(0, -1) * (h * v);
    };
    odeint::integrate_adaptive(
        odeint::make_controlled<odeint::runge_kutta_dopri5<State>>(1e-13, 1e-13), rhs, psi,
        piece.t0, piece.t1, 1e-10);
  }

  // Branch route. Spin index order: s1 is the slower (first kron) factor, sigma = +1 first.
  Eigen::MatrixXcd init = Eigen::MatrixXcd::Zero(dm, 1);
  init(0, 0) = 1.0;
  EvolveOptions opt;
  opt.steps_per_period = 400;
  cplx overlap = 0.0;
  for (int b = 0; b < 4; ++b) {
    auto ev = evolve_branch(branches[b], init, opt);
    for (int i0 = 0; i0 < n; ++i0)
      for (int i1 = 0; i1 < n; ++i1)
        overlap += std::conj(psi[b * dm + i0 + n * i1]) * 0.5 * ev.states(i0 + n * i1, 0);
  }
  CHECK(std::abs(1.0 - overlap) < 1e-9);
}

TEST_CASE("zero drive gives unit fidelity against the identity") {
  auto crystal = desk_lattice(0.02);
  auto drive = DriveParams::with_periods(0.1, 0.0, 0.0, kW, 1);
  auto design = evaluate_design(drive, compose_sequence(1), crystal.rate.omega_I);
  SimConfig sim;
  sim.target = GateTarget::identity;
  auto rep = numeric_gate_fidelity(crystal, design, sim, ThermalSpec{0.3, 0.99});
  CHECK(std::abs(rep.fidelity - 1.0) < 1e-9);
  CHECK(rep.dF_numeric >= -1e-10);
}

TEST_CASE("desk-scale calibrated phi8: decoupling, convergence and cutoff robustness") {
  auto crystal = desk_lattice(0.02);
  CalibrationSpec spec;
  spec.k_multiple = 1;
  spec.eta = 0.003;
  auto design = calibrate_cpf(crystal, spec, compose_sequence(3));
  SimConfig sim;
  sim.include_coupling = true;
  auto rep = numeric_gate_fidelity(crystal, design, sim, ThermalSpec{0.0});
  CHECK(rep.dF_numeric < 1e-3);
  CHECK(rep.dF_numeric > 0.0);
  for (const auto& b : rep.branches) CHECK(b.return_overlap >= 1 - 1e-3);
  REQUIRE(rep.step_halving_change);
  CHECK(*rep.step_halving_change < 1e-8);
  CHECK(rep.max_norm_drift < 1e-8);
  CHECK(rep.measured_phi_c == doctest::Approx(kPi / 4).epsilon(1e-2));

  SimConfig bigger = sim;
  bigger.fock_cutoff = rep.fock_cutoff + 4;
  auto rep2 = numeric_gate_fidelity(crystal, design, bigger, ThermalSpec{0.0});
  CHECK(std::abs(rep2.dF_numeric - rep.dF_numeric) < 0.1 * rep.dF_numeric);

  SimConfig three = sim;
  three.n_ions = 3;
  auto rep3 = numeric_gate_fidelity(crystal, design, three, ThermalSpec{0.0});
  CHECK(rep3.dF_numeric < 1e-2);
}

TEST_CASE("simulator rejects bad configurations") {
  auto crystal = desk_lattice(0.02);
  auto drive = DriveParams::with_periods(0.1, 1e7, 0.0, kW, 1);
  auto design = evaluate_design(drive, compose_sequence(1), crystal.rate.omega_I);
  SimConfig sim;
  sim.fock_cutoff = 3;
  CHECK_THROWS_AS(numeric_gate_fidelity(crystal, design, sim, ThermalSpec{}), ConfigError);
  sim.fock_cutoff = 5;
  CHECK_THROWS_AS(numeric_gate_fidelity(crystal, design, sim, ThermalSpec{3.0}), ConfigError);
  SimConfig one;
  one.n_ions = 1;
  CHECK_THROWS_AS(numeric_gate_fidelity(crystal, design, one, ThermalSpec{}), ConfigError);
  SimConfig leaky;
  leaky.fock_cutoff = 4;
  auto strong = DriveParams::with_periods(0.3, 3.0 / (0.3 * 1e-6), 0.0, kW, 1);
  auto d2 = evaluate_design(strong, compose_sequence(1), crystal.rate.omega_I);
  CHECK_THROWS_AS(numeric_gate_fidelity(crystal, d2, leaky, ThermalSpec{}), NumericalError);
}
