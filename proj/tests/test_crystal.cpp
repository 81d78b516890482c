#include <cmath>

#include "doctest.h"
#include "lpgate/constants.hpp"
#include "lpgate/crystal.hpp"
#include "lpgate/errors.hpp"

using namespace lpgate;

namespace {

CrystalConfig chain(int n, double axial, double transverse) {
  CrystalConfig c;
  c.geometry = Chain1D{n, axial, transverse};
  return c;
}

double length_scale(const IonSpecies& s, double axial) {
  return std::cbrt(s.coulomb_strength() / (s.mass_kg() * axial * axial));
}

// Transverse Coulomb energy for displacements y of a chain at axial positions x.
double transverse_energy(const std::vector<double>& x, const std::vector<double>& y, double k) {
  double v = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      v += k / std::sqrt(dx * dx + dy * dy);
    }
  return v;
}

}  // namespace

TEST_CASE("two- and three-ion equilibria match the force-balance solutions") {
  const double wz = kTwoPi * 1e6;
  const IonSpecies s;
  const double l = length_scale(s, wz);

  auto two = equilibrium_positions(chain(2, wz, 10 * wz));
  CHECK(two[1] - two[0] == doctest::Approx(std::cbrt(2.0) * l).epsilon(1e-12));
  CHECK(two[0] == doctest::Approx(-two[1]).epsilon(1e-14));

  auto three = equilibrium_positions(chain(3, wz, 10 * wz));
  CHECK(three[2] == doctest::Approx(std::cbrt(1.25) * l).epsilon(1e-12));
  CHECK(std::abs(three[1]) < 1e-12 * l);
}

TEST_CASE("larger chains are in force balance and mirror symmetric") {
  const double wz = kTwoPi * 0.5e6;
  const IonSpecies s;
  for (int n : {4, 7, 12, 20}) {
    auto x = equilibrium_positions(chain(n, wz, 20 * wz));
    const double f0 = s.coulomb_strength() / std::pow(length_scale(s, wz), 2);
    CHECK(max_force_residual(x, s, wz) < 1e-10 * f0);
    for (int i = 0; i < n; ++i) CHECK(x[i] == doctest::Approx(-x[n - 1 - i]).epsilon(1e-12));
    for (int i = 1; i < n; ++i) CHECK(x[i] > x[i - 1]);
  }
}

TEST_CASE("coupling matrix equals the finite-difference transverse Hessian") {
  const IonSpecies s;
  const double wz = kTwoPi * 1e6;
  auto x = equilibrium_positions(chain(4, wz, 10 * wz));
  const auto c = coupling_matrix(x, s);
  const double k = s.coulomb_strength();
  const double h = 1e-9;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      if (a == b) continue;
      auto e = [&](double ya, double yb) {
        std::vector<double> y(4, 0.0);
        y[a] += ya;
        y[b] += yb;
        return transverse_energy(x, y, k);
      };
      const double d2 = (e(h, h) - e(h, -h) - e(-h, h) + e(-h, -h)) / (4 * h * h);
      CHECK(c(a, b) == doctest::Approx(d2 / s.mass_kg()).epsilon(1e-5));
      CHECK(c(a, b) == doctest::Approx(c(b, a)));
    }
}

TEST_CASE("local frequencies include the transverse Coulomb softening") {
  const IonSpecies s;
  const double wz = kTwoPi * 1e6;
  const double wt = kTwoPi * 5e6;
  auto x = equilibrium_positions(chain(2, wz, wt));
  const double d = x[1] - x[0];
  const auto w = local_frequencies(x, s, wt);
  const double expected = std::sqrt(wt * wt - s.coulomb_strength() / (s.mass_kg() * d * d * d));
  CHECK(w[0] == doctest::Approx(expected).epsilon(1e-14));
  CHECK(w[1] == doctest::Approx(expected).epsilon(1e-14));
  CHECK(w[0] < wt);

  CHECK_THROWS_AS(local_frequencies(x, s, 0.5 * wz), ConfigError);
}

TEST_CASE("interaction rate at the reference spacings") {
  const IonSpecies s;
  const double w = kTwoPi * 3e6;
  CHECK(interaction_rate(8.8e-6, w, s).omega_I / kTwoPi == doctest::Approx(10.07e3).epsilon(2e-3));
  CHECK(interaction_rate(12.4e-6, w, s).omega_I / kTwoPi == doctest::Approx(3.60e3).epsilon(3e-3));

  const auto r = interaction_rate(8.8e-6, w, s);
  CHECK(r.omega_I * w * r.t_p * r.t_p == doctest::Approx(1.0));
  CHECK(r.v_p * r.t_p == doctest::Approx(8.8e-6));
}

TEST_CASE("interaction rate scales as d^-3 and inverts exactly") {
  const IonSpecies s;
  const double w = kTwoPi * 3e6;
  const double r1 = interaction_rate(10e-6, w, s).omega_I;
  const double r2 = interaction_rate(20e-6, w, s).omega_I;
  CHECK(r1 / r2 == doctest::Approx(8.0).epsilon(1e-13));
  const double d = spacing_for_interaction_rate(kTwoPi * 1e4, w, s);
  CHECK(interaction_rate(d, w, s).omega_I == doctest::Approx(kTwoPi * 1e4).epsilon(1e-13));
}

TEST_CASE("build_crystal targets and lattice model") {
  const double wz = kTwoPi * 1e6;
  auto m = build_crystal(chain(5, wz, 10 * wz));
  CHECK(m.targets == std::array<int, 2>{1, 2});
  CHECK(m.coordination == 2.0);
  CHECK(m.spacing == doctest::Approx(m.positions[2] - m.positions[1]));

  CrystalConfig lat;
  lat.geometry = UniformLattice{12.4e-6, 5.6, kTwoPi * 3e6};
  auto ml = build_crystal(lat);
  CHECK(ml.is_lattice);
  CHECK(ml.coordination == 5.6);
  CHECK(ml.rate.omega_I / kTwoPi == doctest::Approx(3.60e3).epsilon(3e-3));
  CHECK(ml.coupling(0, 1) / ml.coupling(0, 2) == doctest::Approx(8.0));
}

TEST_CASE("invalid crystal configurations are rejected") {
  CHECK_THROWS_AS(build_crystal(chain(0, 1.0, 2.0)), ConfigError);
  CHECK_THROWS_AS(build_crystal(chain(3, -1.0, 2.0)), ConfigError);
  auto c = chain(3, 1e6, 1e7);
  c.targets = std::array<int, 2>{1, 1};
  CHECK_THROWS_AS(build_crystal(c), ConfigError);
  CrystalConfig bad;
  bad.species.mass_amu = -1.0;
  bad.geometry = UniformLattice{1e-5, 2.0, 1e7};
  CHECK_THROWS_AS(build_crystal(bad), ConfigError);
}
