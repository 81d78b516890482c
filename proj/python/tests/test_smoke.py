import cmath
import math

import pytest

import lpgate

TWO_PI = 2 * math.pi
W3 = TWO_PI * 3e6

CONFIG_1D = """
crystal:
  lattice: {spacing: 8.8 um, coordination: 2.0, local_freq: 3 MHz}
drive: {eta: 0.05, rabi: free, periods: 3}
sequence: {order: 3, two_blocks: true}
thermal: {nbar: 1.0}
"""


def test_interaction_rate_1d_point():
    rate = lpgate.interaction_rate(8.8e-6, W3)
    assert rate.omega_I / TWO_PI == pytest.approx(10e3, rel=0.02)
    d = lpgate.spacing_for_interaction_rate(rate.omega_I, W3)
    assert d == pytest.approx(8.8e-6, rel=1e-12)


def test_calibration_1d():
    crystal = lpgate.lattice_crystal(8.8e-6, W3, coordination=2.0)
    design = lpgate.calibrate_cpf(crystal, eta=0.05, periods=3, two_blocks=True)
    assert design.drive.rabi / TWO_PI == pytest.approx(6.8e6, rel=0.05)
    assert design.gate_time == pytest.approx(16e-6, rel=1e-12)
    assert design.phi_c == pytest.approx(math.pi / 4, rel=1e-8)
    df = lpgate.analytic_infidelity(design.drive, design.omega_I, 2.0, 1.0, design.blocks)
    assert df == pytest.approx(1.0e-4, rel=0.15)


def test_trajectory_matches_analytic_in_weak_drive():
    drive = lpgate.DriveParams(eta=0.01, rabi=0.001 * W3 / 0.01, phi0=0.3, omega=W3, periods=1)
    sol = lpgate.solve_trajectory(lpgate.PhaseProfile.lamb_dicke(drive.tau), drive)
    err = max(
        abs(a - lpgate.analytic_ld_alpha(t, drive, 1)) for t, a in zip(sol["times"], sol["alpha_plus"])
    )
    assert err <= 1e-3 * sol["max_abs_alpha"]
    assert sol["alpha_plus"][0] == 0


def test_designed_profile_closes():
    drive = lpgate.DriveParams(eta=0.1, rabi=TWO_PI * 1.2e6, phi0=0.0, omega=TWO_PI * 1e6, periods=1)
    profile = lpgate.design_phase_profile(drive)
    sol = lpgate.solve_trajectory(profile, drive)
    assert sol["closure_normalized"] < 1e-6
    assert all(isinstance(a, complex) for a in sol["alpha_minus"][:3])


def test_numeric_fidelity_desk_point():
    crystal = lpgate.lattice_crystal(
        lpgate.spacing_for_interaction_rate(0.02 * TWO_PI * 1e6, TWO_PI * 1e6), TWO_PI * 1e6
    )
    design = lpgate.calibrate_cpf(crystal, eta=0.003, periods=1)
    rep = lpgate.numeric_gate_fidelity(crystal, design)
    assert 0 < rep["dF_numeric"] < 1e-3
    assert min(rep["return_overlaps"]) >= 1 - 1e-3
    assert rep["step_halving_change"] < 1e-8


def test_run_design_is_deterministic():
    a = lpgate.run("design", CONFIG_1D)
    b = lpgate.run("design", CONFIG_1D)
    a.pop("timing")
    b.pop("timing")
    assert a == b
    assert a["design"]["gate_time_s"] == pytest.approx(16e-6)
    echo = lpgate.normalize_config(CONFIG_1D)
    assert lpgate.normalize_config(echo) == echo


def test_errors_map_to_python_exceptions():
    with pytest.raises(lpgate.ConfigError):
        lpgate.run("design", CONFIG_1D.replace("periods: 3", "tau: free"))
    with pytest.raises(ValueError):
        lpgate.run("nonsense", CONFIG_1D)
    with pytest.raises(lpgate.NumericalError):
        lpgate.run("design", CONFIG_1D.replace("periods: 3", "periods: 3, rabi_cap: 10 kHz"))
