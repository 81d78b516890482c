"""Two-qubit gate design and verification for ion crystals."""

import json

from ._core import (
    ConfigError,
    CrystalModel,
    DriveParams,
    GateDesign,
    NumericalError,
    PhaseProfile,
    __version__,
    analytic_infidelity,
    analytic_ld_alpha,
    calibrate_cpf,
    chain_crystal,
    conditional_phase,
    design_phase_profile,
    higher_order_ld_infidelity,
    interaction_rate,
    lattice_crystal,
    ld_phase_closed_form,
    normalize_config,
    numeric_gate_fidelity,
    solve_trajectory,
    spacing_for_interaction_rate,
)
from ._core import run as _run


def run(command, config, workers=1):
    """Run a pipeline command on YAML/JSON config text and return the report as a dict."""
    return json.loads(_run(command, config, workers))


__all__ = [
    "ConfigError",
    "CrystalModel",
    "DriveParams",
    "GateDesign",
    "NumericalError",
    "PhaseProfile",
    "__version__",
    "analytic_infidelity",
    "analytic_ld_alpha",
    "calibrate_cpf",
    "chain_crystal",
    "conditional_phase",
    "design_phase_profile",
    "higher_order_ld_infidelity",
    "interaction_rate",
    "lattice_crystal",
    "ld_phase_closed_form",
    "normalize_config",
    "numeric_gate_fidelity",
    "run",
    "solve_trajectory",
    "spacing_for_interaction_rate",
]
