#include <optional>
#include <string>

#include <pybind11/complex.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lpgate/errors.hpp"
#include "lpgate/pipeline.hpp"

namespace py = pybind11;
using namespace lpgate;

namespace {

CrystalModel lattice_crystal(double spacing, double local_freq, double coordination, double mass_amu) {
  CrystalConfig c;
  c.species.mass_amu = mass_amu;
  c.geometry = UniformLattice{spacing, coordination, local_freq};
  return build_crystal(c);
}

CrystalModel chain_crystal(int ions, double axial_freq, double transverse_freq,
                           std::optional<std::array<int, 2>> targets, double mass_amu) {
  CrystalConfig c;
  c.species.mass_amu = mass_amu;
  c.geometry = Chain1D{ions, axial_freq, transverse_freq};
  c.targets = targets;
  return build_crystal(c);
}

template <class E>
E pick(const std::string& s, std::initializer_list<std::pair<const char*, E>> table, const char* what) {
  for (const auto& [name, value] : table)
    if (s == name) return value;
  throw ConfigError(std::string("unknown ") + what + " '" + s + "'");
}

GateDesign calibrate(const CrystalModel& crystal, double eta, std::optional<int> periods,
                     std::optional<double> tau, std::optional<double> rabi, int order, bool two_blocks,
                     double phi0, double target_phase, const std::string& profile, const std::string& model) {
  CalibrationSpec spec;
  spec.eta = eta;
  spec.phi0 = phi0;
  spec.target_phase = target_phase;
  spec.k_multiple = periods;
  spec.tau = tau;
  spec.rabi = rabi;
  spec.free = rabi ? FreeParameter::tau : FreeParameter::rabi;
  spec.profile = pick<ProfileKind>(profile, {{"lamb_dicke", ProfileKind::lamb_dicke}, {"designed", ProfileKind::designed}},
                                   "profile");
  spec.model = pick<PhaseModel>(model, {{"numeric", PhaseModel::numeric}, {"closed_form", PhaseModel::closed_form}},
                                "phase model");
  return calibrate_cpf(crystal, spec, compose_sequence(order, two_blocks));
}

py::dict trajectory_dict(const TrajectorySolution& s) {
  const auto c = closure_check(s);
  py::dict d;
  d["times"] = s.times;
  d["alpha_plus"] = s.alpha_plus;
  d["alpha_minus"] = s.alpha_minus;
  d["closure_residual"] = s.closure_residual;
  d["closure_normalized"] = c.normalized;
  d["max_abs_alpha"] = s.max_abs_alpha();
  return d;
}

std::string run(const std::string& command, const std::string& config_text, int workers) {
  const auto config = parse_config(config_text);
  Report r;
  if (command == "design") r = cmd_design(config);
  else if (command == "trajectory") r = cmd_trajectory(config);
  else if (command == "verify") r = cmd_verify(config);
  else if (command == "scan") r = cmd_scan(config, workers);
  else throw ConfigError("unknown command '" + command + "'");
  return r.document().dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Two-qubit gate design and verification for ion crystals.";
  m.attr("__version__") = kToolVersion;

  auto config_error = py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);
  (void)config_error;

  py::class_<InteractionRate>(m, "InteractionRate")
      .def_readonly("omega_I", &InteractionRate::omega_I)
      .def_readonly("t_p", &InteractionRate::t_p)
      .def_readonly("v_p", &InteractionRate::v_p);

  py::class_<CrystalModel>(m, "CrystalModel")
      .def_readonly("positions", &CrystalModel::positions)
      .def_readonly("local_freqs", &CrystalModel::local_freqs)
      .def_readonly("targets", &CrystalModel::targets)
      .def_readonly("spacing", &CrystalModel::spacing)
      .def_readonly("drive_freq", &CrystalModel::drive_freq)
      .def_readonly("coordination", &CrystalModel::coordination)
      .def_readonly("rate", &CrystalModel::rate)
      .def_readonly("is_lattice", &CrystalModel::is_lattice);

  m.def("interaction_rate",
        [](double spacing, double local_freq, double mass_amu) {
          IonSpecies s;
          s.mass_amu = mass_amu;
          return interaction_rate(spacing, local_freq, s);
        },
        py::arg("spacing"), py::arg("local_freq"), py::arg("mass_amu") = 171.0,
        "omega_I for spacing (m) and local frequency (rad/s).");
  m.def("spacing_for_interaction_rate",
        [](double omega_I, double local_freq, double mass_amu) {
          IonSpecies s;
          s.mass_amu = mass_amu;
          return spacing_for_interaction_rate(omega_I, local_freq, s);
        },
        py::arg("omega_I"), py::arg("local_freq"), py::arg("mass_amu") = 171.0);
  m.def("lattice_crystal", &lattice_crystal, py::arg("spacing"), py::arg("local_freq"),
        py::arg("coordination") = 2.0, py::arg("mass_amu") = 171.0);
  m.def("chain_crystal", &chain_crystal, py::arg("ions"), py::arg("axial_freq"), py::arg("transverse_freq"),
        py::arg("targets") = py::none(), py::arg("mass_amu") = 171.0);

  py::class_<DriveParams>(m, "DriveParams")
      .def(py::init([](double eta, double rabi, double phi0, double omega, int periods) {
             return DriveParams::with_periods(eta, rabi, phi0, omega, periods);
           }),
           py::arg("eta"), py::arg("rabi"), py::arg("phi0"), py::arg("omega"), py::arg("periods"))
      .def_readonly("eta", &DriveParams::eta)
      .def_readonly("rabi", &DriveParams::rabi)
      .def_readonly("phi0", &DriveParams::phi0)
      .def_readonly("omega", &DriveParams::omega)
      .def_readonly("tau", &DriveParams::tau);

  py::class_<PhaseSegment>(m, "PhaseSegment")
      .def_readonly("duration", &PhaseSegment::duration)
      .def_readonly("slope", &PhaseSegment::slope)
      .def_readonly("offset", &PhaseSegment::offset);
  py::class_<PhaseProfile>(m, "PhaseProfile")
      .def_static("lamb_dicke", &PhaseProfile::lamb_dicke, py::arg("tau"))
      .def_readonly("segments", &PhaseProfile::segments)
      .def_readonly("symmetric", &PhaseProfile::symmetric)
      .def("phase", &PhaseProfile::phase, py::arg("t"), py::arg("omega"));

  m.def("design_phase_profile",
        [](const DriveParams& d, int segments_per_half) {
          DesignOptions o;
          o.segments_per_half = segments_per_half;
          return design_phase_profile(d, o);
        },
        py::arg("drive"), py::arg("segments_per_half") = 2);
  m.def("solve_trajectory",
        [](const PhaseProfile& p, const DriveParams& d) { return trajectory_dict(solve_trajectory(p, d)); },
        py::arg("profile"), py::arg("drive"), "alpha_+- over one interval on the default grid.");
  m.def("analytic_ld_alpha", &analytic_ld_alpha, py::arg("t"), py::arg("drive"), py::arg("sigma"));
  m.def("conditional_phase",
        [](const PhaseProfile& p, const DriveParams& d, double omega_I) {
          const auto c = conditional_phase(solve_trajectory(p, d), omega_I);
          return py::make_tuple(c.phi_c, c.phi_s);
        },
        py::arg("profile"), py::arg("drive"), py::arg("omega_I"), "(phi_c, phi_s) of one interval.");
  m.def("ld_phase_closed_form", &ld_phase_closed_form, py::arg("drive"), py::arg("omega_I"));

  py::class_<GateDesign>(m, "GateDesign")
      .def_readonly("drive", &GateDesign::drive)
      .def_readonly("profile", &GateDesign::profile)
      .def_readonly("gate_time", &GateDesign::gate_time)
      .def_readonly("omega_I", &GateDesign::omega_I)
      .def_readonly("closed_form_phase", &GateDesign::closed_form_phase)
      .def_readonly("max_closure", &GateDesign::max_closure)
      .def_property_readonly("phi_c", [](const GateDesign& g) { return g.total_phase.phi_c; })
      .def_property_readonly("blocks", [](const GateDesign& g) { return g.sequence.blocks(); });

  m.def("calibrate_cpf", &calibrate, py::arg("crystal"), py::arg("eta") = 0.05, py::arg("periods") = py::none(),
        py::arg("tau") = py::none(), py::arg("rabi") = py::none(), py::arg("order") = 3,
        py::arg("two_blocks") = false, py::arg("phi0") = 0.0, py::arg("target_phase") = kPi / 4,
        py::arg("profile") = "lamb_dicke", py::arg("model") = "numeric",
        "Solve |Omega| (or tau when rabi is given) for the target conditional phase.");
  m.def("analytic_infidelity", &analytic_infidelity, py::arg("drive"), py::arg("omega_I"), py::arg("n_c"),
        py::arg("nbar"), py::arg("blocks"));
  m.def("higher_order_ld_infidelity", &higher_order_ld_infidelity, py::arg("eta"), py::arg("nbar"));

  m.def("numeric_gate_fidelity",
        [](const CrystalModel& crystal, const GateDesign& design, double nbar, int ions, int fock_cutoff,
           const std::string& target, double steps_per_period, bool convergence_check) {
          SimConfig sim;
          sim.n_ions = ions;
          sim.fock_cutoff = fock_cutoff;
          sim.steps_per_period = steps_per_period;
          sim.convergence_check = convergence_check;
          sim.target = pick<GateTarget>(target,
                                        {{"cpf", GateTarget::cpf},
                                         {"identity", GateTarget::identity},
                                         {"design_phase", GateTarget::design_phase}},
                                        "target");
          FidelityReport r;
          {
            py::gil_scoped_release release;
            r = numeric_gate_fidelity(crystal, design, sim, ThermalSpec{nbar});
          }
          py::dict d;
          d["dF_numeric"] = r.dF_numeric;
          d["fidelity"] = r.fidelity;
          d["dF_analytic"] = r.dF_analytic;
          d["measured_phi_c"] = r.measured_phi_c;
          d["fock_cutoff"] = r.fock_cutoff;
          d["thermal_states"] = r.thermal_states;
          d["step_halving_change"] = r.step_halving_change ? py::cast(*r.step_halving_change) : py::none();
          py::list overlaps;
          for (const auto& b : r.branches) overlaps.append(b.return_overlap);
          d["return_overlaps"] = overlaps;
          return d;
        },
        py::arg("crystal"), py::arg("design"), py::arg("nbar") = 0.0, py::arg("ions") = 2,
        py::arg("fock_cutoff") = 0, py::arg("target") = "cpf", py::arg("steps_per_period") = 200.0,
        py::arg("convergence_check") = true);

  m.def("normalize_config", [](const std::string& text) { return emit_config(parse_config(text)); },
        py::arg("text"), "Canonical JSON echo of a YAML/JSON config.");
  m.def("run",
        [](const std::string& command, const std::string& text, int workers) {
          py::gil_scoped_release release;
          return run(command, text, workers);
        },
        py::arg("command"), py::arg("config"), py::arg("workers") = 1,
        "Run design/trajectory/verify/scan on config text; returns the JSON report.");
}
