#include "lpgate/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "json.hpp"
#include <yaml-cpp/yaml.h>

#include "lpgate/errors.hpp"

namespace lpgate {

namespace {

struct UnitEntry {
  const char* symbol;
  Dimension dim;
  double scale;
};

// The micro prefix is accepted as ASCII "u" and as both Unicode micro code points.
constexpr UnitEntry kUnits[] = {
    {"Hz", Dimension::frequency, 1.0},       {"kHz", Dimension::frequency, 1e3},
    {"MHz", Dimension::frequency, 1e6},      {"GHz", Dimension::frequency, 1e9},
    {"m", Dimension::length, 1.0},           {"mm", Dimension::length, 1e-3},
    {"um", Dimension::length, 1e-6},         {"\xC2\xB5m", Dimension::length, 1e-6},
    {"\xCE\xBCm", Dimension::length, 1e-6},  {"nm", Dimension::length, 1e-9},
    {"s", Dimension::time, 1.0},             {"ms", Dimension::time, 1e-3},
    {"us", Dimension::time, 1e-6},           {"\xC2\xB5s", Dimension::time, 1e-6},
    {"\xCE\xBCs", Dimension::time, 1e-6},    {"ns", Dimension::time, 1e-9},
    {"amu", Dimension::mass, 1.0},           {"u", Dimension::mass, 1.0},
    {"rad", Dimension::angle, 1.0},          {"deg", Dimension::angle, kPi / 180.0},
    {"pi", Dimension::angle, kPi},
};

const char* dimension_name(Dimension dim) {
  switch (dim) {
    case Dimension::frequency: return "frequency";
    case Dimension::length: return "length";
    case Dimension::time: return "time";
    case Dimension::mass: return "mass";
    case Dimension::angle: return "angle";
    default: return "dimensionless";
  }
}

const char* canonical_unit(Dimension dim) {
  switch (dim) {
    case Dimension::frequency: return "Hz";
    case Dimension::length: return "m";
    case Dimension::time: return "s";
    case Dimension::mass: return "amu";
    case Dimension::angle: return "rad";
    default: return "";
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class E>
struct EnumName {
  E value;
  const char* name;
};

constexpr EnumName<PhaseModel> kPhaseModels[] = {{PhaseModel::numeric, "numeric"},
                                                 {PhaseModel::closed_form, "closed_form"}};
constexpr EnumName<ProfileKind> kProfiles[] = {{ProfileKind::lamb_dicke, "lamb_dicke"},
                                               {ProfileKind::designed, "designed"}};
constexpr EnumName<GateTarget> kTargets[] = {{GateTarget::cpf, "cpf"},
                                             {GateTarget::identity, "identity"},
                                             {GateTarget::design_phase, "design_phase"}};
constexpr EnumName<ScanAxisKind> kAxes[] = {{ScanAxisKind::spacing, "spacing"},
                                            {ScanAxisKind::frequency, "frequency"},
                                            {ScanAxisKind::periods, "periods"},
                                            {ScanAxisKind::nbar, "nbar"},
                                            {ScanAxisKind::eta, "eta"}};
constexpr EnumName<OutputFormat> kFormats[] = {{OutputFormat::json, "json"},
                                               {OutputFormat::csv, "csv"}};

template <class E, std::size_t N>
const char* enum_name(const EnumName<E> (&table)[N], E v) {
  for (const auto& e : table)
    if (e.value == v) return e.name;
  return "?";
}

template <class E, std::size_t N>
E enum_value(const EnumName<E> (&table)[N], const std::string& s, const std::string& where) {
  for (const auto& e : table)
    if (s == e.name) return e.value;
  std::string allowed;
  for (const auto& e : table) allowed += std::string(allowed.empty() ? "" : ", ") + e.name;
  throw ConfigError(where + ": unknown value '" + s + "' (expected one of " + allowed + ")");
}

Dimension axis_dimension(ScanAxisKind kind) {
  switch (kind) {
    case ScanAxisKind::spacing: return Dimension::length;
    case ScanAxisKind::frequency: return Dimension::frequency;
    default: return Dimension::none;
  }
}

// Schema-checked view of one YAML mapping.
class Section {
 public:
  Section(YAML::Node node, std::string path, std::initializer_list<const char*> keys)
      : node_(std::move(node)), path_(std::move(path)) {
    if (!node_.IsMap()) throw ConfigError(path_ + ": expected a mapping");
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) throw ConfigError(path_ + ": unknown key '" + key + "'");
    }
  }

  bool has(const char* key) const { return static_cast<bool>(node_[key]); }
  YAML::Node node(const char* key) const { return node_[key]; }
  std::string where(const char* key) const { return path_ + "." + key; }

  std::string text(const char* key) const {
    const auto n = node_[key];
    if (!n.IsScalar()) throw ConfigError(where(key) + ": expected a scalar");
    return n.as<std::string>();
  }

  bool is_free(const char* key) const { return has(key) && text(key) == "free"; }

  double quantity(const char* key, Dimension dim) const {
    try {
      return parse_quantity(text(key), dim);
    } catch (const ConfigError& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  double number(const char* key) const { return quantity(key, Dimension::none); }

  int integer(const char* key) const {
    const double v = number(key);
    if (v != std::floor(v) || std::abs(v) > 1e9) throw ConfigError(where(key) + ": expected an integer");
    return static_cast<int>(v);
  }

  bool boolean(const char* key) const {
    const auto s = text(key);
    if (s == "true") return true;
    if (s == "false") return false;
    throw ConfigError(where(key) + ": expected true or false");
  }

 private:
  YAML::Node node_;
  std::string path_;
};

std::vector<double> parse_values(const Section& s, const char* key, Dimension dim) {
  const auto n = s.node(key);
  if (!n.IsSequence()) throw ConfigError(s.where(key) + ": expected a list");
  std::vector<double> out;
  for (const auto& item : n) {
    if (!item.IsScalar()) throw ConfigError(s.where(key) + ": expected scalar entries");
    try {
      out.push_back(parse_quantity(item.as<std::string>(), dim));
    } catch (const ConfigError& e) {
      throw ConfigError(s.where(key) + ": " + e.what());
    }
  }
  return out;
}

CrystalSection parse_crystal(const YAML::Node& node) {
  Section s(node, "crystal", {"mass", "charge", "lattice", "chain"});
  CrystalSection c;
  if (s.has("mass")) c.mass_amu = s.quantity("mass", Dimension::mass);
  if (s.has("charge")) c.charge = s.integer("charge");
  if (s.has("lattice")) {
    Section l(s.node("lattice"), "crystal.lattice",
              {"spacing", "interaction_rate", "coordination", "local_freq"});
    LatticeSection lat;
    if (l.has("spacing")) lat.spacing = l.quantity("spacing", Dimension::length);
    if (l.has("interaction_rate"))
      lat.interaction_rate = l.quantity("interaction_rate", Dimension::frequency);
    if (l.has("coordination")) lat.coordination = l.number("coordination");
    if (!l.has("local_freq")) throw ConfigError("crystal.lattice.local_freq is required");
    lat.local_freq = l.quantity("local_freq", Dimension::frequency);
    c.lattice = lat;
  }
  if (s.has("chain")) {
    Section ch(s.node("chain"), "crystal.chain",
               {"ions", "axial_freq", "transverse_freq", "targets", "coordination"});
    ChainSection chain;
    if (ch.has("ions")) chain.ions = ch.integer("ions");
    if (!ch.has("axial_freq") || !ch.has("transverse_freq"))
      throw ConfigError("crystal.chain needs axial_freq and transverse_freq");
    chain.axial_freq = ch.quantity("axial_freq", Dimension::frequency);
    chain.transverse_freq = ch.quantity("transverse_freq", Dimension::frequency);
    if (ch.has("targets")) {
      const auto t = parse_values(ch, "targets", Dimension::none);
      if (t.size() != 2 || t[0] != std::floor(t[0]) || t[1] != std::floor(t[1]))
        throw ConfigError("crystal.chain.targets: expected two ion indices");
      chain.targets = std::array<int, 2>{static_cast<int>(t[0]), static_cast<int>(t[1])};
    }
    if (ch.has("coordination")) chain.coordination = ch.number("coordination");
    c.chain = chain;
  }
  return c;
}

DriveSection parse_drive(const YAML::Node& node) {
  Section s(node, "drive",
            {"eta", "rabi", "periods", "tau", "phi0", "rabi_cap", "tau_cap", "target_phase",
             "phase_model", "profile", "segments_per_half"});
  DriveSection d;
  if (s.has("eta")) d.eta = s.number("eta");
  if (!s.has("rabi")) throw ConfigError("drive.rabi is required (a frequency or 'free')");
  if (!s.is_free("rabi")) d.rabi = s.quantity("rabi", Dimension::frequency);
  if (s.has("periods") && s.has("tau")) throw ConfigError("drive: give either periods or tau");
  if (s.has("periods")) {
    d.tau_kind = TauKind::periods;
    d.periods = s.integer("periods");
  } else if (s.is_free("tau")) {
    d.tau_kind = TauKind::free;
  } else if (s.has("tau")) {
    d.tau_kind = TauKind::seconds;
    d.tau = s.quantity("tau", Dimension::time);
  } else {
    throw ConfigError("drive: one of periods or tau is required");
  }
  if (s.has("phi0")) d.phi0 = s.quantity("phi0", Dimension::angle);
  if (s.has("rabi_cap")) d.rabi_cap = s.quantity("rabi_cap", Dimension::frequency);
  if (s.has("tau_cap")) d.tau_cap = s.quantity("tau_cap", Dimension::time);
  if (s.has("target_phase")) d.target_phase = s.quantity("target_phase", Dimension::angle);
  if (s.has("phase_model"))
    d.phase_model = enum_value(kPhaseModels, s.text("phase_model"), s.where("phase_model"));
  if (s.has("profile")) d.profile = enum_value(kProfiles, s.text("profile"), s.where("profile"));
  if (s.has("segments_per_half")) d.segments_per_half = s.integer("segments_per_half");
  return d;
}

SequenceSection parse_sequence(const YAML::Node& node) {
  Section s(node, "sequence", {"order", "two_blocks"});
  SequenceSection q;
  if (s.has("order")) q.order = s.integer("order");
  if (s.has("two_blocks")) q.two_blocks = s.boolean("two_blocks");
  return q;
}

ThermalSection parse_thermal(const YAML::Node& node) {
  Section s(node, "thermal", {"nbar", "weight_cutoff"});
  ThermalSection t;
  if (s.has("nbar")) t.nbar = s.number("nbar");
  if (s.has("weight_cutoff")) t.weight_cutoff = s.number("weight_cutoff");
  return t;
}

SimSection parse_sim(const YAML::Node& node) {
  Section s(node, "sim",
            {"ions", "fock_cutoff", "steps_per_period", "include_coupling", "target",
             "convergence_check", "leakage_tolerance", "nbar_sweep"});
  SimSection m;
  if (s.has("ions")) m.ions = s.integer("ions");
  if (s.has("fock_cutoff")) m.fock_cutoff = s.integer("fock_cutoff");
  if (s.has("steps_per_period")) m.steps_per_period = s.number("steps_per_period");
  if (s.has("include_coupling")) m.include_coupling = s.boolean("include_coupling");
  if (s.has("target")) m.target = enum_value(kTargets, s.text("target"), s.where("target"));
  if (s.has("convergence_check")) m.convergence_check = s.boolean("convergence_check");
  if (s.has("leakage_tolerance")) m.leakage_tolerance = s.number("leakage_tolerance");
  if (s.has("nbar_sweep")) m.nbar_sweep = parse_values(s, "nbar_sweep", Dimension::none);
  return m;
}

ScanSection parse_scan(const YAML::Node& node) {
  Section s(node, "scan", {"axes", "numeric"});
  ScanSection sc;
  if (s.has("numeric")) sc.numeric = s.boolean("numeric");
  if (!s.has("axes") || !s.node("axes").IsSequence())
    throw ConfigError("scan.axes: expected a list of axes");
  int i = 0;
  for (const auto& a : s.node("axes")) {
    const std::string path = "scan.axes[" + std::to_string(i++) + "]";
    Section ax(a, path, {"name", "values", "from", "to", "points", "log"});
    ScanAxis axis;
    if (!ax.has("name")) throw ConfigError(path + ".name is required");
    axis.kind = enum_value(kAxes, ax.text("name"), ax.where("name"));
    const Dimension dim = axis_dimension(axis.kind);
    if (ax.has("values")) {
      if (ax.has("from") || ax.has("to") || ax.has("points"))
        throw ConfigError(path + ": give either values or from/to/points");
      axis.values = parse_values(ax, "values", dim);
    } else {
      if (!ax.has("from") || !ax.has("to") || !ax.has("points"))
        throw ConfigError(path + ": needs values or from, to and points");
      const double from = ax.quantity("from", dim), to = ax.quantity("to", dim);
      const int points = ax.integer("points");
      const bool log = ax.has("log") && ax.boolean("log");
      if (points < 1) throw ConfigError(path + ".points must be at least 1");
      if (log && !(from > 0.0 && to > 0.0)) throw ConfigError(path + ": log range needs positive ends");
      for (int k = 0; k < points; ++k) {
        const double f = points == 1 ? 0.0 : static_cast<double>(k) / (points - 1);
        axis.values.push_back(log ? from * std::pow(to / from, f) : from + (to - from) * f);
      }
    }
    if (axis.values.empty()) throw ConfigError(path + ": no values");
    if (axis.kind == ScanAxisKind::periods)
      for (double v : axis.values)
        if (v != std::floor(v)) throw ConfigError(path + ": periods must be integers");
    sc.axes.push_back(std::move(axis));
  }
  return sc;
}

OutputSection parse_output(const YAML::Node& node) {
  Section s(node, "output", {"dir", "format"});
  OutputSection o;
  if (s.has("dir")) o.dir = s.text("dir");
  if (s.has("format")) o.format = enum_value(kFormats, s.text("format"), s.where("format"));
  return o;
}

}  // namespace

double parse_quantity(const std::string& text, Dimension dim) {
  const std::string s = trim(text);
  double value = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc()) throw ConfigError("cannot parse number in '" + text + "'");
  const std::string unit = trim(std::string(res.ptr, end));
  if (!std::isfinite(value)) throw ConfigError("non-finite value '" + text + "'");
  if (unit.empty()) {
    if (dim == Dimension::none || dim == Dimension::angle) return value;
    throw ConfigError("missing " + std::string(dimension_name(dim)) + " unit in '" + text + "'");
  }
  for (const auto& u : kUnits) {
    if (unit == u.symbol) {
      if (u.dim != dim)
        throw ConfigError("unit '" + unit + "' is not a " + dimension_name(dim) + " unit");
      return value * u.scale;
    }
  }
  throw ConfigError("unknown unit '" + unit + "' in '" + text + "'");
}

std::string format_quantity(double value, Dimension dim) {
  const std::string num = format_number(value);
  if (dim == Dimension::none) return num;
  return num + " " + canonical_unit(dim);
}

int DriveSection::free_count() const {
  return (rabi ? 0 : 1) + (tau_kind == TauKind::free ? 1 : 0);
}

void RunConfig::validate() const {
  if (crystal.lattice.has_value() == crystal.chain.has_value())
    throw ConfigError("crystal: exactly one of lattice or chain is required");
  if (crystal.lattice &&
      crystal.lattice->spacing.has_value() == crystal.lattice->interaction_rate.has_value())
    throw ConfigError("crystal.lattice: give exactly one of spacing or interaction_rate");
  if (drive.free_count() > 1)
    throw ConfigError("drive: at most one free calibration parameter (rabi or tau) is allowed");
  if (drive.tau_kind == TauKind::periods && drive.periods < 1)
    throw ConfigError("drive.periods must be a positive integer");
  if (drive.segments_per_half < 1) throw ConfigError("drive.segments_per_half must be positive");
  if (sequence.order < 1 || sequence.order > 3)
    throw ConfigError("sequence.order must be 1, 2 or 3");
  to_thermal(thermal).validate();
  if (sim) to_sim_config(*sim).validate();
  if (sim)
    for (double n : sim->nbar_sweep)
      if (!(n >= 0.0)) throw ConfigError("sim.nbar_sweep entries must be non-negative");
  if (scan) {
    if (scan->axes.empty() || scan->axes.size() > 2)
      throw ConfigError("scan: one or two axes are required");
    if (scan->axes.size() == 2 && scan->axes[0].kind == scan->axes[1].kind)
      throw ConfigError("scan: the two axes must differ");
  }
  if (output.dir.empty()) throw ConfigError("output.dir must not be empty");
}

RunConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config syntax error: ") + e.what());
  }
  try {
    Section s(root, "config", {"crystal", "drive", "sequence", "thermal", "sim", "scan", "output"});
    if (!s.has("crystal")) throw ConfigError("config: crystal section is required");
    if (!s.has("drive")) throw ConfigError("config: drive section is required");
    RunConfig c;
    c.crystal = parse_crystal(s.node("crystal"));
    c.drive = parse_drive(s.node("drive"));
    if (s.has("sequence")) c.sequence = parse_sequence(s.node("sequence"));
    if (s.has("thermal")) c.thermal = parse_thermal(s.node("thermal"));
    if (s.has("sim")) c.sim = parse_sim(s.node("sim"));
    if (s.has("scan")) c.scan = parse_scan(s.node("scan"));
    if (s.has("output")) c.output = parse_output(s.node("output"));
    c.validate();
    return c;
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config structure error: ") + e.what());
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string emit_config(const RunConfig& c) {
  using nlohmann::ordered_json;
  auto q = [](double v, Dimension d) { return format_quantity(v, d); };
  ordered_json j;

  ordered_json cr;
  cr["mass"] = q(c.crystal.mass_amu, Dimension::mass);
  cr["charge"] = c.crystal.charge;
  if (c.crystal.lattice) {
    const auto& l = *c.crystal.lattice;
    ordered_json lj;
    if (l.spacing) lj["spacing"] = q(*l.spacing, Dimension::length);
    if (l.interaction_rate) lj["interaction_rate"] = q(*l.interaction_rate, Dimension::frequency);
    lj["coordination"] = q(l.coordination, Dimension::none);
    lj["local_freq"] = q(l.local_freq, Dimension::frequency);
    cr["lattice"] = lj;
  }
  if (c.crystal.chain) {
    const auto& ch = *c.crystal.chain;
    ordered_json cj;
    cj["ions"] = ch.ions;
    cj["axial_freq"] = q(ch.axial_freq, Dimension::frequency);
    cj["transverse_freq"] = q(ch.transverse_freq, Dimension::frequency);
    if (ch.targets) cj["targets"] = {(*ch.targets)[0], (*ch.targets)[1]};
    if (ch.coordination) cj["coordination"] = q(*ch.coordination, Dimension::none);
    cr["chain"] = cj;
  }
  j["crystal"] = cr;

  const auto& d = c.drive;
  ordered_json dj;
  dj["eta"] = q(d.eta, Dimension::none);
  dj["rabi"] = d.rabi ? q(*d.rabi, Dimension::frequency) : "free";
  if (d.tau_kind == TauKind::periods) dj["periods"] = d.periods;
  if (d.tau_kind == TauKind::seconds) dj["tau"] = q(d.tau, Dimension::time);
  if (d.tau_kind == TauKind::free) dj["tau"] = "free";
  dj["phi0"] = q(d.phi0, Dimension::angle);
  if (d.rabi_cap) dj["rabi_cap"] = q(*d.rabi_cap, Dimension::frequency);
  if (d.tau_cap) dj["tau_cap"] = q(*d.tau_cap, Dimension::time);
  dj["target_phase"] = q(d.target_phase, Dimension::angle);
  dj["phase_model"] = enum_name(kPhaseModels, d.phase_model);
  dj["profile"] = enum_name(kProfiles, d.profile);
  dj["segments_per_half"] = d.segments_per_half;
  j["drive"] = dj;

  j["sequence"] = {{"order", c.sequence.order}, {"two_blocks", c.sequence.two_blocks}};
  j["thermal"] = {{"nbar", q(c.thermal.nbar, Dimension::none)},
                  {"weight_cutoff", q(c.thermal.weight_cutoff, Dimension::none)}};
  if (c.sim) {
    const auto& m = *c.sim;
    ordered_json mj;
    mj["ions"] = m.ions;
    mj["fock_cutoff"] = m.fock_cutoff;
    mj["steps_per_period"] = q(m.steps_per_period, Dimension::none);
    mj["include_coupling"] = m.include_coupling;
    mj["target"] = enum_name(kTargets, m.target);
    mj["convergence_check"] = m.convergence_check;
    mj["leakage_tolerance"] = q(m.leakage_tolerance, Dimension::none);
    mj["nbar_sweep"] = ordered_json::array();
    for (double n : m.nbar_sweep) mj["nbar_sweep"].push_back(q(n, Dimension::none));
    j["sim"] = mj;
  }
  if (c.scan) {
    ordered_json sj;
    sj["axes"] = ordered_json::array();
    for (const auto& a : c.scan->axes) {
      ordered_json aj;
      aj["name"] = enum_name(kAxes, a.kind);
      aj["values"] = ordered_json::array();
      for (double v : a.values) aj["values"].push_back(q(v, axis_dimension(a.kind)));
      sj["axes"].push_back(aj);
    }
    sj["numeric"] = c.scan->numeric;
    j["scan"] = sj;
  }
  j["output"] = {{"dir", c.output.dir}, {"format", enum_name(kFormats, c.output.format)}};
  return j.dump(2);
}

CrystalConfig to_crystal_config(const CrystalSection& s) {
  CrystalConfig c;
  c.species.mass_amu = s.mass_amu;
  c.species.charge = s.charge;
  if (s.lattice) {
    const auto& l = *s.lattice;
    UniformLattice lat;
    lat.local_freq = kTwoPi * l.local_freq;
    lat.coordination = l.coordination;
    if (l.spacing) {
      lat.spacing = *l.spacing;
    } else {
      c.species.validate();
      if (!(*l.interaction_rate > 0.0) || !(lat.local_freq > 0.0))
        throw ConfigError("crystal.lattice: interaction_rate and local_freq must be positive");
      lat.spacing = spacing_for_interaction_rate(kTwoPi * *l.interaction_rate, lat.local_freq, c.species);
    }
    c.geometry = lat;
  } else if (s.chain) {
    const auto& ch = *s.chain;
    c.geometry = Chain1D{ch.ions, kTwoPi * ch.axial_freq, kTwoPi * ch.transverse_freq};
    c.targets = ch.targets;
    c.coordination = ch.coordination;
  } else {
    throw ConfigError("crystal: exactly one of lattice or chain is required");
  }
  c.validate();
  return c;
}

CalibrationSpec to_calibration_spec(const DriveSection& d) {
  if (d.free_count() != 1)
    throw ConfigError("calibration needs exactly one free parameter (rabi or tau); found " +
                      std::to_string(d.free_count()));
  CalibrationSpec spec;
  spec.eta = d.eta;
  spec.phi0 = d.phi0;
  spec.target_phase = d.target_phase;
  spec.model = d.phase_model;
  spec.profile = d.profile;
  spec.design.segments_per_half = d.segments_per_half;
  if (d.rabi_cap) spec.rabi_cap = kTwoPi * *d.rabi_cap;
  if (d.tau_cap) spec.tau_cap = *d.tau_cap;
  if (d.rabi) {
    spec.free = FreeParameter::tau;
    spec.rabi = kTwoPi * *d.rabi;
  } else {
    spec.free = FreeParameter::rabi;
    if (d.tau_kind == TauKind::periods) spec.k_multiple = d.periods;
    if (d.tau_kind == TauKind::seconds) spec.tau = d.tau;
  }
  return spec;
}

DriveParams to_drive_params(const DriveSection& d, double omega) {
  if (d.free_count() != 0) throw ConfigError("drive has a free parameter; calibrate it first");
  DriveParams p;
  if (d.tau_kind == TauKind::periods) {
    p = DriveParams::with_periods(d.eta, kTwoPi * *d.rabi, d.phi0, omega, d.periods);
  } else {
    p.eta = d.eta;
    p.rabi = kTwoPi * *d.rabi;
    p.phi0 = d.phi0;
    p.omega = omega;
    p.tau = d.tau;
  }
  p.validate();
  return p;
}

SequenceSpec to_sequence(const SequenceSection& s) {
  if (s.order < 1 || s.order > 3) throw ConfigError("sequence.order must be 1, 2 or 3");
  return compose_sequence(s.order, s.two_blocks);
}

ThermalSpec to_thermal(const ThermalSection& s) { return ThermalSpec{s.nbar, s.weight_cutoff}; }

SimConfig to_sim_config(const SimSection& s) {
  SimConfig c;
  c.n_ions = s.ions;
  c.fock_cutoff = s.fock_cutoff;
  c.steps_per_period = s.steps_per_period;
  c.include_coupling = s.include_coupling;
  c.target = s.target;
  c.convergence_check = s.convergence_check;
  c.leakage_tolerance = s.leakage_tolerance;
  return c;
}

std::string to_string(ScanAxisKind kind) { return enum_name(kAxes, kind); }
std::string to_string(GateTarget target) { return enum_name(kTargets, target); }

}  // namespace lpgate
