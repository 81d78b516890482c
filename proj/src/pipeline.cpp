#include "lpgate/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <thread>

#include "lpgate/errors.hpp"

namespace lpgate {

namespace {

using Clock = std::chrono::steady_clock;

std::string cell(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double hz(double omega) { return omega / kTwoPi; }

Json base_payload(const std::string& command, const RunConfig& config) {
  Json j;
  j["tool"] = {{"name", "lpgate"}, {"version", kToolVersion}};
  j["command"] = command;
  j["config"] = Json::parse(emit_config(config));
  return j;
}

Json model_json(const CrystalModel& m) {
  Json j;
  j["kind"] = m.is_lattice ? "lattice" : "chain";
  j["ions"] = m.positions.size();
  j["mass_amu"] = m.species.mass_amu;
  j["positions_m"] = m.positions;
  Json freqs = Json::array();
  for (double w : m.local_freqs) freqs.push_back(hz(w));
  j["local_freqs_hz"] = freqs;
  j["targets"] = {m.targets[0], m.targets[1]};
  j["spacing_m"] = m.spacing;
  j["drive_freq_hz"] = hz(m.drive_freq);
  j["coordination"] = m.coordination;
  j["omega_I_hz"] = hz(m.rate.omega_I);
  j["t_p_s"] = m.rate.t_p;
  j["v_p_m_per_s"] = m.rate.v_p;
  return j;
}

int sequence_order(const SequenceSpec& s) {
  return static_cast<int>(std::lround(std::log2(s.intervals_per_block())));
}

Json design_json(const GateDesign& g) {
  Json j;
  j["rabi_hz"] = hz(g.drive.rabi);
  j["rabi_rad_per_s"] = g.drive.rabi;
  j["eta"] = g.drive.eta;
  j["phi0_rad"] = g.drive.phi0;
  j["tau_s"] = g.drive.tau;
  j["periods"] = g.k_effective();
  j["gate_time_s"] = g.gate_time;
  j["omega_I_hz"] = hz(g.omega_I);
  Json seq;
  seq["order"] = sequence_order(g.sequence);
  seq["blocks"] = g.sequence.blocks();
  seq["phase_flips_rad"] = g.sequence.phase_flips;
  if (g.sequence.second_block_offset) seq["second_block_offset_rad"] = *g.sequence.second_block_offset;
  seq["intervals"] = g.sequence.total_intervals();
  j["sequence"] = seq;
  Json prof;
  prof["kind"] = g.profile_kind == ProfileKind::designed ? "designed" : "lamb_dicke";
  prof["symmetric"] = g.profile.symmetric;
  prof["segments"] = Json::array();
  for (const auto& s : g.profile.segments)
    prof["segments"].push_back({{"duration_s", s.duration}, {"slope", s.slope}, {"offset_rad", s.offset}});
  j["profile"] = prof;
  j["phase_model"] = g.model == PhaseModel::numeric ? "numeric" : "closed_form";
  j["phi_c"] = g.total_phase.phi_c;
  j["phi_s"] = g.total_phase.phi_s;
  j["target_phase"] = g.target_phase;
  j["closed_form_phase"] = g.closed_form_phase;
  j["quadrature_error"] = g.total_phase.quadrature_error;
  j["max_closure"] = g.max_closure;
  Json per = Json::array();
  for (const auto& p : g.interval_phases) per.push_back(p.phi_c);
  j["interval_phi_c"] = per;
  return j;
}

Json fidelity_json(const FidelityReport& r) {
  Json j;
  j["dF_analytic"] = r.dF_analytic;
  j["dF_higher_order"] = r.dF_higher_order;
  j["dF_numeric"] = r.dF_numeric;
  j["fidelity"] = r.fidelity;
  j["measured_phi_c"] = r.measured_phi_c;
  j["target_phase"] = r.target_phase;
  j["z_correction_rad"] = {r.z_correction[0], r.z_correction[1]};
  j["retained_weight"] = r.retained_weight;
  j["thermal_states"] = r.thermal_states;
  j["fock_cutoff"] = r.fock_cutoff;
  j["max_top_population"] = r.max_top_population;
  j["max_norm_drift"] = r.max_norm_drift;
  j["step_halving_change"] = r.step_halving_change ? Json(*r.step_halving_change) : Json(nullptr);
  Json br = Json::array();
  for (const auto& b : r.branches)
    br.push_back({{"signs", {b.signs[0], b.signs[1]}},
                  {"return_overlap", b.return_overlap},
                  {"phase_rad", b.phase},
                  {"norm_drift", b.norm_drift}});
  j["branches"] = br;
  return j;
}

Json check(const std::string& name, double value, const std::string& relation, double threshold) {
  const bool pass = relation == "<=" ? value <= threshold : value >= threshold;
  return {{"name", name}, {"value", value}, {"relation", relation}, {"threshold", threshold}, {"pass", pass}};
}

void finish(Report& r, Clock::time_point start) {
  r.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<std::string> trajectory_header() {
  return {"t_s", "re_alpha_plus", "im_alpha_plus", "re_alpha_minus", "im_alpha_minus"};
}

}  // namespace

Json Report::document() const {
  Json j = payload;
  j["timing"] = {{"wall_seconds", wall_seconds}};
  return j;
}

std::string Report::payload_text() const { return payload.dump(2); }

DesignStage run_design_stage(const RunConfig& config, bool require_free) {
  config.validate();
  DesignStage s;
  s.crystal = build_crystal(to_crystal_config(config.crystal));
  const auto seq = to_sequence(config.sequence);
  if (config.drive.free_count() == 1) {
    s.design = calibrate_cpf(s.crystal, to_calibration_spec(config.drive), seq);
  } else {
    if (require_free)
      throw ConfigError("drive: exactly one free calibration parameter (rabi or tau) is required");
    DesignOptions opts;
    opts.segments_per_half = config.drive.segments_per_half;
    s.design = evaluate_design(to_drive_params(config.drive, s.crystal.drive_freq), seq,
                               s.crystal.rate.omega_I, config.drive.phase_model,
                               config.drive.profile, opts);
    s.design.target_phase = config.drive.target_phase;
  }
  const auto& g = s.design;
  s.dF_analytic = analytic_infidelity(g.drive, g.omega_I, s.crystal.coordination,
                                      config.thermal.nbar, g.sequence.blocks());
  s.dF_higher_order = higher_order_ld_infidelity(g.drive.eta, config.thermal.nbar);
  return s;
}

Report cmd_design(const RunConfig& config) {
  const auto start = Clock::now();
  Report r;
  r.command = "design";
  r.payload = base_payload("design", config);
  const auto s = run_design_stage(config, true);
  r.payload["model"] = model_json(s.crystal);
  r.payload["design"] = design_json(s.design);
  r.payload["fidelity"] = {{"nbar", config.thermal.nbar},
                           {"coordination", s.crystal.coordination},
                           {"dF_analytic", s.dF_analytic},
                           {"dF_higher_order", s.dF_higher_order}};
  r.tables.push_back({"design",
                      {{"quantity", "value"},
                       {"rabi_hz", cell(hz(s.design.drive.rabi))},
                       {"tau_s", cell(s.design.drive.tau)},
                       {"gate_time_s", cell(s.design.gate_time)},
                       {"phi_c", cell(s.design.total_phase.phi_c)},
                       {"omega_I_hz", cell(hz(s.design.omega_I))},
                       {"dF_analytic", cell(s.dF_analytic)},
                       {"dF_higher_order", cell(s.dF_higher_order)}}});
  finish(r, start);
  return r;
}

Report cmd_trajectory(const RunConfig& config) {
  const auto start = Clock::now();
  Report r;
  r.command = "trajectory";
  r.payload = base_payload("trajectory", config);
  const auto s = run_design_stage(config, false);
  const auto& g = s.design;
  const auto traj = solve_trajectory(g.profile, g.drive);
  const auto closure = closure_check(traj);
  r.payload["model"] = model_json(s.crystal);
  r.payload["design"] = design_json(g);

  std::vector<std::vector<std::string>> rows{trajectory_header()};
  for (std::size_t i = 0; i < traj.times.size(); ++i)
    rows.push_back({cell(traj.times[i]), cell(traj.alpha_plus[i].real()), cell(traj.alpha_plus[i].imag()),
                    cell(traj.alpha_minus[i].real()), cell(traj.alpha_minus[i].imag())});
  r.tables.push_back({"trajectory", std::move(rows)});

  Json tj;
  tj["samples"] = traj.times.size();
  tj["max_abs_alpha"] = traj.max_abs_alpha();
  tj["closure_residual_plus"] = closure.residual_plus;
  tj["closure_residual_minus"] = closure.residual_minus;
  tj["closure_normalized"] = closure.normalized;
  tj["closure_pass"] = closure.pass;
  tj["midpoint_imag_plus"] = traj.midpoint_imag;
  tj["midpoint_imag_minus"] = traj.midpoint_imag_minus;

  if (g.profile_kind == ProfileKind::lamb_dicke) {
    std::vector<std::vector<std::string>> oracle{trajectory_header()};
    double err = 0.0;
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
      const cplx ap = analytic_ld_alpha(traj.times[i], g.drive, +1);
      const cplx am = analytic_ld_alpha(traj.times[i], g.drive, -1);
      err = std::max({err, std::abs(ap - traj.alpha_plus[i]), std::abs(am - traj.alpha_minus[i])});
      oracle.push_back({cell(traj.times[i]), cell(ap.real()), cell(ap.imag()), cell(am.real()), cell(am.imag())});
    }
    r.tables.push_back({"trajectory_analytic", std::move(oracle)});
    const double scale = traj.max_abs_alpha();
    tj["analytic_max_error"] = err;
    tj["analytic_max_error_relative"] = scale > 0.0 ? err / scale : 0.0;
  }
  r.payload["trajectory"] = tj;
  finish(r, start);
  return r;
}

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw ConfigError("linear fit needs at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw ConfigError("linear fit needs distinct abscissae");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

Report cmd_verify(const RunConfig& config) {
  const auto start = Clock::now();
  if (!config.sim) throw ConfigError("verify needs a sim section");
  Report r;
  r.command = "verify";
  r.payload = base_payload("verify", config);
  const auto s = run_design_stage(config, false);
  const auto sim = to_sim_config(*config.sim);
  const auto rep = numeric_gate_fidelity(s.crystal, s.design, sim, to_thermal(config.thermal));
  r.payload["model"] = model_json(s.crystal);
  r.payload["design"] = design_json(s.design);
  r.payload["fidelity"] = fidelity_json(rep);

  Json checks = Json::array();
  double worst_overlap = 1.0;
  for (const auto& b : rep.branches) worst_overlap = std::min(worst_overlap, b.return_overlap);
  checks.push_back(check("branch_return_overlap", worst_overlap, ">=", 1.0 - 1e-3));
  checks.push_back(check("spin_fidelity", rep.fidelity, ">=", 1.0 - 1e-2));
  checks.push_back(check("norm_drift", rep.max_norm_drift, "<=", sim.norm_tolerance));
  checks.push_back(check("fock_top_population", rep.max_top_population, "<=", sim.leakage_tolerance));
  if (rep.step_halving_change)
    checks.push_back(check("step_halving_change", *rep.step_halving_change, "<=", sim.convergence_tolerance));

  if (!config.sim->nbar_sweep.empty()) {
    std::map<double, double> points{{config.thermal.nbar, rep.dF_numeric}};
    SimConfig quick = sim;
    quick.convergence_check = false;
    for (double nbar : config.sim->nbar_sweep) {
      if (points.count(nbar)) continue;
      ThermalSection th = config.thermal;
      th.nbar = nbar;
      points[nbar] = numeric_gate_fidelity(s.crystal, s.design, quick, to_thermal(th)).dF_numeric;
    }
    std::vector<double> x, y;
    std::vector<std::vector<std::string>> rows{{"nbar", "two_nbar_plus_one", "dF_numeric", "dF_analytic"}};
    for (const auto& [nbar, df] : points) {
      x.push_back(2.0 * nbar + 1.0);
      y.push_back(df);
      rows.push_back({cell(nbar), cell(2.0 * nbar + 1.0), cell(df),
                      cell(analytic_infidelity(s.design.drive, s.design.omega_I, s.crystal.coordination,
                                               nbar, s.design.sequence.blocks()))});
    }
    r.tables.push_back({"thermal_sweep", std::move(rows)});
    Json sweep;
    sweep["nbar"] = Json::array();
    sweep["dF_numeric"] = Json::array();
    for (const auto& [nbar, df] : points) {
      sweep["nbar"].push_back(nbar);
      sweep["dF_numeric"].push_back(df);
    }
    if (points.size() >= 3) {
      const auto fit = linear_fit(x, y);
      sweep["fit"] = {{"intercept", fit.intercept}, {"slope", fit.slope}, {"r_squared", fit.r_squared}};
      checks.push_back(check("thermal_linearity_r2", fit.r_squared, ">=", 0.99));
    }
    r.payload["thermal_sweep"] = sweep;
  }
  r.payload["checks"] = checks;
  bool all = true;
  for (const auto& c : checks) all = all && c["pass"].get<bool>();
  r.payload["all_checks_pass"] = all;
  finish(r, start);
  return r;
}

namespace {

void apply_axis(RunConfig& c, ScanAxisKind kind, double v) {
  switch (kind) {
    case ScanAxisKind::spacing:
      if (!c.crystal.lattice) throw ConfigError("spacing axis needs a lattice crystal");
      c.crystal.lattice->spacing = v;
      c.crystal.lattice->interaction_rate.reset();
      break;
    case ScanAxisKind::frequency:
      if (c.crystal.lattice) c.crystal.lattice->local_freq = v;
      else c.crystal.chain->transverse_freq = v;
      break;
    case ScanAxisKind::periods:
      if (c.drive.tau_kind == TauKind::free)
        throw ConfigError("periods axis needs a fixed tau; make rabi the free parameter");
      c.drive.tau_kind = TauKind::periods;
      c.drive.periods = static_cast<int>(v);
      break;
    case ScanAxisKind::nbar: c.thermal.nbar = v; break;
    case ScanAxisKind::eta: c.drive.eta = v; break;
  }
}

}  // namespace

Report cmd_scan(const RunConfig& config, int workers) {
  const auto start = Clock::now();
  if (!config.scan) throw ConfigError("scan needs a scan section");
  if (config.drive.free_count() != 1)
    throw ConfigError("scan: exactly one free calibration parameter (rabi or tau) is required");
  if (config.scan->numeric && !config.sim) throw ConfigError("scan.numeric needs a sim section");
  if (workers < 1) throw ConfigError("--workers must be at least 1");
  const auto& axes = config.scan->axes;

  std::vector<std::vector<double>> grid;
  for (double a : axes[0].values) {
    if (axes.size() == 1) {
      grid.push_back({a});
    } else {
      for (double b : axes[1].values) grid.push_back({a, b});
    }
  }
  // Validate every point's config before spending compute.
  std::vector<RunConfig> configs;
  for (const auto& point : grid) {
    RunConfig c = config;
    for (std::size_t k = 0; k < axes.size(); ++k) apply_axis(c, axes[k].kind, point[k]);
    c.scan.reset();
    c.validate();
    configs.push_back(std::move(c));
  }

  std::vector<std::string> header;
  for (const auto& a : axes) header.push_back(to_string(a.kind));
  for (const char* h : {"omega_I_hz", "rabi_hz", "tau_s", "gate_time_s", "phi_c", "dF_analytic",
                        "dF_higher_order"})
    header.push_back(h);
  if (config.scan->numeric) header.push_back("dF_numeric");
  header.push_back("error");

  std::vector<std::vector<std::string>> rows(grid.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < grid.size(); i = next++) {
      std::vector<std::string> row;
      for (double v : grid[i]) row.push_back(cell(v));
      const std::size_t fixed = row.size();
      try {
        const auto s = run_design_stage(configs[i], true);
        row.push_back(cell(hz(s.design.omega_I)));
        row.push_back(cell(hz(s.design.drive.rabi)));
        row.push_back(cell(s.design.drive.tau));
        row.push_back(cell(s.design.gate_time));
        row.push_back(cell(s.design.total_phase.phi_c));
        row.push_back(cell(s.dF_analytic));
        row.push_back(cell(s.dF_higher_order));
        if (config.scan->numeric) {
          const auto rep = numeric_gate_fidelity(s.crystal, s.design, to_sim_config(*configs[i].sim),
                                                 to_thermal(configs[i].thermal));
          row.push_back(cell(rep.dF_numeric));
        }
        row.push_back("");
      } catch (const std::exception& e) {
        row.resize(fixed);
        while (row.size() + 1 < header.size()) row.push_back("");
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        row.push_back(msg);
      }
      rows[i] = std::move(row);
    }
  };
  const int n_threads = std::min<int>(workers, static_cast<int>(grid.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  Report r;
  r.command = "scan";
  r.payload = base_payload("scan", config);
  Json table = Json::array();
  std::size_t failures = 0;
  for (const auto& row : rows) {
    Json o;
    for (std::size_t k = 0; k < header.size(); ++k) {
      if (header[k] == "error") {
        o["error"] = row[k].empty() ? Json(nullptr) : Json(row[k]);
        failures += row[k].empty() ? 0 : 1;
      } else {
        o[header[k]] = row[k].empty() ? Json(nullptr) : Json(std::stod(row[k]));
      }
    }
    table.push_back(o);
  }
  r.payload["points"] = grid.size();
  r.payload["failures"] = failures;
  r.payload["rows"] = table;
  rows.insert(rows.begin(), header);
  r.tables.push_back({"scan", std::move(rows)});
  finish(r, start);
  return r;
}

std::string to_csv(const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) out += ',';
      out += row[k];
    }
    out += '\n';
  }
  return out;
}

std::vector<std::string> write_report(const Report& report, const OutputSection& output) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(output.dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + output.dir + "': " + ec.message());
  std::vector<std::string> written;
  auto put = [&](const std::string& name, const std::string& text) {
    const auto path = (fs::path(output.dir) / name).string();
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << text;
    written.push_back(path);
  };
  put("report.json", report.document().dump(2) + "\n");
  for (const auto& [stem, rows] : report.tables) {
    if (output.format == OutputFormat::csv) {
      put(stem + ".csv", to_csv(rows));
    } else {
      Json arr = Json::array();
      for (std::size_t i = 1; i < rows.size(); ++i) {
        Json o;
        for (std::size_t k = 0; k < rows[0].size(); ++k) {
          const auto& v = rows[i][k];
          double d = 0.0;
          auto res = std::from_chars(v.data(), v.data() + v.size(), d);
          if (v.empty()) o[rows[0][k]] = nullptr;
          else if (res.ec == std::errc() && res.ptr == v.data() + v.size()) o[rows[0][k]] = d;
          else o[rows[0][k]] = v;
        }
        arr.push_back(o);
      }
      put(stem + ".json", arr.dump(2) + "\n");
    }
  }
  return written;
}

}  // namespace lpgate
