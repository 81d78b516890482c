#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "lpgate/errors.hpp"
#include "lpgate/pipeline.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

void summarize(const lpgate::Report& r, const std::vector<std::string>& files) {
  const auto& p = r.payload;
  if (p.contains("design")) {
    const auto& d = p["design"];
    std::printf("|Omega| = 2pi x %.6g Hz, tau = %.6g s, T_g = %.6g s, phi_c = %.10g\n",
                d["rabi_hz"].get<double>(), d["tau_s"].get<double>(), d["gate_time_s"].get<double>(),
                d["phi_c"].get<double>());
  }
  if (p.contains("fidelity")) {
    const auto& f = p["fidelity"];
    std::printf("dF_analytic = %.4g", f["dF_analytic"].get<double>());
    if (f.contains("dF_numeric")) std::printf(", dF_numeric = %.4g", f["dF_numeric"].get<double>());
    std::printf("\n");
  }
  if (p.contains("trajectory"))
    std::printf("closure residual (normalized) = %.3g\n", p["trajectory"]["closure_normalized"].get<double>());
  if (p.contains("all_checks_pass"))
    std::printf("checks: %s\n", p["all_checks_pass"].get<bool>() ? "all pass" : "FAILURES");
  if (p.contains("failures"))
    std::printf("scan: %zu points, %zu failed\n", p["points"].get<std::size_t>(), p["failures"].get<std::size_t>());
  for (const auto& f : files) std::printf("wrote %s\n", f.c_str());
  std::printf("elapsed %.3f s\n", r.wall_seconds);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-qubit gate design and verification for ion crystals"};
  app.require_subcommand(1);
  app.set_version_flag("--version", lpgate::kToolVersion);

  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::string> format;
  int workers = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Config file (YAML or JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "Output directory (overrides output.dir)");
    sub->add_option("--format", format, "Table format (overrides output.format)")
        ->check(CLI::IsMember({"json", "csv"}));
  };
  auto* design = app.add_subcommand("design", "Calibrate the gate and report analytic infidelities");
  auto* trajectory = app.add_subcommand("trajectory", "Emit phase-space trajectories of one interval");
  auto* verify = app.add_subcommand("verify", "Run the exact simulation at a desk-scale point");
  auto* scan = app.add_subcommand("scan", "Calibrate over a grid of one or two parameters");
  for (auto* sub : {design, trajectory, verify, scan}) add_common(sub);
  scan->add_option("--workers", workers, "Concurrent scan points")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    auto config = lpgate::load_config(config_path);
    if (out_dir) config.output.dir = *out_dir;
    if (format) config.output.format = *format == "csv" ? lpgate::OutputFormat::csv : lpgate::OutputFormat::json;
    config.validate();

    lpgate::Report report;
    if (*design) report = lpgate::cmd_design(config);
    else if (*trajectory) report = lpgate::cmd_trajectory(config);
    else if (*verify) report = lpgate::cmd_verify(config);
    else report = lpgate::cmd_scan(config, workers);

    summarize(report, lpgate::write_report(report, config.output));
    return 0;
  } catch (const lpgate::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const lpgate::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}
