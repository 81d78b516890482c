#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lpgate/config.hpp"

namespace lpgate {

inline constexpr const char* kToolVersion = "0.1.0";

using Json = nlohmann::ordered_json;

struct Report {
  std::string command;
  Json payload;                // deterministic content
  double wall_seconds = 0.0;   // timing metadata, excluded from the payload
  // Tabular outputs (file stem, rows); the first row is the header.
  std::vector<std::pair<std::string, std::vector<std::vector<std::string>>>> tables;

  // Payload plus the timing block.
  Json document() const;
  // Serialized payload; identical configs give identical text.
  std::string payload_text() const;
};

struct DesignStage {
  CrystalModel crystal;
  GateDesign design;
  double dF_analytic = 0.0;
  double dF_higher_order = 0.0;
};

// Builds the crystal and calibrates (or evaluates a fully fixed drive).
DesignStage run_design_stage(const RunConfig& config, bool require_free);

Report cmd_design(const RunConfig& config);
Report cmd_trajectory(const RunConfig& config);
Report cmd_verify(const RunConfig& config);
Report cmd_scan(const RunConfig& config, int workers);

// Least-squares fit y = a + b x with coefficient of determination.
struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r_squared = 0.0;
};
LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

// Writes report.json (or report.csv) and every table into `dir`.
std::vector<std::string> write_report(const Report& report, const OutputSection& output);

std::string to_csv(const std::vector<std::vector<std::string>>& rows);

}  // namespace lpgate
