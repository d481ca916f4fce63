#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "twoscale/config.hpp"

namespace twoscale {

inline constexpr const char* kToolVersion = "0.1.0";

/// One reported number and the bound it was tested against. Informational
/// numbers have asserted = false and no tolerance.
struct Metric {
  std::string name;
  double value = 0.0;
  std::string comparison = "report";  // "<=", "<", ">", ">=", "decreasing" or "report"
  std::optional<double> tolerance;
  std::optional<double> target;       // reference value the metric was derived from
  std::string reference;              // provenance of the target / tolerance
  bool asserted = false;
  bool passed = true;
};

struct CheckResult {
  std::string name;
  bool passed = true;
  std::string error;  // set when the check aborted with an exception
  std::vector<Metric> metrics;
  std::vector<std::string> notes;
  std::vector<std::string> artifacts;
};

struct PipelineResult {
  std::vector<CheckResult> checks;
  bool passed = true;
  nlohmann::ordered_json report;

  std::vector<std::string> failed_checks() const;
};

struct PipelineOptions {
  bool write_files = true;
  std::ostream* log = nullptr;  // progress and summary lines
};

/// Runs the configured checks in canonical order and writes report.json,
/// manifest.json and the CSV/JSON artifacts into cfg.output.
PipelineResult run_pipeline(const ExperimentConfig& cfg, const PipelineOptions& opts = {});

/// Per-check seed derived from the master seed.
std::uint64_t check_seed(std::uint64_t master, const std::string& check);

/// Renders a report.json document as plain-text tables.
void render_report(const nlohmann::ordered_json& report, std::ostream& os);

/// ISO-8601 UTC timestamp.
std::string utc_timestamp();

}  // namespace twoscale
