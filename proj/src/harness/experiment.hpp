#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/identification.hpp"
#include "core/kv_config.hpp"
#include "core/simulator.hpp"

namespace hetcoef {

enum class Metric { bias, rmse, coverage_of_flags };
std::string_view to_string(Metric m);
Metric parse_metric(std::string_view name);

enum class ReportFormat { json, csv };
std::string_view to_string(ReportFormat f);
ReportFormat parse_report_format(std::string_view name);

struct ExperimentConfig {
  SimulationConfig simulation;
  EstimatorConfig estimator;
  std::size_t n_replications = 20;
  std::vector<std::size_t> sample_sizes{1000, 8000};
  std::vector<Metric> metrics{Metric::bias, Metric::rmse, Metric::coverage_of_flags};
  bool oracle_mode = false;
  std::string report_path;  // empty or "-" for stdout
  ReportFormat report_format = ReportFormat::json;
  bool include_runtime = false;
  std::uint64_t seed = 20240601;
};

void validate(const ExperimentConfig& cfg);

// Builds the full configuration from flat keys; absent keys take defaults.
// estimator.variant follows simulation.variant unless set explicitly.
ExperimentConfig experiment_from_config(const KeyValueConfig& cfg);

// Every key with its resolved value.
KeyValueConfig experiment_to_config(const ExperimentConfig& cfg);

// Parse, fill defaults and validate in one step.
KeyValueConfig resolve_config(const KeyValueConfig& cfg);

}  // namespace hetcoef
