#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/kv_config.hpp"
#include "harness/experiment.hpp"

namespace hetcoef {

inline constexpr double kOracleTolerance = 1e-10;

struct RecoveryCell {
  std::string coefficient;
  std::size_t n = 0;
  double median_bias = 0.0;
  double median_rmse = 0.0;
};

struct RunSummary {
  std::size_t n = 0;
  std::size_t replication = 0;
  std::uint64_t seed = 0;
  std::size_t evaluated = 0;  // untrimmed firms entering the metrics
  std::size_t trimmed = 0;
  std::size_t clamped = 0;
  std::size_t ridge = 0;
  double oracle_max_error = 0.0;  // analytic-expectation run on the same data
  double runtime_seconds = 0.0;
};

struct RecoveryReport {
  ModelVariant variant = ModelVariant::baseline;
  bool oracle_mode = false;
  std::size_t n_replications = 0;
  std::vector<std::size_t> sample_sizes;
  std::vector<std::string> coefficients;
  std::vector<Metric> metrics;
  std::vector<RecoveryCell> cells;  // sample-size major, coefficient order within
  std::vector<RunSummary> runs;     // sample-size major, replication order within
  bool include_runtime = false;
  KeyValueConfig config;

  const RecoveryCell* cell(const std::string& coefficient, std::size_t n) const;
  // Median over replications of the fraction of firms flagged trimmed or clamped.
  double flag_coverage(std::size_t n) const;
  bool oracle_exact() const;
  double oracle_max_error() const;
  bool has(Metric m) const;
};

// Simulates and estimates every (sample size, replication) cell. Each run has
// its own seed derived from the experiment seed, so the report does not
// depend on scheduling.
RecoveryReport run_montecarlo(const ExperimentConfig& cfg);

std::uint64_t run_seed(std::uint64_t base, std::size_t n, std::size_t replication);

}  // namespace hetcoef
