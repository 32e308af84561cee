#include "harness/montecarlo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "core/error.hpp"
#include "core/parallel.hpp"
#include "harness/columns.hpp"

namespace hetcoef {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double median(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

struct RunResult {
  RunSummary summary;
  std::vector<double> bias, rmse;
};

}  // namespace

std::uint64_t run_seed(std::uint64_t base, std::size_t n, std::size_t replication) {
  return substream_seed(substream_seed(base, n), replication);
}

const RecoveryCell* RecoveryReport::cell(const std::string& coefficient, std::size_t n) const {
  for (const auto& c : cells) {
    if (c.coefficient == coefficient && c.n == n) return &c;
  }
  return nullptr;
}

double RecoveryReport::flag_coverage(std::size_t n) const {
  std::vector<double> v;
  for (const auto& r : runs) {
    if (r.n == n) v.push_back(static_cast<double>(r.trimmed + r.clamped) / static_cast<double>(r.n));
  }
  return median(std::move(v));
}

bool RecoveryReport::oracle_exact() const { return oracle_max_error() <= kOracleTolerance; }

double RecoveryReport::oracle_max_error() const {
  double m = 0.0;
  for (const auto& r : runs) {
    if (!(r.oracle_max_error <= m)) m = r.oracle_max_error;  // NaN propagates
  }
  return m;
}

bool RecoveryReport::has(Metric m) const { return std::find(metrics.begin(), metrics.end(), m) != metrics.end(); }

RecoveryReport run_montecarlo(const ExperimentConfig& cfg) {
  validate(cfg);
  const auto columns = coefficient_columns(cfg.estimator.variant);
  const std::size_t reps = cfg.n_replications;
  const std::size_t total = cfg.sample_sizes.size() * reps;
  std::vector<RunResult> results(total);

  parallel_for(total, [&](std::size_t job) {
    const std::size_t n = cfg.sample_sizes[job / reps];
    const std::size_t rep = job % reps;
    RunResult& out = results[job];
    out.summary.n = n;
    out.summary.replication = rep;
    out.summary.seed = run_seed(cfg.seed, n, rep);
    const auto start = std::chrono::steady_clock::now();
    try {
      SimulationConfig sim = cfg.simulation;
      sim.n_firms = n;
      sim.seed = out.summary.seed;
      const Dataset data = simulate_cross_section(sim);

      const ElasticityEstimates oracle = run_pipeline(data, cfg.estimator, ExpectationMode::oracle);
      const ElasticityEstimates est =
          cfg.oracle_mode ? oracle : run_pipeline(observables_only(data), cfg.estimator, ExpectationMode::local_linear);

      double oracle_err = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const CoefficientVector& truth = data.firms[i].truth->betas;
        for (const auto& c : columns) {
          const double e = std::abs(oracle.firms[i].betas.*c.member - truth.*c.member);
          if (!(e <= oracle_err)) oracle_err = e;
        }
      }
      out.summary.oracle_max_error = oracle_err;

      std::vector<double> sum(columns.size(), 0.0), sq(columns.size(), 0.0);
      std::size_t used = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (est.firms[i].flag == FirmFlag::trimmed) continue;
        const CoefficientVector& truth = data.firms[i].truth->betas;
        for (std::size_t j = 0; j < columns.size(); ++j) {
          const double d = est.firms[i].betas.*columns[j].member - truth.*columns[j].member;
          sum[j] += d;
          sq[j] += d * d;
        }
        ++used;
      }
      out.bias.assign(columns.size(), kNaN);
      out.rmse.assign(columns.size(), kNaN);
      if (used > 0) {
        for (std::size_t j = 0; j < columns.size(); ++j) {
          out.bias[j] = sum[j] / static_cast<double>(used);
          out.rmse[j] = std::sqrt(sq[j] / static_cast<double>(used));
        }
      }
      out.summary.evaluated = used;
      out.summary.trimmed = est.count(FirmFlag::trimmed);
      out.summary.clamped = est.count(FirmFlag::clamped);
      out.summary.ridge = est.ridge_count();
    } catch (const Error& e) {
      throw Error(e.kind(), "n=" + std::to_string(n) + " replication=" + std::to_string(rep + 1) + ": " + e.what());
    }
    out.summary.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  });

  RecoveryReport report;
  report.variant = cfg.estimator.variant;
  report.oracle_mode = cfg.oracle_mode;
  report.n_replications = reps;
  report.sample_sizes = cfg.sample_sizes;
  report.metrics = cfg.metrics;
  report.include_runtime = cfg.include_runtime;
  report.config = experiment_to_config(cfg);
  for (const auto& c : columns) report.coefficients.push_back(c.name);
  for (std::size_t s = 0; s < cfg.sample_sizes.size(); ++s) {
    for (std::size_t j = 0; j < columns.size(); ++j) {
      std::vector<double> b, r;
      for (std::size_t rep = 0; rep < reps; ++rep) {
        b.push_back(results[s * reps + rep].bias[j]);
        r.push_back(results[s * reps + rep].rmse[j]);
      }
      report.cells.push_back({columns[j].name, cfg.sample_sizes[s], median(std::move(b)), median(std::move(r))});
    }
  }
  for (auto& r : results) report.runs.push_back(r.summary);
  return report;
}

}  // namespace hetcoef
