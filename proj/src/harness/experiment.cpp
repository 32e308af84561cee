#include "harness/experiment.hpp"

#include "core/error.hpp"

namespace hetcoef {

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::bias: return "bias";
    case Metric::rmse: return "rmse";
    case Metric::coverage_of_flags: return "coverage_of_flags";
  }
  return "bias";
}

Metric parse_metric(std::string_view name) {
  if (name == "bias") return Metric::bias;
  if (name == "rmse") return Metric::rmse;
  if (name == "coverage_of_flags") return Metric::coverage_of_flags;
  throw ConfigError("unknown metric '" + std::string(name) + "' (expected bias, rmse or coverage_of_flags)");
}

std::string_view to_string(ReportFormat f) { return f == ReportFormat::json ? "json" : "csv"; }

ReportFormat parse_report_format(std::string_view name) {
  if (name == "json") return ReportFormat::json;
  if (name == "csv") return ReportFormat::csv;
  throw ConfigError("unknown report format '" + std::string(name) + "' (expected json or csv)");
}

void validate(const ExperimentConfig& cfg) {
  validate(cfg.simulation);
  validate(cfg.estimator);
  if (cfg.simulation.variant != cfg.estimator.variant) {
    throw ConfigError("simulation.variant and estimator.variant differ");
  }
  if (cfg.n_replications < 1) throw ConfigError("experiment.replications must be >= 1");
  if (cfg.sample_sizes.empty()) throw ConfigError("experiment.sample_sizes must not be empty");
  for (std::size_t i = 0; i < cfg.sample_sizes.size(); ++i) {
    if (cfg.sample_sizes[i] < 1) throw ConfigError("experiment.sample_sizes must be positive");
    if (i > 0 && cfg.sample_sizes[i] <= cfg.sample_sizes[i - 1]) {
      throw ConfigError("experiment.sample_sizes must be strictly increasing");
    }
  }
  if (cfg.metrics.empty()) throw ConfigError("experiment.metrics must not be empty");
}

namespace {

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

ExperimentConfig experiment_from_config(const KeyValueConfig& kv) {
  KeyValueConfig resolved = kv;
  if (resolved.contains("simulation.variant") && !resolved.contains("estimator.variant")) {
    resolved.set("estimator.variant", *resolved.find("simulation.variant"));
  }
  ExperimentConfig cfg;
  cfg.simulation = simulation_from_config(resolved);
  cfg.estimator = estimator_from_config(resolved);
  cfg.seed = cfg.simulation.seed;

  const long long reps = resolved.get_int("experiment.replications", static_cast<long long>(cfg.n_replications));
  if (reps < 1) throw ConfigError("experiment.replications must be >= 1");
  cfg.n_replications = static_cast<std::size_t>(reps);

  if (auto sizes = resolved.find("experiment.sample_sizes")) {
    cfg.sample_sizes.clear();
    for (const auto& w : split_words(*sizes)) {
      long long v = 0;
      try {
        std::size_t used = 0;
        v = std::stoll(w, &used);
        if (used != w.size()) throw std::invalid_argument(w);
      } catch (const std::exception&) {
        throw ConfigError("experiment.sample_sizes: '" + w + "' is not an integer");
      }
      if (v < 1) throw ConfigError("experiment.sample_sizes must be positive");
      cfg.sample_sizes.push_back(static_cast<std::size_t>(v));
    }
  }
  if (auto metrics = resolved.find("experiment.metrics")) {
    cfg.metrics.clear();
    for (const auto& w : split_words(*metrics)) cfg.metrics.push_back(parse_metric(w));
  }
  cfg.oracle_mode = resolved.get_bool("experiment.oracle_mode", cfg.oracle_mode);
  cfg.report_path = resolved.get_string("output.report", cfg.report_path);
  cfg.report_format = parse_report_format(resolved.get_string("output.format", std::string(to_string(cfg.report_format))));
  cfg.include_runtime = resolved.get_bool("output.include_runtime", cfg.include_runtime);
  validate(cfg);

  const KeyValueConfig known = experiment_to_config(cfg);
  for (const auto& [key, value] : kv.entries()) {
    if (!known.contains(key)) throw ConfigError("unknown or unused config key '" + key + "'");
  }
  return cfg;
}

KeyValueConfig experiment_to_config(const ExperimentConfig& cfg) {
  KeyValueConfig kv;
  technology_to_config(cfg.simulation.technology, kv);
  simulation_to_config(cfg.simulation, kv);
  estimator_to_config(cfg.estimator, kv);
  kv.set("experiment.replications", std::to_string(cfg.n_replications));
  std::string sizes, metrics;
  for (std::size_t i = 0; i < cfg.sample_sizes.size(); ++i) sizes += (i ? " " : "") + std::to_string(cfg.sample_sizes[i]);
  for (std::size_t i = 0; i < cfg.metrics.size(); ++i) metrics += (i ? " " : "") + std::string(to_string(cfg.metrics[i]));
  kv.set("experiment.sample_sizes", sizes);
  kv.set("experiment.metrics", metrics);
  kv.set("experiment.oracle_mode", cfg.oracle_mode ? "true" : "false");
  kv.set("output.report", cfg.report_path);
  kv.set("output.format", std::string(to_string(cfg.report_format)));
  kv.set("output.include_runtime", cfg.include_runtime ? "true" : "false");
  return kv;
}

KeyValueConfig resolve_config(const KeyValueConfig& cfg) { return experiment_to_config(experiment_from_config(cfg)); }

}  // namespace hetcoef
