#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hetcoef/hetcoef.h"

namespace {

struct Handle {
  hc_config* cfg = nullptr;
  hc_dataset* data = nullptr;
  hc_estimates* est = nullptr;
  hc_diagnostic* diag = nullptr;
  hc_report* report = nullptr;
  ~Handle() {
    hc_report_destroy(report);
    hc_diagnostic_destroy(diag);
    hc_estimates_destroy(est);
    hc_dataset_destroy(data);
    hc_config_destroy(cfg);
  }
};

struct Failure {
  hc_status status;
};

int exit_code(hc_status s) {
  switch (s) {
    case HC_OK: return 0;
    case HC_ERR_DATA:
    case HC_ERR_IO:
    case HC_ERR_DOMAIN: return 2;
    case HC_ERR_NUMERIC: return 3;
    default: return 1;
  }
}

void check(hc_status s) {
  if (s != HC_OK) {
    std::cerr << "error: " << hc_status_name(s) << ": " << hc_last_error() << '\n';
    throw Failure{s};
  }
}

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  long long seed = -1;
  std::string variant;
  bool quiet = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config_file, "Key-value configuration file")->check(CLI::ExistingFile);
  app->add_option("-s,--set", c.overrides, "Override a configuration key (key=value), repeatable");
  app->add_option("--seed", c.seed, "Random seed (simulation.seed)")->check(CLI::NonNegativeNumber);
  app->add_option("--variant", c.variant, "baseline | two_labor | three_flexible | single_m_flexible_labor");
  app->add_flag("-q,--quiet", c.quiet, "Do not echo the resolved configuration to stderr");
}

void set(hc_config* cfg, const std::string& key, const std::string& value) {
  check(hc_config_set(cfg, key.c_str(), value.c_str()));
}

hc_config* build_config(const Common& c) {
  hc_config* cfg = nullptr;
  check(hc_config_create(&cfg));
  try {
    if (!c.config_file.empty()) check(hc_config_load_file(cfg, c.config_file.c_str()));
    for (const auto& o : c.overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos || eq == 0) {
        std::cerr << "error: --set expects key=value, got '" << o << "'\n";
        throw Failure{HC_ERR_CONFIG};
      }
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      set(cfg, trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
    }
    if (c.seed >= 0) set(cfg, "simulation.seed", std::to_string(c.seed));
    if (!c.variant.empty()) {
      set(cfg, "simulation.variant", c.variant);
      set(cfg, "estimator.variant", c.variant);
    }
  } catch (...) {
    hc_config_destroy(cfg);
    throw;
  }
  return cfg;
}

std::string config_value(const hc_config* cfg, const char* key) {
  size_t len = 0;
  if (hc_config_get(cfg, key, nullptr, 0, &len) != HC_OK) return {};
  std::string out(len + 1, '\0');
  check(hc_config_get(cfg, key, out.data(), out.size(), &len));
  out.resize(len);
  return out;
}

// Resolves and validates; echoes the resolved configuration unless quiet.
void echo_resolved(const hc_config* cfg, bool quiet) {
  hc_config* resolved = nullptr;
  check(hc_config_resolve(cfg, &resolved));
  size_t len = 0;
  hc_config_dump(resolved, nullptr, 0, &len);
  std::string text(len + 1, '\0');
  hc_config_dump(resolved, text.data(), text.size(), &len);
  text.resize(len);
  hc_config_destroy(resolved);
  if (quiet) return;
  std::string line;
  for (char ch : text) {
    if (ch == '\n') {
      std::cerr << "# " << line << '\n';
      line.clear();
    } else {
      line += ch;
    }
  }
}

hc_format parse_format(const std::string& f) { return f == "csv" ? HC_FORMAT_CSV : HC_FORMAT_JSON; }

void report_drops(const hc_dataset* data) {
  const size_t n = hc_dataset_dropped_count(data);
  std::cerr << "read " << hc_dataset_size(data) << " firms, dropped " << n << " rows\n";
  for (size_t i = 0; i < n; ++i) {
    size_t line = 0;
    const char* reason = nullptr;
    check(hc_dataset_dropped_row(data, i, &line, &reason));
    std::cerr << "  line " << line << ": " << reason << '\n';
  }
}

std::string dataset_variant(const Common& c, const hc_config* cfg) {
  if (!c.variant.empty()) return c.variant;
  std::string v = config_value(cfg, "estimator.variant");
  if (v.empty()) v = config_value(cfg, "simulation.variant");
  return v.empty() ? "baseline" : v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous-coefficient production function identification and Monte Carlo harness"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(hc_version()));

  Common sim_c, est_c, mc_c, diag_c;
  std::string sim_out = "-";
  long long n_firms = 0;
  bool sim_truth = false;
  auto* sim = app.add_subcommand("simulate", "Simulate a cross-section of firms");
  add_common(sim, sim_c);
  sim->add_option("-o,--output", sim_out, "Output CSV path ('-' for stdout)");
  sim->add_option("-n,--n-firms", n_firms, "Number of firms (simulation.n_firms)")->check(CLI::PositiveNumber);
  sim->add_flag("--with-truth", sim_truth, "Append hidden-truth columns");

  std::string est_in, est_out = "-", est_format = "csv";
  bool est_truth = false, est_oracle = false;
  auto* est = app.add_subcommand("estimate", "Estimate per-firm coefficients from a CSV dataset");
  add_common(est, est_c);
  est->add_option("-i,--input", est_in, "Input CSV")->required()->check(CLI::ExistingFile);
  est->add_option("-o,--output", est_out, "Output path ('-' for stdout)");
  est->add_option("-f,--format", est_format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
  est->add_flag("--with-truth", est_truth, "Read hidden-truth columns and report true coefficients alongside");
  est->add_flag("--oracle-mode", est_oracle, "Use analytic conditional expectations from hidden truth");

  std::string mc_out, mc_format;
  long long mc_reps = 0;
  std::string mc_sizes;
  bool mc_oracle = false, mc_runtime = false;
  auto* mc = app.add_subcommand("montecarlo", "Run a Monte Carlo recovery experiment");
  add_common(mc, mc_c);
  mc->add_option("-o,--output", mc_out, "Report path (output.report; '-' for stdout)");
  mc->add_option("-f,--format", mc_format, "json | csv (output.format)")->check(CLI::IsMember({"csv", "json"}));
  mc->add_option("-r,--replications", mc_reps, "experiment.replications")->check(CLI::PositiveNumber);
  mc->add_option("--sizes", mc_sizes, "experiment.sample_sizes, e.g. \"1000 8000\"");
  mc->add_flag("--oracle-mode", mc_oracle, "Use analytic conditional expectations");
  mc->add_flag("--include-runtime", mc_runtime, "Record wall-clock runtimes in the report");
  bool mc_truth = false;
  mc->add_flag("--with-truth", mc_truth, "Accepted for symmetry; reports always compare against truth");

  std::string diag_in, diag_out = "-";
  auto* diag = app.add_subcommand("diagnose", "Locality diagnostic of the conditioning variables");
  add_common(diag, diag_c);
  diag->add_option("-i,--input", diag_in, "Input CSV")->required()->check(CLI::ExistingFile);
  diag->add_option("-o,--output", diag_out, "Output CSV ('-' for stdout)");

  std::string rep_in, rep_out = "-", rep_format = "csv";
  auto* rep = app.add_subcommand("report", "Convert or summarize a JSON recovery report");
  rep->add_option("-i,--input", rep_in, "JSON report")->required()->check(CLI::ExistingFile);
  rep->add_option("-o,--output", rep_out, "Output path ('-' for stdout)");
  rep->add_option("-f,--format", rep_format, "csv | json")->check(CLI::IsMember({"csv", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  Handle h;
  try {
    if (*sim) {
      h.cfg = build_config(sim_c);
      if (n_firms > 0) set(h.cfg, "simulation.n_firms", std::to_string(n_firms));
      echo_resolved(h.cfg, sim_c.quiet);
      check(hc_simulate(h.cfg, &h.data));
      check(hc_dataset_write_csv(h.data, sim_out.c_str(), sim_truth));
    } else if (*est) {
      h.cfg = build_config(est_c);
      const std::string variant = dataset_variant(est_c, h.cfg);
      check(hc_dataset_read_csv(est_in.c_str(), variant.c_str(), est_truth || est_oracle, &h.data));
      if (!est_c.quiet) report_drops(h.data);
      if ((est_truth || est_oracle) && !hc_dataset_has_truth(h.data)) {
        std::cerr << "error: " << est_in << " carries no hidden-truth columns\n";
        return 2;
      }
      if (!config_value(h.cfg, "estimator.variant").empty() || !config_value(h.cfg, "simulation.variant").empty()) {
        echo_resolved(h.cfg, est_c.quiet);
      } else {
        set(h.cfg, "simulation.variant", variant);
        echo_resolved(h.cfg, est_c.quiet);
      }
      check(hc_estimate(h.data, h.cfg, est_oracle, &h.est));
      check(hc_estimates_write(h.est, est_out.c_str(), parse_format(est_format), est_truth));
      hc_flag_counts counts{};
      check(hc_estimates_flag_counts(h.est, &counts));
      if (!est_c.quiet) {
        std::cerr << "flags: ok=" << counts.ok << " clamped=" << counts.clamped << " trimmed=" << counts.trimmed
                  << " ridge=" << counts.ridge << '\n';
      }
    } else if (*mc) {
      h.cfg = build_config(mc_c);
      if (mc_reps > 0) set(h.cfg, "experiment.replications", std::to_string(mc_reps));
      if (!mc_sizes.empty()) set(h.cfg, "experiment.sample_sizes", mc_sizes);
      if (mc_oracle) set(h.cfg, "experiment.oracle_mode", "true");
      if (mc_runtime) set(h.cfg, "output.include_runtime", "true");
      if (!mc_out.empty()) set(h.cfg, "output.report", mc_out);
      if (!mc_format.empty()) set(h.cfg, "output.format", mc_format);
      echo_resolved(h.cfg, mc_c.quiet);
      check(hc_montecarlo(h.cfg, &h.report));
      std::string path = config_value(h.cfg, "output.report");
      const std::string format = config_value(h.cfg, "output.format");
      check(hc_report_write(h.report, path.empty() ? "-" : path.c_str(), parse_format(format)));
      if (!mc_c.quiet) std::cerr << "oracle check: " << (hc_report_oracle_exact(h.report) ? "exact" : "FAILED") << '\n';
    } else if (*diag) {
      h.cfg = build_config(diag_c);
      const std::string variant = dataset_variant(diag_c, h.cfg);
      check(hc_dataset_read_csv(diag_in.c_str(), variant.c_str(), 0, &h.data));
      if (!diag_c.quiet) report_drops(h.data);
      if (config_value(h.cfg, "estimator.variant").empty() && config_value(h.cfg, "simulation.variant").empty()) {
        set(h.cfg, "simulation.variant", variant);
      }
      echo_resolved(h.cfg, diag_c.quiet);
      check(hc_diagnose(h.data, h.cfg, &h.diag));
      check(hc_diagnostic_write(h.diag, diag_out.c_str()));
      if (!diag_c.quiet) {
        std::cerr << "flagged " << hc_diagnostic_flagged_count(h.diag) << " of " << hc_diagnostic_size(h.diag)
                  << " firms\n";
      }
    } else if (*rep) {
      check(hc_report_read_json(rep_in.c_str(), &h.report));
      check(hc_report_write(h.report, rep_out.c_str(), parse_format(rep_format)));
    }
  } catch (const Failure& f) {
    return exit_code(f.status);
  }
  return 0;
}
