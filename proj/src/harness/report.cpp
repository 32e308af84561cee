#include "harness/report.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>

#include <json.hpp>

#include "core/error.hpp"

namespace hetcoef {

namespace {

using json = nlohmann::ordered_json;

json number(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

double read_number(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.at(key).get<double>();
}

}  // namespace

void write_report_json(const RecoveryReport& report, std::ostream& out) {
  json doc;
  doc["variant"] = std::string(to_string(report.variant));
  doc["oracle_mode"] = report.oracle_mode;
  doc["replications"] = report.n_replications;
  doc["sample_sizes"] = report.sample_sizes;
  doc["coefficients"] = report.coefficients;
  json metrics = json::array();
  for (Metric m : report.metrics) metrics.push_back(std::string(to_string(m)));
  doc["metrics"] = metrics;
  doc["oracle_check"] = {{"exact", report.oracle_exact()},
                         {"max_error", number(report.oracle_max_error())},
                         {"tolerance", kOracleTolerance}};

  json cells = json::array();
  for (const auto& c : report.cells) {
    json cell;
    cell["coefficient"] = c.coefficient;
    cell["n"] = c.n;
    if (report.has(Metric::bias)) cell["median_bias"] = number(c.median_bias);
    if (report.has(Metric::rmse)) cell["median_rmse"] = number(c.median_rmse);
    cells.push_back(std::move(cell));
  }
  doc["cells"] = std::move(cells);

  if (report.has(Metric::coverage_of_flags)) {
    json coverage = json::array();
    for (std::size_t n : report.sample_sizes) coverage.push_back({{"n", n}, {"median_flag_coverage", number(report.flag_coverage(n))}});
    doc["flag_coverage"] = std::move(coverage);
  }

  json runs = json::array();
  for (const auto& r : report.runs) {
    json run;
    run["n"] = r.n;
    run["replication"] = r.replication + 1;
    run["seed"] = r.seed;
    run["evaluated"] = r.evaluated;
    run["trimmed"] = r.trimmed;
    run["clamped"] = r.clamped;
    run["ridge"] = r.ridge;
    run["oracle_max_error"] = number(r.oracle_max_error);
    if (report.include_runtime) run["runtime_seconds"] = r.runtime_seconds;
    runs.push_back(std::move(run));
  }
  doc["runs"] = std::move(runs);

  if (report.include_runtime) {
    double total = 0.0, slowest = 0.0;
    for (const auto& r : report.runs) {
      total += r.runtime_seconds;
      slowest = std::max(slowest, r.runtime_seconds);
    }
    doc["runtime"] = {{"total_seconds", total}, {"max_run_seconds", slowest}};
  }

  json config = json::object();
  for (const auto& [k, v] : report.config.entries()) config[k] = v;
  doc["config"] = std::move(config);
  out << doc.dump(2) << '\n';
}

void write_report_csv(const RecoveryReport& report, std::ostream& out) {
  for (const auto& [k, v] : report.config.entries()) out << "# " << k << " = " << v << '\n';
  out << "coefficient,n";
  if (report.has(Metric::bias)) out << ",median_bias";
  if (report.has(Metric::rmse)) out << ",median_rmse";
  if (report.has(Metric::coverage_of_flags)) out << ",median_flag_coverage";
  out << ",trimmed,clamped,ridge,oracle_exact\n";
  for (const auto& c : report.cells) {
    std::size_t trimmed = 0, clamped = 0, ridge = 0;
    bool exact = true;
    for (const auto& r : report.runs) {
      if (r.n != c.n) continue;
      trimmed += r.trimmed;
      clamped += r.clamped;
      ridge += r.ridge;
      exact = exact && r.oracle_max_error <= kOracleTolerance;
    }
    out << c.coefficient << ',' << c.n;
    if (report.has(Metric::bias)) out << ',' << format_double(c.median_bias);
    if (report.has(Metric::rmse)) out << ',' << format_double(c.median_rmse);
    if (report.has(Metric::coverage_of_flags)) out << ',' << format_double(report.flag_coverage(c.n));
    out << ',' << trimmed << ',' << clamped << ',' << ridge << ',' << (exact ? "true" : "false") << '\n';
  }
}

void emit_report(const RecoveryReport& report, ReportFormat format, std::ostream& out) {
  if (format == ReportFormat::json) {
    write_report_json(report, out);
  } else {
    write_report_csv(report, out);
  }
}

void emit_report(const RecoveryReport& report, ReportFormat format, const std::string& path) {
  if (path.empty() || path == "-") {
    emit_report(report, format, std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  emit_report(report, format, out);
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

RecoveryReport read_report_json(std::istream& in, const std::string& source) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(source + ": invalid report JSON: " + e.what());
  }
  RecoveryReport r;
  try {
    r.variant = parse_variant(doc.at("variant").get<std::string>());
    r.oracle_mode = doc.at("oracle_mode").get<bool>();
    r.n_replications = doc.at("replications").get<std::size_t>();
    r.sample_sizes = doc.at("sample_sizes").get<std::vector<std::size_t>>();
    r.coefficients = doc.at("coefficients").get<std::vector<std::string>>();
    for (const auto& m : doc.at("metrics")) r.metrics.push_back(parse_metric(m.get<std::string>()));
    for (const auto& c : doc.at("cells")) {
      r.cells.push_back({c.at("coefficient").get<std::string>(), c.at("n").get<std::size_t>(),
                         read_number(c, "median_bias"), read_number(c, "median_rmse")});
    }
    for (const auto& j : doc.at("runs")) {
      RunSummary s;
      s.n = j.at("n").get<std::size_t>();
      s.replication = j.at("replication").get<std::size_t>() - 1;
      s.seed = j.at("seed").get<std::uint64_t>();
      s.evaluated = j.at("evaluated").get<std::size_t>();
      s.trimmed = j.at("trimmed").get<std::size_t>();
      s.clamped = j.at("clamped").get<std::size_t>();
      s.ridge = j.at("ridge").get<std::size_t>();
      s.oracle_max_error = read_number(j, "oracle_max_error");
      if (j.contains("runtime_seconds")) {
        s.runtime_seconds = j.at("runtime_seconds").get<double>();
        r.include_runtime = true;
      }
      r.runs.push_back(s);
    }
    for (const auto& [k, v] : doc.at("config").items()) r.config.set(k, v.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(source + ": malformed report: " + e.what());
  }
  return r;
}

RecoveryReport read_report_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return read_report_json(in, path);
}

}  // namespace hetcoef
