#include "hetcoef/hetcoef.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <new>
#include <string>

#include "core/error.hpp"
#include "core/identification.hpp"
#include "core/kv_config.hpp"
#include "harness/csv_io.hpp"
#include "harness/experiment.hpp"
#include "harness/montecarlo.hpp"
#include "harness/report.hpp"

#ifndef HETCOEF_VERSION
#define HETCOEF_VERSION "0.0.0"
#endif

struct hc_config {
  hetcoef::KeyValueConfig kv;
};

struct hc_dataset {
  hetcoef::Dataset data;
  std::vector<hetcoef::DroppedRow> dropped;
};

struct hc_estimates {
  hetcoef::ElasticityEstimates est;
  std::shared_ptr<const hetcoef::Dataset> source;
};

struct hc_diagnostic {
  hetcoef::LocalityReport report;
};

struct hc_report {
  hetcoef::RecoveryReport report;
};

namespace {

thread_local std::string last_error;

hc_status fail(hc_status s, const std::string& msg) {
  last_error = msg;
  return s;
}

hc_status status_of(hetcoef::ErrorKind k) {
  switch (k) {
    case hetcoef::ErrorKind::config: return HC_ERR_CONFIG;
    case hetcoef::ErrorKind::data: return HC_ERR_DATA;
    case hetcoef::ErrorKind::numeric: return HC_ERR_NUMERIC;
    case hetcoef::ErrorKind::domain: return HC_ERR_DOMAIN;
    case hetcoef::ErrorKind::io: return HC_ERR_IO;
  }
  return HC_ERR_INTERNAL;
}

template <class F>
hc_status guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return HC_OK;
  } catch (const hetcoef::Error& e) {
    return fail(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(HC_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(HC_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(HC_ERR_INTERNAL, "unknown failure");
  }
}

template <class Write>
void write_to(const char* path, Write&& write) {
  const std::string p = path ? path : "-";
  if (p.empty() || p == "-") {
    write(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(p, std::ios::binary);
  if (!out) throw hetcoef::IoError("cannot open '" + p + "' for writing");
  write(out);
  out.flush();
  if (!out) throw hetcoef::IoError("failed writing '" + p + "'");
}

void copy_out(const std::string& s, char* buf, size_t cap, size_t* len) {
  if (len) *len = s.size();
  if (buf && cap > 0) {
    const size_t n = std::min(cap - 1, s.size());
    std::memcpy(buf, s.data(), n);
    buf[n] = '\0';
  }
}

// Experiment configuration for data of a known variant: when the caller did
// not choose a variant, the dataset's applies.
hetcoef::ExperimentConfig config_for(const hc_config* cfg, hetcoef::ModelVariant variant) {
  hetcoef::KeyValueConfig kv = cfg ? cfg->kv : hetcoef::KeyValueConfig{};
  if (!kv.contains("simulation.variant") && !kv.contains("estimator.variant")) {
    kv.set("simulation.variant", std::string(hetcoef::to_string(variant)));
  }
  hetcoef::ExperimentConfig exp = hetcoef::experiment_from_config(kv);
  if (exp.estimator.variant != variant) {
    throw hetcoef::ConfigError("configured variant " + std::string(hetcoef::to_string(exp.estimator.variant)) +
                               " does not match the dataset variant " + std::string(hetcoef::to_string(variant)));
  }
  return exp;
}

hetcoef::ReportFormat format_of(hc_format f) {
  return f == HC_FORMAT_CSV ? hetcoef::ReportFormat::csv : hetcoef::ReportFormat::json;
}

#define HC_REQUIRE(cond, what)                                   \
  do {                                                           \
    if (!(cond)) return fail(HC_ERR_INVALID_ARGUMENT, what);     \
  } while (0)

}  // namespace

extern "C" {

const char* hc_version(void) { return HETCOEF_VERSION; }

const char* hc_last_error(void) { return last_error.c_str(); }

const char* hc_status_name(hc_status status) {
  switch (status) {
    case HC_OK: return "ok";
    case HC_ERR_CONFIG: return "config error";
    case HC_ERR_DATA: return "data error";
    case HC_ERR_NUMERIC: return "numeric error";
    case HC_ERR_IO: return "io error";
    case HC_ERR_INVALID_ARGUMENT: return "invalid argument";
    case HC_ERR_DOMAIN: return "domain error";
    case HC_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

// ---------------------------------------------------------------------------
// Configuration

hc_status hc_config_create(hc_config** out) {
  HC_REQUIRE(out, "hc_config_create: out is null");
  return guarded([&] { *out = new hc_config(); });
}

void hc_config_destroy(hc_config* cfg) { delete cfg; }

hc_status hc_config_load_file(hc_config* cfg, const char* path) {
  HC_REQUIRE(cfg && path, "hc_config_load_file: null argument");
  return guarded([&] { cfg->kv.merge(hetcoef::KeyValueConfig::load_file(path)); });
}

hc_status hc_config_parse(hc_config* cfg, const char* text) {
  HC_REQUIRE(cfg && text, "hc_config_parse: null argument");
  return guarded([&] { cfg->kv.merge(hetcoef::KeyValueConfig::parse(text)); });
}

hc_status hc_config_set(hc_config* cfg, const char* key, const char* value) {
  HC_REQUIRE(cfg && key && value, "hc_config_set: null argument");
  HC_REQUIRE(*key, "hc_config_set: empty key");
  return guarded([&] { cfg->kv.set(key, value); });
}

hc_status hc_config_get(const hc_config* cfg, const char* key, char* buf, size_t cap, size_t* len) {
  HC_REQUIRE(cfg && key, "hc_config_get: null argument");
  return guarded([&] {
    const auto v = cfg->kv.find(key);
    if (!v) throw hetcoef::ConfigError(std::string("config key '") + key + "' is not set");
    copy_out(*v, buf, cap, len);
  });
}

hc_status hc_config_resolve(const hc_config* cfg, hc_config** out) {
  HC_REQUIRE(cfg && out, "hc_config_resolve: null argument");
  return guarded([&] {
    auto resolved = std::make_unique<hc_config>();
    resolved->kv = hetcoef::resolve_config(cfg->kv);
    *out = resolved.release();
  });
}

hc_status hc_config_dump(const hc_config* cfg, char* buf, size_t cap, size_t* len) {
  HC_REQUIRE(cfg, "hc_config_dump: null config");
  return guarded([&] { copy_out(cfg->kv.dump(), buf, cap, len); });
}

// ---------------------------------------------------------------------------
// Datasets

hc_status hc_simulate(const hc_config* cfg, hc_dataset** out) {
  HC_REQUIRE(cfg && out, "hc_simulate: null argument");
  return guarded([&] {
    const hetcoef::ExperimentConfig exp = hetcoef::experiment_from_config(cfg->kv);
    auto d = std::make_unique<hc_dataset>();
    d->data = hetcoef::simulate_cross_section(exp.simulation);
    *out = d.release();
  });
}

hc_status hc_dataset_read_csv(const char* path, const char* variant, int keep_truth, hc_dataset** out) {
  HC_REQUIRE(path && variant && out, "hc_dataset_read_csv: null argument");
  return guarded([&] {
    auto result = hetcoef::ingest_csv(path, hetcoef::parse_variant(variant), keep_truth != 0);
    auto d = std::make_unique<hc_dataset>();
    d->data = std::move(result.data);
    d->dropped = std::move(result.dropped);
    *out = d.release();
  });
}

hc_status hc_dataset_write_csv(const hc_dataset* data, const char* path, int with_truth) {
  HC_REQUIRE(data, "hc_dataset_write_csv: null dataset");
  return guarded([&] { write_to(path, [&](std::ostream& o) { hetcoef::write_dataset_csv(data->data, o, with_truth != 0); }); });
}

void hc_dataset_destroy(hc_dataset* data) { delete data; }

size_t hc_dataset_size(const hc_dataset* data) { return data ? data->data.size() : 0; }

int hc_dataset_has_truth(const hc_dataset* data) { return data && data->data.has_truth() ? 1 : 0; }

const char* hc_dataset_variant(const hc_dataset* data) {
  return data ? hetcoef::to_string(data->data.variant).data() : "";
}

size_t hc_dataset_dropped_count(const hc_dataset* data) { return data ? data->dropped.size() : 0; }

hc_status hc_dataset_dropped_row(const hc_dataset* data, size_t i, size_t* line, const char** reason) {
  HC_REQUIRE(data, "hc_dataset_dropped_row: null dataset");
  HC_REQUIRE(i < data->dropped.size(), "hc_dataset_dropped_row: index out of range");
  if (line) *line = data->dropped[i].line;
  if (reason) *reason = data->dropped[i].reason.c_str();
  return HC_OK;
}

// ---------------------------------------------------------------------------
// Estimation

hc_status hc_estimate(const hc_dataset* data, const hc_config* cfg, int oracle_mode, hc_estimates** out) {
  HC_REQUIRE(data && out, "hc_estimate: null argument");
  return guarded([&] {
    const hetcoef::ExperimentConfig exp = config_for(cfg, data->data.variant);
    auto e = std::make_unique<hc_estimates>();
    e->est = hetcoef::run_pipeline(data->data, exp.estimator,
                                   oracle_mode ? hetcoef::ExpectationMode::oracle : hetcoef::ExpectationMode::local_linear);
    if (data->data.has_truth()) e->source = std::make_shared<hetcoef::Dataset>(data->data);
    *out = e.release();
  });
}

void hc_estimates_destroy(hc_estimates* est) { delete est; }

size_t hc_estimates_size(const hc_estimates* est) { return est ? est->est.firms.size() : 0; }

hc_status hc_estimates_firm(const hc_estimates* est, size_t i, hc_firm_estimate* out) {
  HC_REQUIRE(est && out, "hc_estimates_firm: null argument");
  HC_REQUIRE(i < est->est.firms.size(), "hc_estimates_firm: index out of range");
  const hetcoef::FirmEstimate& f = est->est.firms[i];
  const int used = hetcoef::flexible_count(est->est.variant);
  out->r = f.ratios.r;
  out->r23 = est->est.variant == hetcoef::ModelVariant::three_flexible ? f.ratios.r23
                                                                       : std::numeric_limits<double>::quiet_NaN();
  for (int j = 0; j < 3; ++j) out->shares[j] = j < used ? f.shares[static_cast<size_t>(j)] : std::numeric_limits<double>::quiet_NaN();
  out->betas = {f.betas.beta_l, f.betas.beta_lu, f.betas.beta_k, f.betas.beta_m1,
                f.betas.beta_m2, f.betas.beta_m3, f.betas.beta_0};
  out->flag = f.flag == hetcoef::FirmFlag::ok ? HC_FLAG_OK : f.flag == hetcoef::FirmFlag::clamped ? HC_FLAG_CLAMPED : HC_FLAG_TRIMMED;
  out->ridge_applied = f.share_fit == hetcoef::FitCondition::ridge_applied ||
                       f.state_fit == hetcoef::FitCondition::ridge_applied ||
                       f.productivity_fit == hetcoef::FitCondition::ridge_applied;
  return HC_OK;
}

hc_status hc_estimates_flag_counts(const hc_estimates* est, hc_flag_counts* out) {
  HC_REQUIRE(est && out, "hc_estimates_flag_counts: null argument");
  out->ok = est->est.count(hetcoef::FirmFlag::ok);
  out->clamped = est->est.count(hetcoef::FirmFlag::clamped);
  out->trimmed = est->est.count(hetcoef::FirmFlag::trimmed);
  out->ridge = est->est.ridge_count();
  return HC_OK;
}

hc_status hc_estimates_write(const hc_estimates* est, const char* path, hc_format format, int with_truth) {
  HC_REQUIRE(est, "hc_estimates_write: null estimates");
  return guarded([&] {
    if (with_truth && !est->source) throw hetcoef::DataError("estimates were computed from data without hidden truth");
    const hetcoef::Dataset* truth = with_truth ? est->source.get() : nullptr;
    write_to(path, [&](std::ostream& o) {
      if (format == HC_FORMAT_CSV) {
        hetcoef::write_estimates_csv(est->est, o, truth);
      } else {
        hetcoef::write_estimates_json(est->est, o, truth);
      }
    });
  });
}

// ---------------------------------------------------------------------------
// Locality diagnostic

hc_status hc_diagnose(const hc_dataset* data, const hc_config* cfg, hc_diagnostic** out) {
  HC_REQUIRE(data && out, "hc_diagnose: null argument");
  return guarded([&] {
    const hetcoef::ExperimentConfig exp = config_for(cfg, data->data.variant);
    auto d = std::make_unique<hc_diagnostic>();
    d->report = hetcoef::locality_diagnostic(data->data, exp.estimator);
    *out = d.release();
  });
}

void hc_diagnostic_destroy(hc_diagnostic* diag) { delete diag; }

size_t hc_diagnostic_size(const hc_diagnostic* diag) { return diag ? diag->report.entries.size() : 0; }

size_t hc_diagnostic_flagged_count(const hc_diagnostic* diag) { return diag ? diag->report.flagged_count() : 0; }

hc_status hc_diagnostic_entry(const hc_diagnostic* diag, size_t i, double* relative_density, double* min_spread,
                              int* flagged) {
  HC_REQUIRE(diag, "hc_diagnostic_entry: null diagnostic");
  HC_REQUIRE(i < diag->report.entries.size(), "hc_diagnostic_entry: index out of range");
  const auto& e = diag->report.entries[i];
  if (relative_density) *relative_density = e.relative_density;
  if (min_spread) *min_spread = e.min_spread;
  if (flagged) *flagged = e.flagged ? 1 : 0;
  return HC_OK;
}

hc_status hc_diagnostic_write(const hc_diagnostic* diag, const char* path) {
  HC_REQUIRE(diag, "hc_diagnostic_write: null diagnostic");
  return guarded([&] { write_to(path, [&](std::ostream& o) { hetcoef::write_locality_csv(diag->report, o); }); });
}

// ---------------------------------------------------------------------------
// Monte Carlo reports

hc_status hc_montecarlo(const hc_config* cfg, hc_report** out) {
  HC_REQUIRE(cfg && out, "hc_montecarlo: null argument");
  return guarded([&] {
    auto r = std::make_unique<hc_report>();
    r->report = hetcoef::run_montecarlo(hetcoef::experiment_from_config(cfg->kv));
    *out = r.release();
  });
}

hc_status hc_report_read_json(const char* path, hc_report** out) {
  HC_REQUIRE(path && out, "hc_report_read_json: null argument");
  return guarded([&] {
    auto r = std::make_unique<hc_report>();
    r->report = hetcoef::read_report_json(std::string(path));
    *out = r.release();
  });
}

void hc_report_destroy(hc_report* report) { delete report; }

hc_status hc_report_write(const hc_report* report, const char* path, hc_format format) {
  HC_REQUIRE(report, "hc_report_write: null report");
  return guarded([&] { write_to(path, [&](std::ostream& o) { hetcoef::emit_report(report->report, format_of(format), o); }); });
}

hc_status hc_report_cell(const hc_report* report, const char* coefficient, size_t n, double* median_bias,
                         double* median_rmse) {
  HC_REQUIRE(report && coefficient, "hc_report_cell: null argument");
  const auto* c = report->report.cell(coefficient, n);
  if (!c) {
    return fail(HC_ERR_INVALID_ARGUMENT, std::string("no report cell for ") + coefficient + " at n=" + std::to_string(n));
  }
  if (median_bias) *median_bias = c->median_bias;
  if (median_rmse) *median_rmse = c->median_rmse;
  return HC_OK;
}

int hc_report_oracle_exact(const hc_report* report) { return report && report->report.oracle_exact() ? 1 : 0; }

}  // extern "C"
