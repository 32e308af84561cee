/*
 * hetcoef: identification and Monte Carlo evaluation of production functions
 * with technology-dependent (heterogeneous) coefficients.
 *
 * All objects are opaque handles owned by the caller and released with the
 * matching *_destroy function. Functions returning hc_status leave a
 * description of the last failure on the calling thread, readable with
 * hc_last_error().
 */
#ifndef HETCOEF_H
#define HETCOEF_H

#include <stddef.h>

#if defined(_WIN32)
#  if defined(HETCOEF_BUILD)
#    define HC_API __declspec(dllexport)
#  else
#    define HC_API __declspec(dllimport)
#  endif
#else
#  define HC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hc_status {
  HC_OK = 0,
  HC_ERR_CONFIG = 1,
  HC_ERR_DATA = 2,
  HC_ERR_NUMERIC = 3,
  HC_ERR_IO = 4,
  HC_ERR_INVALID_ARGUMENT = 5,
  HC_ERR_DOMAIN = 6,
  HC_ERR_INTERNAL = 7
} hc_status;

typedef enum hc_flag { HC_FLAG_OK = 0, HC_FLAG_CLAMPED = 1, HC_FLAG_TRIMMED = 2 } hc_flag;

typedef enum hc_format { HC_FORMAT_JSON = 0, HC_FORMAT_CSV = 1 } hc_format;

typedef struct hc_config hc_config;
typedef struct hc_dataset hc_dataset;
typedef struct hc_estimates hc_estimates;
typedef struct hc_diagnostic hc_diagnostic;
typedef struct hc_report hc_report;

/* Coefficients not used by a variant are zero. beta_l is skilled labor in
 * the two-labor model; beta_m1 is the single material when labor is flexible. */
typedef struct hc_coefficients {
  double beta_l;
  double beta_lu;
  double beta_k;
  double beta_m1;
  double beta_m2;
  double beta_m3;
  double beta_0;
} hc_coefficients;

typedef struct hc_firm_estimate {
  double r;
  double r23;       /* NaN unless three flexible inputs */
  double shares[3]; /* flexible order; unused entries NaN */
  hc_coefficients betas;
  hc_flag flag;
  int ridge_applied; /* nonzero if any stage needed ridge stabilization */
} hc_firm_estimate;

typedef struct hc_flag_counts {
  size_t ok;
  size_t clamped;
  size_t trimmed;
  size_t ridge;
} hc_flag_counts;

HC_API const char* hc_version(void);
HC_API const char* hc_last_error(void);
HC_API const char* hc_status_name(hc_status status);

/* Configuration: flat "section.key = value" pairs. */
HC_API hc_status hc_config_create(hc_config** out);
HC_API void hc_config_destroy(hc_config* cfg);
HC_API hc_status hc_config_load_file(hc_config* cfg, const char* path);
HC_API hc_status hc_config_parse(hc_config* cfg, const char* text);
HC_API hc_status hc_config_set(hc_config* cfg, const char* key, const char* value);
/* Copies the value into buf (NUL-terminated, truncated to cap) and stores the
 * full length in *len. HC_ERR_CONFIG if the key is absent. */
HC_API hc_status hc_config_get(const hc_config* cfg, const char* key, char* buf, size_t cap, size_t* len);
/* New handle holding every key with defaults filled in; validates. */
HC_API hc_status hc_config_resolve(const hc_config* cfg, hc_config** out);
HC_API hc_status hc_config_dump(const hc_config* cfg, char* buf, size_t cap, size_t* len);

/* Datasets. Variant names: baseline, two_labor, three_flexible,
 * single_m_flexible_labor. Path "-" means stdout. */
HC_API hc_status hc_simulate(const hc_config* cfg, hc_dataset** out);
HC_API hc_status hc_dataset_read_csv(const char* path, const char* variant, int keep_truth, hc_dataset** out);
HC_API hc_status hc_dataset_write_csv(const hc_dataset* data, const char* path, int with_truth);
HC_API void hc_dataset_destroy(hc_dataset* data);
HC_API size_t hc_dataset_size(const hc_dataset* data);
HC_API int hc_dataset_has_truth(const hc_dataset* data);
HC_API const char* hc_dataset_variant(const hc_dataset* data);
HC_API size_t hc_dataset_dropped_count(const hc_dataset* data);
/* Line number (header is line 1) and reason of the i-th dropped row. The
 * reason string lives as long as the dataset. */
HC_API hc_status hc_dataset_dropped_row(const hc_dataset* data, size_t i, size_t* line, const char** reason);

/* Estimation. oracle_mode substitutes analytic conditional expectations and
 * requires hidden truth. */
HC_API hc_status hc_estimate(const hc_dataset* data, const hc_config* cfg, int oracle_mode, hc_estimates** out);
HC_API void hc_estimates_destroy(hc_estimates* est);
HC_API size_t hc_estimates_size(const hc_estimates* est);
HC_API hc_status hc_estimates_firm(const hc_estimates* est, size_t i, hc_firm_estimate* out);
HC_API hc_status hc_estimates_flag_counts(const hc_estimates* est, hc_flag_counts* out);
HC_API hc_status hc_estimates_write(const hc_estimates* est, const char* path, hc_format format, int with_truth);

/* Locality diagnostic. */
HC_API hc_status hc_diagnose(const hc_dataset* data, const hc_config* cfg, hc_diagnostic** out);
HC_API void hc_diagnostic_destroy(hc_diagnostic* diag);
HC_API size_t hc_diagnostic_size(const hc_diagnostic* diag);
HC_API size_t hc_diagnostic_flagged_count(const hc_diagnostic* diag);
HC_API hc_status hc_diagnostic_entry(const hc_diagnostic* diag, size_t i, double* relative_density,
                                     double* min_spread, int* flagged);
HC_API hc_status hc_diagnostic_write(const hc_diagnostic* diag, const char* path);

/* Monte Carlo recovery experiments. */
HC_API hc_status hc_montecarlo(const hc_config* cfg, hc_report** out);
HC_API hc_status hc_report_read_json(const char* path, hc_report** out);
HC_API void hc_report_destroy(hc_report* report);
HC_API hc_status hc_report_write(const hc_report* report, const char* path, hc_format format);
HC_API hc_status hc_report_cell(const hc_report* report, const char* coefficient, size_t n, double* median_bias,
                                double* median_rmse);
HC_API int hc_report_oracle_exact(const hc_report* report);

#ifdef __cplusplus
}
#endif

#endif
