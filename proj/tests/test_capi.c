#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "hetcoef/hetcoef.h"

static int failures = 0;

#define CHECK(cond)                                                   \
  do {                                                                \
    if (!(cond)) {                                                    \
      fprintf(stderr, "%s:%d: CHECK(%s) failed\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                     \
    }                                                                 \
  } while (0)

#define CHECK_OK(expr)                                                          \
  do {                                                                          \
    hc_status st_ = (expr);                                                     \
    if (st_ != HC_OK) {                                                         \
      fprintf(stderr, "%s:%d: %s -> %s: %s\n", __FILE__, __LINE__, #expr,       \
              hc_status_name(st_), hc_last_error());                            \
      ++failures;                                                               \
    }                                                                           \
  } while (0)

static char dir[1024];

static const char* path_in(const char* name) {
  static char buf[2048];
  snprintf(buf, sizeof buf, "%s/%s", dir, name);
  return buf;
}

static void test_config(void) {
  hc_config* cfg = NULL;
  hc_config* resolved = NULL;
  char buf[64];
  size_t len = 0;
  CHECK_OK(hc_config_create(&cfg));
  CHECK_OK(hc_config_parse(cfg, "simulation.n_firms = 300\n"));
  CHECK_OK(hc_config_set(cfg, "simulation.seed", "9"));
  CHECK_OK(hc_config_get(cfg, "simulation.n_firms", buf, sizeof buf, &len));
  CHECK(strcmp(buf, "300") == 0 && len == 3);
  CHECK_OK(hc_config_get(cfg, "simulation.n_firms", buf, 2, &len));
  CHECK(strcmp(buf, "3") == 0 && len == 3);
  CHECK(hc_config_get(cfg, "absent.key", buf, sizeof buf, &len) == HC_ERR_CONFIG);
  CHECK(strlen(hc_last_error()) > 0);
  CHECK_OK(hc_config_resolve(cfg, &resolved));
  CHECK_OK(hc_config_get(resolved, "experiment.replications", buf, sizeof buf, &len));
  CHECK(strcmp(buf, "20") == 0);
  CHECK_OK(hc_config_dump(resolved, NULL, 0, &len));
  CHECK(len > 100);
  hc_config_destroy(resolved);

  CHECK_OK(hc_config_set(cfg, "simulation.n_firm", "10"));
  CHECK(hc_config_resolve(cfg, &resolved) == HC_ERR_CONFIG);
  CHECK(strstr(hc_last_error(), "simulation.n_firm") != NULL);
  CHECK(hc_config_parse(cfg, "broken line\n") == HC_ERR_CONFIG);
  hc_config_destroy(cfg);
  hc_config_destroy(NULL);
}

static void test_pipeline(void) {
  hc_config* cfg = NULL;
  hc_dataset* data = NULL;
  hc_dataset* back = NULL;
  hc_estimates* est = NULL;
  hc_estimates* oracle = NULL;
  hc_diagnostic* diag = NULL;
  hc_firm_estimate firm;
  hc_flag_counts counts;
  size_t i;
  double worst = 0.0;

  CHECK_OK(hc_config_create(&cfg));
  CHECK_OK(hc_config_set(cfg, "simulation.n_firms", "400"));
  CHECK_OK(hc_simulate(cfg, &data));
  CHECK(hc_dataset_size(data) == 400);
  CHECK(hc_dataset_has_truth(data));
  CHECK(strcmp(hc_dataset_variant(data), "baseline") == 0);

  CHECK_OK(hc_dataset_write_csv(data, path_in("capi_data.csv"), 1));
  CHECK_OK(hc_dataset_read_csv(path_in("capi_data.csv"), "baseline", 1, &back));
  CHECK(hc_dataset_size(back) == 400);
  CHECK(hc_dataset_dropped_count(back) == 0);

  CHECK_OK(hc_estimate(back, cfg, 1, &oracle));
  for (i = 0; i < hc_estimates_size(oracle); ++i) {
    CHECK_OK(hc_estimates_firm(oracle, i, &firm));
    if (fabs(firm.betas.beta_l - 0.25) > worst) worst = fabs(firm.betas.beta_l - 0.25);
    CHECK(firm.betas.beta_m3 == 0.0);
    CHECK(isnan(firm.r23));
  }
  CHECK(worst <= 1e-10);
  CHECK(hc_estimates_firm(oracle, 400, &firm) == HC_ERR_INVALID_ARGUMENT);

  CHECK_OK(hc_estimate(back, cfg, 0, &est));
  CHECK_OK(hc_estimates_flag_counts(est, &counts));
  CHECK(counts.ok + counts.clamped + counts.trimmed == 400);
  CHECK_OK(hc_estimates_write(est, path_in("capi_est.json"), HC_FORMAT_JSON, 0));
  CHECK_OK(hc_estimates_write(est, path_in("capi_est.csv"), HC_FORMAT_CSV, 1));

  CHECK_OK(hc_diagnose(back, cfg, &diag));
  CHECK(hc_diagnostic_size(diag) == 400);
  CHECK(hc_diagnostic_flagged_count(diag) < 400);
  CHECK_OK(hc_diagnostic_write(diag, path_in("capi_diag.csv")));

  CHECK(hc_config_set(cfg, "estimator.variant", "two_labor") == HC_OK);
  CHECK(hc_estimate(back, cfg, 0, &est) == HC_ERR_CONFIG);

  hc_diagnostic_destroy(diag);
  hc_estimates_destroy(est);
  hc_estimates_destroy(oracle);
  hc_dataset_destroy(back);
  hc_dataset_destroy(data);
  hc_config_destroy(cfg);
}

static void test_ingest_errors(void) {
  hc_dataset* data = NULL;
  size_t line = 0;
  const char* reason = NULL;
  FILE* f = fopen(path_in("capi_bad.csv"), "w");
  fputs("firm_id,output_value,cost_m1,cost_m2,log_labor,log_capital\na,10,2,1.6,0.1,0.2\nb,9,0,1,0,0\n", f);
  fclose(f);
  CHECK_OK(hc_dataset_read_csv(path_in("capi_bad.csv"), "baseline", 0, &data));
  CHECK(hc_dataset_size(data) == 1);
  CHECK(hc_dataset_dropped_count(data) == 1);
  CHECK(!hc_dataset_has_truth(data));
  {
    hc_estimates* est = NULL;
    CHECK(hc_estimate(data, NULL, 1, &est) == HC_ERR_DATA);
    CHECK(est == NULL);
  }
  CHECK_OK(hc_dataset_dropped_row(data, 0, &line, &reason));
  CHECK(line == 3);
  CHECK(strcmp(reason, "nonpositive cost") == 0);
  hc_dataset_destroy(data);

  data = NULL;
  f = fopen(path_in("capi_bad.csv"), "w");
  fputs("firm_id,output_value,cost_m1,cost_m2,log_labor\na,10,2,1.6,0.1\n", f);
  fclose(f);
  CHECK(hc_dataset_read_csv(path_in("capi_bad.csv"), "baseline", 0, &data) == HC_ERR_DATA);
  CHECK(data == NULL);
  CHECK(strstr(hc_last_error(), "log_capital") != NULL);
  CHECK(hc_dataset_read_csv(path_in("does_not_exist.csv"), "baseline", 0, &data) == HC_ERR_IO);
  CHECK(hc_dataset_read_csv(path_in("capi_bad.csv"), "four_labor", 0, &data) == HC_ERR_CONFIG);
  CHECK(hc_dataset_read_csv(NULL, "baseline", 0, &data) == HC_ERR_INVALID_ARGUMENT);
}

static void test_montecarlo(void) {
  hc_config* cfg = NULL;
  hc_report* report = NULL;
  hc_report* back = NULL;
  double bias = 0.0, rmse = 0.0, bias2 = 0.0, rmse2 = 0.0;
  CHECK_OK(hc_config_create(&cfg));
  CHECK_OK(hc_config_parse(cfg, "experiment.replications = 2\nexperiment.sample_sizes = 200\n"));
  CHECK_OK(hc_montecarlo(cfg, &report));
  CHECK(hc_report_oracle_exact(report));
  CHECK_OK(hc_report_cell(report, "beta_k", 200, &bias, &rmse));
  CHECK(rmse > 0.0 && rmse < 0.2);
  CHECK(hc_report_cell(report, "beta_k", 300, &bias, &rmse) == HC_ERR_INVALID_ARGUMENT);
  CHECK_OK(hc_report_write(report, path_in("capi_report.json"), HC_FORMAT_JSON));
  CHECK_OK(hc_report_read_json(path_in("capi_report.json"), &back));
  CHECK_OK(hc_report_cell(back, "beta_k", 200, &bias2, &rmse2));
  CHECK(memcmp(&bias, &bias2, sizeof bias) == 0);
  CHECK(memcmp(&rmse, &rmse2, sizeof rmse) == 0);
  hc_report_destroy(back);
  hc_report_destroy(report);
  hc_config_destroy(cfg);
}

int main(int argc, char** argv) {
  snprintf(dir, sizeof dir, "%s", argc > 1 ? argv[1] : ".");
  CHECK(strlen(hc_version()) > 0);
  CHECK(strcmp(hc_status_name(HC_ERR_DATA), "data error") == 0);
  CHECK(hc_config_create(NULL) == HC_ERR_INVALID_ARGUMENT);
  test_config();
  test_pipeline();
  test_ingest_errors();
  test_montecarlo();
  if (failures) {
    fprintf(stderr, "%d check(s) failed\n", failures);
    return EXIT_FAILURE;
  }
  printf("all C API checks passed\n");
  return EXIT_SUCCESS;
}
