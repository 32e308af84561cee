#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "core/identification.hpp"
#include "core/simulator.hpp"

namespace hetcoef {

struct DroppedRow {
  std::size_t line = 0;  // 1-based line in the file, header is line 1
  std::string firm_id;
  std::string reason;
};

struct IngestResult {
  Dataset data;
  std::vector<DroppedRow> dropped;
};

// Required columns of the variant's schema, in canonical order.
std::vector<std::string> required_columns(ModelVariant variant);
// Price columns the variant uses when prices are observed.
std::vector<std::string> price_columns(ModelVariant variant);
std::vector<std::string> truth_columns();

// Rows with nonpositive currency values or prices are dropped and reported;
// missing or unknown columns, ragged rows and non-numeric cells are errors.
// Hidden-truth columns are kept only when keep_truth is set.
IngestResult parse_csv(std::istream& in, ModelVariant variant, const std::string& source, bool keep_truth = false);
IngestResult ingest_csv(const std::string& path, ModelVariant variant, bool keep_truth = false);

void write_dataset_csv(const Dataset& data, std::ostream& out, bool with_truth);

// Per-firm estimates. When truth is given (same firm order), true_ columns
// follow the estimates.
void write_estimates_csv(const ElasticityEstimates& est, std::ostream& out, const Dataset* truth = nullptr);
void write_estimates_json(const ElasticityEstimates& est, std::ostream& out, const Dataset* truth = nullptr);

void write_locality_csv(const LocalityReport& report, std::ostream& out);

}  // namespace hetcoef
