#pragma once

#include <iosfwd>
#include <string>

#include "harness/montecarlo.hpp"

namespace hetcoef {

void write_report_json(const RecoveryReport& report, std::ostream& out);
// One row per (coefficient, sample size) cell, preceded by the resolved
// configuration as '#' comment lines.
void write_report_csv(const RecoveryReport& report, std::ostream& out);
void emit_report(const RecoveryReport& report, ReportFormat format, std::ostream& out);
// Path "-" (or empty) writes to stdout.
void emit_report(const RecoveryReport& report, ReportFormat format, const std::string& path);

RecoveryReport read_report_json(std::istream& in, const std::string& source = "<stream>");
RecoveryReport read_report_json(const std::string& path);

}  // namespace hetcoef
