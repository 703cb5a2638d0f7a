#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "temp/harness/metrics.hpp"

namespace temp::harness {

/// Fixed metrics CSV header; see docs/FILE_FORMATS.md.
extern const char* const kMetricsHeader;

/// Floating-point cells use 9 significant digits; an absent strength is an
/// empty cell.
std::string format_number(double v);
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& records);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> read_metrics_csv(const std::string& path);

/// Writes `content` to path through a temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace temp::harness
