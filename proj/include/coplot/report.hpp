#pragma once

// CSV and JSON report emission. Field order is fixed and numbers use the
// shortest round-trip form, so identical runs give identical bytes.

#include "coplot/pipeline.hpp"

#include <span>
#include <string>

namespace coplot {

/// Shortest decimal form that reads back to the same double.
std::string format_number(double v);

std::string report_to_json(const RunReport& report);
RunReport report_from_json(const std::string& text);

/// Columns mirror the sweep axes: bytes vs recall, FLOPs vs k, noise vs recall.
std::string sweep_csv(std::span<const RunReport> reports);
std::string sweep_json(std::span<const RunReport> reports);

std::string ordering_csv(std::span<const OrderingBenchRow> rows);
std::string scan_csv(std::span<const ScanBenchRow> rows);

/// Throws IoError when the file cannot be written.
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace coplot
