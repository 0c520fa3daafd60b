#pragma once

#include <string>
#include <vector>

namespace dsb::io {

/// Shortest faithful rendering is not needed here; every float written by the
/// library goes through this so output files diff cleanly across runs.
std::string format_double(double value);

/// Splits one CSV line on commas. Quoting is not supported.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace dsb::io
