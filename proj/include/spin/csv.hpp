#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace spin::csv {

using Row = std::vector<std::string>;

// Splits on commas; cells are trimmed of surrounding whitespace and a trailing
// '\r'. Blank lines are skipped. Throws ValidationError if the file is missing.
std::vector<Row> read(const std::filesystem::path& path);

// Parses a numeric cell into out. Returns false for a missing cell (empty or
// "nan" in any case); anything else unparsable throws ValidationError naming
// the position.
bool parse_number(std::string_view cell, double& out, const std::string& where);

std::string format_number(double v);

}  // namespace spin::csv
