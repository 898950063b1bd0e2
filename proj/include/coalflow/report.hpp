#pragma once

#include <string>

#include "json.hpp"

// Report persistence and rendering. Reports are JSON with the core fields
// {tubes, ladder, p_hat[], stderr[], samples, seed, monotone_flag, wall_time}
// plus study-specific extras, and a lossless CSV mirror of the ladder rows.

namespace coalflow::report {

// CSV mirror of a report's ladder rows; numeric fields round-trip exactly.
std::string to_csv(const nlohmann::json& report);

// Human-readable ladder table (one row per rung, monotone flags, extras).
std::string render_table(const nlohmann::json& report);

void write_text_file(const std::string& path, const std::string& content);
nlohmann::json read_json_file(const std::string& path);

// Exact decimal-to-binary round-trip formatting for doubles.
std::string format_double(double v);

}  // namespace coalflow::report
