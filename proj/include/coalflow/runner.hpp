#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "coalflow/estimate.hpp"

// Experiment orchestration: schema-validated JSON configs in, report
// artifacts out. Everything is a pure function of (config, seed); wall_time
// is the only nondeterministic report field.

namespace coalflow::runner {

inline constexpr std::uint64_t kDefaultSeed = 12345;  // fixed, not time-based
inline constexpr const char* kSchemaVersion = "1";

// Validation failure; names the offending field. Maps to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Resource-guard trip (work or triangle caps). Maps to exit code 3.
struct GuardError : std::runtime_error {
    explicit GuardError(const std::string& msg) : std::runtime_error(msg) {}
};

struct Overrides {
    std::optional<long long> samples;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> out_dir;
    bool raw = false;
};

struct ExperimentConfig {
    std::string study;
    std::string model;
    long long samples = 1000;
    std::uint64_t seed = kDefaultSeed;
    int threads = 0;
    std::string out_dir = ".";
    bool raw = false;

    double max_work = 5e10;          // particles x steps x samples guard
    std::int64_t max_triangles = 14348907;  // 3^15

    nlohmann::json effective;  // the config as run, embedded in reports
    nlohmann::json raw_config; // study/model parameter access
};

// Parses and validates a config object; unknown fields are rejected and every
// error names the field. CLI overrides beat file values.
ExperimentConfig parse_config(const nlohmann::json& j, const Overrides& ov);

estimate::Tube tube_from_json(const nlohmann::json& j);
nlohmann::json tube_to_json(const estimate::Tube& t);

struct RunResult {
    nlohmann::json report;
    std::string raw_lines;  // JSON-lines replica records when requested
    std::string summary;    // one-line outcome
};

// Executes the configured study. Throws ConfigError / GuardError.
RunResult run_study(const ExperimentConfig& cfg);

// Full CLI behaviour: load config file, run, write report.json / report.csv
// (and replicas.jsonl with raw), print the summary. Returns the exit code
// (0 ok, 2 validation, 3 guard).
int run_from_file(const std::string& config_path, const Overrides& ov);

}  // namespace coalflow::runner
