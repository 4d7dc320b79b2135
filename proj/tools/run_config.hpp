#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tthjb/bellman.hpp"
#include "tthjb/dynamics.hpp"

namespace tthjb::cli {

/// Invalid or missing configuration entry; the message names the key.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Flat "section.key" -> value map read from an INI file, with command-line overrides applied.
class ConfigMap {
public:
    static ConfigMap from_file(const std::string& path);
    static ConfigMap from_string(const std::string& text);

    /// Applies "section.key=value".
    void set(const std::string& assignment);
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::string& raw(const std::string& key) const;
    const std::map<std::string, std::string>& values() const { return values_; }

    template <typename T>
    T get(const std::string& key, const T& fallback) const;
    template <typename T>
    T require(const std::string& key) const;

    /// FNV-1a 64-bit hash of the sorted key=value lines, as 16 hex digits.
    std::string hash() const;

private:
    std::map<std::string, std::string> values_;
};

struct RunConfig {
    PdeKind kind = PdeKind::UnstableDiffusion;
    Index dim = 0;
    BenchmarkParams params;
    BellmanConfig solver;
    Index samples = 0;  ///< J; 0 selects multiplier x dof
    double sample_multiplier = 6.0;
    Index validation_points = 0;

    std::string schedule_path = "schedule.tt";
    std::string report_path = "report.csv";

    Index benchmark_samples = 200;
    std::uint64_t benchmark_seed = 1000;
    std::vector<std::string> schedules;
    bool include_optimal = false;
    std::string table_path = "benchmark.csv";
    double sweep_max = 2.0;
    Index sweep_points = 41;
    std::string sweep_path = "sweep.csv";

    std::string riccati_path = "riccati.csv";
    double riccati_dt = 1e-3;

    std::string hash;

    ControlProblem problem() const;
    Index sample_count() const;
};

/// Parses and validates every entry; unknown keys are rejected.
RunConfig load_run_config(const ConfigMap& map);

/// Comma-separated list; a single entry is broadcast to dim - 1 ranks.
std::vector<Index> parse_ranks(const std::string& text, Index dim);

}  // namespace tthjb::cli
