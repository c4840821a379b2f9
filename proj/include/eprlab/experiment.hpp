#pragma once

#include "eprlab/ensemble.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace eprlab {

enum class ExperimentKind {
    Simulate,
    Estimate,
    Clt,
    Mdp,
    Lil,
    VerifyHarnack,
    VerifyIbp,
    VerifyCoupling,
    VerifyMartingale,
    VerifyMoments,
};

std::string kind_name(ExperimentKind kind);
/// Accepts "estimate", "verify-harnack", "verify harnack" and the like.
ExperimentKind parse_kind(const std::string& text);

/*
 * Everything needed to rerun an experiment. Built from a TOML document (or
 * the "config" object of a previous manifest.json); kind-specific settings
 * stay as JSON under `sections` and are validated when the config is parsed.
 */
struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::Simulate;
    nlohmann::json model;
    InitialLaw initial;
    std::vector<double> horizons;
    std::size_t replicas = 1;
    double h = 1e-3;
    std::uint64_t seed = 0;
    double burn_in = -1.0;
    unsigned workers = 1;
    std::optional<double> R;
    std::optional<double> delta;
    /// Kind-specific tables such as "mdp" or "harnack".
    nlohmann::json sections = nlohmann::json::object();

    /// Throws ConfigError naming the offending field.
    static ExperimentConfig from_json(const nlohmann::json& doc);
    /// Reads TOML; a .json path is read as a manifest and its "config" is used.
    static ExperimentConfig from_file(const std::filesystem::path& path);
    static ExperimentConfig from_toml_string(const std::string& text);

    /// Normalized echo; from_json(to_json()) reproduces the config.
    nlohmann::json to_json() const;
};

/// Converts a parsed TOML document to JSON, keeping integers as integers.
nlohmann::json toml_to_json(const std::string& text);

struct ExperimentResult {
    /// 0 when every check passed, 2 when a statistical check failed.
    int exit_code = 0;
    nlohmann::json report;
    std::vector<std::string> artifacts;
};

/*
 * Runs the configured pipeline and writes manifest.json, report.json,
 * samples.csv (ensemble kinds) and TSV plot data into `out`. Wall-clock time
 * and worker count go to run_timing.json, which is the only file that differs
 * between repeated runs. On failure error.json is written and the error is
 * rethrown.
 */
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out);

/// Process exit codes.
inline constexpr int kExitPass = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitStatisticalFailure = 2;

}  // namespace eprlab
