// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "phlab/dynamics.hpp"
#include "phlab/ergodic.hpp"

namespace phlab {

/// Rejected configuration; raised before any computation starts.
class ConfigError : public PreconditionError {
public:
    using PreconditionError::PreconditionError;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ExperimentKind { certify, weyl, lyapunov, basins, sandwich, transitivity, simulate };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_kind(const std::string& text);
const std::vector<std::string>& experiment_kind_names();

/// Flat key/value view of a config file; later entries override earlier ones.
using ConfigMap = std::map<std::string, std::string>;

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// values may be wrapped in double quotes.
ConfigMap parse_config_text(const std::string& text);
ConfigMap load_config_file(const std::filesystem::path& path);

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::simulate;

    // system
    std::int64_t a = 2, b = 1, c = 1, d = 1;
    std::vector<std::string> angles{"golden"};
    int ell = 0;  // 0: no center map (the system f)
    double epsilon = 0.5;
    std::string phase = "0";

    // run sizes
    std::optional<std::size_t> n;  // absent: kind default
    std::size_t stride = 1;
    std::size_t samples = 10000;
    std::size_t max_iter = kDefaultMaxIter;
    double radius = kDefaultRadius;
    std::string sampler = "uniform";
    std::int64_t box_torus = 2, box_rotation = 2, box_center = 0;
    std::size_t bins = 8;
    std::int64_t lattice_bound = 50;
    std::int64_t max_k = 8;
    int step_budget = kDefaultStepBudget;
    double margin_floor = static_cast<double>(kDefaultMarginFloor);
    std::optional<double> eps;  // absent: kind default
    std::string observable = "character:1,0,0,0";
    double weyl_threshold = 0.02;
    double lyapunov_tol = 1e-3;

    // start point; random from the seed when absent
    std::optional<std::string> x0, y0, w0, z0;

    std::optional<std::uint64_t> seed;
    unsigned workers = 1;
    std::string out;
};

/// Builds a config from keys; unknown keys and malformed values raise ConfigError.
ExperimentConfig config_from_map(const ConfigMap& map);
nlohmann::json config_to_json(const ExperimentConfig& config);

/// Checks every precondition the run needs. Throws ConfigError.
void validate(const ExperimentConfig& config);

/// Orbit length and resolution after applying per-kind defaults.
std::size_t effective_n(const ExperimentConfig& config);
double effective_eps(const ExperimentConfig& config);

ProductSystem make_system(const ExperimentConfig& config);
/// Accepts `p/q` or a decimal literal; reduced mod 1.
TorusCoord parse_torus_coord(const std::string& text);
/// Parses `character:m,n,k..[,j]`, `trig:idx@coef;idx@coef`, `constant:c`,
/// `exp_cos_x` or `exp_cos_z`.
Observable parse_observable(const std::string& text, const ProductSystem& system);
SystemPoint start_point(const ExperimentConfig& config, const ProductSystem& system);

/// Resolved output directory, honoring PHLAB_OUTPUT_ROOT for relative paths.
std::filesystem::path output_directory(const ExperimentConfig& config);

inline constexpr const char* kOutputRootEnv = "PHLAB_OUTPUT_ROOT";
inline constexpr const char* kCsvSchemaVersion = "v1";

struct AssertionResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct RunManifest {
    nlohmann::json config;
    std::string tool_version;
    std::string started_at;
    double wall_seconds = 0;
    std::vector<std::string> outputs;
    std::vector<AssertionResult> assertions;
    nlohmann::json summary;
    std::string summary_text;

    bool passed() const;
    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
};

inline constexpr const char* kManifestName = "manifest.json";

/// Validates, executes, and writes CSV outputs plus manifest.json into the
/// output directory. Assertion failures are recorded, not thrown.
RunManifest run(const ExperimentConfig& config);

/// Human-readable aggregate of one or more manifests (files or directories).
std::string report(const std::vector<std::filesystem::path>& manifest_paths);

/// Writes `contents` via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string tool_version();

}  // namespace phlab
