// SPDX-License-Identifier: Apache-2.0
#include "phlab/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "phlab/lattice.hpp"

#ifndef PHLAB_VERSION
#define PHLAB_VERSION "0.0.0"
#endif

namespace phlab {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kStartPointStream = ~std::uint64_t{0};

std::string trim(std::string_view sv) {
    const auto first = sv.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = sv.find_last_not_of(" \t\r\n");
    return std::string(sv.substr(first, last - first + 1));
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(text);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    if (!text.empty() && text.back() == sep) out.emplace_back();
    return out;
}

template <class Int>
Int parse_integer(const std::string& key, const std::string& value) {
    Int out{};
    const std::string v = trim(value);
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
        throw ConfigError("config: '" + key + "' expects an integer, got '" + value + "'");
    }
    return out;
}

double parse_real(const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    char* end = nullptr;
    const double out = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(out)) {
        throw ConfigError("config: '" + key + "' expects a real number, got '" + value + "'");
    }
    return out;
}

std::size_t parse_count(const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    // Accept scientific shorthand such as 1e6 for sizes.
    if (v.find_first_of("eE") != std::string::npos) {
        const double d = parse_real(key, v);
        if (d < 0 || d != std::floor(d) || d > 1e15) throw ConfigError("config: '" + key + "' expects a count");
        return static_cast<std::size_t>(d);
    }
    if (!v.empty() && v.front() == '-') throw ConfigError("config: '" + key + "' must not be negative");
    return parse_integer<std::size_t>(key, v);
}

std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Minimal CSV builder: versioned schema comment, header, LF line endings.
class CsvTable {
public:
    CsvTable(std::string schema, std::vector<std::string> columns) : columns_(std::move(columns)) {
        text_ = "# phlab-csv " + std::string(kCsvSchemaVersion) + " " + schema + "\n";
        text_ += join(columns_) + "\n";
    }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != columns_.size()) throw std::logic_error("CsvTable: column count mismatch");
        text_ += join(cells) + "\n";
    }

    const std::string& text() const { return text_; }

private:
    static std::string join(const std::vector<std::string>& cells) {
        std::string out;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += cells[i];
        }
        return out;
    }

    std::vector<std::string> columns_;
    std::string text_;
};

struct ExperimentOutput {
    std::vector<std::pair<std::string, std::string>> files;  // name, contents
    std::vector<AssertionResult> assertions;
    nlohmann::json summary = nlohmann::json::object();
};

std::vector<std::string> frequency_columns(const ProductSystem& s) {
    std::vector<std::string> cols{"m", "n"};
    for (std::size_t i = 0; i < s.rotation_count(); ++i) cols.push_back("k" + std::to_string(i + 1));
    if (s.has_center()) cols.push_back("j");
    return cols;
}

std::vector<std::string> frequency_cells(const FrequencyIndex& idx) {
    std::vector<std::string> cells{std::to_string(idx.m), std::to_string(idx.n)};
    for (auto k : idx.k) cells.push_back(std::to_string(k));
    if (idx.j) cells.push_back(std::to_string(*idx.j));
    return cells;
}

bool rotation_only(const FrequencyIndex& idx) {
    return idx.m == 0 && idx.n == 0 && idx.j.value_or(0) == 0 &&
           std::any_of(idx.k.begin(), idx.k.end(), [](std::int64_t v) { return v != 0; });
}

// ---- experiment bodies -----------------------------------------------------

ExperimentOutput run_certify(const ExperimentConfig& cfg, const ProductSystem& s) {
    const ErgodicityReport rep = ergodicity_certificate(s, cfg.lattice_bound, cfg.max_k, cfg.step_budget,
                                                        cfg.margin_floor, cfg.workers);
    ExperimentOutput out;
    CsvTable escape("escape", {"m", "n", "steps"});
    for (const auto& e : rep.escape.entries) {
        escape.row({std::to_string(e.m), std::to_string(e.n), std::to_string(e.steps)});
    }
    CsvTable margins("margins", {"factor", "k", "margin"});
    for (const auto& m : rep.margins) {
        margins.row({std::to_string(m.factor + 1), std::to_string(m.k), format_real(static_cast<double>(m.margin))});
    }
    out.files = {{"escape.csv", escape.text()}, {"margins.csv", margins.text()}};

    out.assertions.push_back({"escape_certificate", rep.escape.passed(),
                              std::to_string(rep.escape.entries.size()) + " indices, " +
                                  std::to_string(rep.escape.failures.size()) + " failures, max escape step " +
                                  std::to_string(rep.escape.max_escape_step)});
    out.assertions.push_back({"rotation_margins", rep.min_margin > rep.margin_floor,
                              "min margin " + format_real(static_cast<double>(rep.min_margin)) + " at factor " +
                                  std::to_string(rep.min_margin_factor + 1) + ", k=" +
                                  std::to_string(rep.min_margin_k) + " (floor " +
                                  format_real(static_cast<double>(rep.margin_floor)) + ")"});
    out.summary = to_json(rep);
    return out;
}

ExperimentOutput run_weyl(const ExperimentConfig& cfg, const ProductSystem& s) {
    const std::size_t n = effective_n(cfg);
    const SystemPoint p0 = start_point(cfg, s);
    const WeylSumTable table =
        weyl_sums(s, p0, WeylBox{cfg.box_torus, cfg.box_rotation, cfg.box_center}, n, cfg.workers);

    auto cols = frequency_columns(s);
    cols.insert(cols.end(), {"N", "modulus", "closed_form"});
    CsvTable csv("weyl", cols);

    bool zero_ok = true, bounded = true, small = true, closed_ok = true;
    double worst_nonzero = 0, worst_closed = 0;
    std::vector<AngleSpec> angles = s.rotations();
    for (const auto& row : table.rows) {
        auto cells = frequency_cells(row.index);
        cells.push_back(std::to_string(row.n));
        cells.push_back(format_real(row.modulus));
        if (rotation_only(row.index)) {
            TorusCoord theta{};
            for (std::size_t i = 0; i < angles.size(); ++i) theta = theta + angles[i].rounded().times(row.index.k[i]);
            const double closed = rotation_weyl_closed_form(theta, row.n);
            worst_closed = std::max(worst_closed, std::fabs(closed - row.modulus));
            if (!(std::fabs(closed - row.modulus) <= 1e-12)) closed_ok = false;
            cells.push_back(format_real(closed));
        } else {
            cells.emplace_back();
        }
        csv.row(cells);
        if (row.index.is_zero()) {
            zero_ok = zero_ok && row.modulus == 1.0;
        } else if (row.index.j.value_or(0) == 0) {
            worst_nonzero = std::max(worst_nonzero, row.modulus);
            if (!(row.modulus < cfg.weyl_threshold)) small = false;
        }
        if (row.modulus > 1.0 + 1e-12) bounded = false;
    }
    ExperimentOutput out;
    out.files = {{"weyl.csv", csv.text()}};
    out.assertions.push_back({"zero_frequency_row", zero_ok, "zero-frequency modulus equals 1"});
    out.assertions.push_back({"moduli_bounded", bounded, "all moduli <= 1"});
    out.assertions.push_back({"nonzero_below_threshold", small,
                              "max nonzero modulus (center-free rows) " + format_real(worst_nonzero) +
                                  " vs threshold " + format_real(cfg.weyl_threshold)});
    out.assertions.push_back({"rotation_closed_form", closed_ok,
                              "max |sum - closed form| " + format_real(worst_closed) + " (tol 1e-12)"});
    out.summary = {{"rows", table.rows.size()},
                   {"N", n},
                   {"max_nonzero_modulus", worst_nonzero},
                   {"max_closed_form_error", worst_closed}};
    return out;
}

ExperimentOutput run_lyapunov(const ExperimentConfig& cfg, const ProductSystem& s) {
    const std::size_t n = effective_n(cfg);
    const SystemPoint p0 = start_point(cfg, s);
    const LyapunovEstimate est = lyapunov_estimate(s, p0, n);

    const double t = std::fabs(static_cast<double>(s.cat().trace()));
    const double analytic_u = std::log((t + std::sqrt(t * t - 4.0)) / 2.0);

    CsvTable csv("lyapunov", {"block", "index", "exponent", "reference"});
    csv.row({"cat", "1", format_real(est.cat_unstable), format_real(analytic_u)});
    csv.row({"cat", "2", format_real(est.cat_stable), format_real(-analytic_u)});
    for (std::size_t i = 0; i < est.rotation.size(); ++i) {
        csv.row({"rotation", std::to_string(i + 1), format_real(est.rotation[i]), "0"});
    }
    ExperimentOutput out;
    const bool rot_zero = std::all_of(est.rotation.begin(), est.rotation.end(), [](double v) { return v == 0.0; });
    out.assertions.push_back({"rotation_exponents_zero", rot_zero, "rotation exponents are exactly 0"});
    const double cat_err = std::max(std::fabs(est.cat_unstable - analytic_u), std::fabs(est.cat_stable + analytic_u));
    out.assertions.push_back({"cat_exponents_analytic", cat_err <= 1e-9, "max error " + format_real(cat_err)});
    out.summary = {{"N", n}, {"cat_unstable", est.cat_unstable}, {"cat_stable", est.cat_stable}};
    if (est.center) {
        const double limit = std::log(1.0 - s.center()->epsilon());
        csv.row({"center", "1", format_real(*est.center), format_real(limit)});
        const double err = std::fabs(*est.center - limit);
        out.assertions.push_back({"center_exponent", err <= cfg.lyapunov_tol,
                                  "|estimate - log(1-eps)| = " + format_real(err) + " (tol " +
                                      format_real(cfg.lyapunov_tol) + ")"});
        out.summary["center"] = *est.center;
        out.summary["center_limit"] = limit;
    }
    out.files = {{"lyapunov.csv", csv.text()}};
    return out;
}

ExperimentOutput run_basins(const ExperimentConfig& cfg, const ProductSystem& s) {
    const BasinSampler sampler = cfg.sampler == "grid" ? BasinSampler::grid() : BasinSampler::uniform(*cfg.seed);
    const BasinReport rep = basin_survey(s, sampler, cfg.samples, cfg.max_iter, cfg.radius, cfg.workers);

    CsvTable csv("basins", {"sink", "position", "count", "fraction", "half_width_3sigma", "expected_fraction"});
    std::size_t found = 0;
    double max_dev = 0;
    bool within = true;
    for (std::size_t i = 0; i < rep.sink_positions.size(); ++i) {
        csv.row({std::to_string(i), format_real(rep.sink_positions[i]), std::to_string(rep.counts[i]),
                 format_real(rep.fraction(i)), format_real(rep.half_width(i)), format_real(rep.expected_fraction[i])});
        if (rep.counts[i] > 0) ++found;
        const double e = rep.expected_fraction[i];
        const double dev = std::fabs(rep.fraction(i) - e);
        max_dev = std::max(max_dev, dev);
        if (!(dev <= 3.0 * std::sqrt(e * (1.0 - e) / static_cast<double>(rep.total)))) within = false;
    }
    csv.row({"unresolved", "", std::to_string(rep.unresolved),
             format_real(static_cast<double>(rep.unresolved) / static_cast<double>(rep.total)), "", ""});

    std::uint64_t expected_unresolved = 0;
    if (sampler.kind == BasinSampler::Kind::grid) {
        const auto sources = s.center()->sources();
        for (std::size_t i = 0; i < cfg.samples; ++i) {
            const double z = *sampler.sample(s, i, cfg.samples).z;
            if (std::find(sources.begin(), sources.end(), z) != sources.end()) ++expected_unresolved;
        }
    }

    ExperimentOutput out;
    out.files = {{"basins.csv", csv.text()}};
    out.assertions.push_back({"sinks_found", found == static_cast<std::size_t>(s.center()->ell()),
                              std::to_string(found) + " of " + std::to_string(s.center()->ell()) + " sinks attract samples"});
    out.assertions.push_back({"fractions_within_3sigma", within, "max |fraction - expected| " + format_real(max_dev)});
    out.assertions.push_back({"unresolved", rep.unresolved == expected_unresolved,
                              std::to_string(rep.unresolved) + " unresolved, expected " +
                                  std::to_string(expected_unresolved)});
    const double covered = rep.resolved_fraction_sum() + static_cast<double>(rep.unresolved) / static_cast<double>(rep.total);
    out.assertions.push_back({"basin_covering", std::fabs(covered - 1.0) < 1e-12,
                              "resolved fractions + unresolved share = " + format_real(covered)});
    out.summary = {{"ell", s.center()->ell()},
                   {"samples", rep.total},
                   {"sinks_found", found},
                   {"unresolved", rep.unresolved},
                   {"max_abs_fraction_dev", max_dev}};
    return out;
}

ExperimentOutput run_sandwich(const ExperimentConfig& cfg, const ProductSystem& s) {
    const std::size_t n = effective_n(cfg);
    const SystemPoint p0 = start_point(cfg, s);
    const Observable obs = parse_observable(cfg.observable, s);
    const SandwichReport rep = sandwich_check(s, obs, p0, effective_eps(cfg), n);

    CsvTable csv("sandwich", {"n", "difference", "bound", "holds"});
    for (const auto& row : rep.rows) {
        csv.row({std::to_string(row.n), format_real(row.difference), format_real(row.bound), row.holds ? "1" : "0"});
    }
    ExperimentOutput out;
    out.files = {{"sandwich.csv", csv.text()}};
    out.assertions.push_back({"sandwich_bound", rep.holds(),
                              rep.holds() ? "bound holds at every ladder point"
                                          : "violated at n=" + std::to_string(*rep.first_violation)});
    const bool shrinks = rep.rows.back().difference <= rep.rows.front().difference;
    out.assertions.push_back({"difference_shrinks", shrinks,
                              "D(first)=" + format_real(rep.rows.front().difference) +
                                  " D(last)=" + format_real(rep.rows.back().difference)});
    out.summary = {{"N", n},
                   {"sink", rep.sink},
                   {"n_delta", rep.n_delta},
                   {"delta", rep.delta},
                   {"delta_reached", rep.delta_reached},
                   {"lipschitz_estimated", rep.lipschitz_estimated},
                   {"final_difference", rep.rows.back().difference}};
    return out;
}

ExperimentOutput run_transitivity(const ExperimentConfig& cfg, const ProductSystem& s) {
    const std::size_t n = effective_n(cfg);
    const TransitivityReport rep = transitivity_probe(s, start_point(cfg, s), effective_eps(cfg), n);
    CsvTable csv("transitivity", {"N", "boxes_per_axis", "total_boxes", "visited", "fraction", "all_visited_at"});
    csv.row({std::to_string(n), std::to_string(rep.boxes_per_axis), std::to_string(rep.total_boxes),
             std::to_string(rep.visited), format_real(rep.fraction()),
             rep.all_visited_at ? std::to_string(*rep.all_visited_at) : ""});
    ExperimentOutput out;
    out.files = {{"transitivity.csv", csv.text()}};
    out.assertions.push_back({"all_boxes_visited", rep.visited == rep.total_boxes,
                              std::to_string(rep.visited) + " of " + std::to_string(rep.total_boxes) + " boxes"});
    out.summary = {{"N", n}, {"total_boxes", rep.total_boxes}, {"visited", rep.visited}, {"fraction", rep.fraction()}};
    return out;
}

ExperimentOutput run_simulate(const ExperimentConfig& cfg, const ProductSystem& s) {
    const std::size_t n = effective_n(cfg);
    std::vector<std::string> cols{"index", "x_raw", "y_raw"};
    for (std::size_t i = 0; i < s.rotation_count(); ++i) cols.push_back("w" + std::to_string(i + 1) + "_raw");
    cols.insert(cols.end(), {"x", "y"});
    for (std::size_t i = 0; i < s.rotation_count(); ++i) cols.push_back("w" + std::to_string(i + 1));
    if (s.has_center()) cols.push_back("z");
    CsvTable csv("orbit", cols);

    OrbitStream stream(s, start_point(cfg, s), cfg.stride);
    for (std::size_t i = 0; i < n; ++i) {
        if (i) stream.next();
        const SystemPoint& p = stream.current();
        std::vector<std::string> cells{std::to_string(i * cfg.stride), std::to_string(p.x.raw()),
                                       std::to_string(p.y.raw())};
        for (const auto& w : p.w) cells.push_back(std::to_string(w.raw()));
        cells.push_back(format_real(p.x.to_double()));
        cells.push_back(format_real(p.y.to_double()));
        for (const auto& w : p.w) cells.push_back(format_real(w.to_double()));
        if (p.z) cells.push_back(format_real(*p.z));
        csv.row(cells);
    }
    ExperimentOutput out;
    out.files = {{"orbit.csv", csv.text()}};
    out.summary = {{"N", n}, {"stride", cfg.stride}};
    return out;
}

}  // namespace

// ---- kinds -----------------------------------------------------------------

const std::vector<std::string>& experiment_kind_names() {
    static const std::vector<std::string> names{"certify",  "weyl",         "lyapunov", "basins",
                                                "sandwich", "transitivity", "simulate"};
    return names;
}

std::string to_string(ExperimentKind kind) { return experiment_kind_names().at(static_cast<std::size_t>(kind)); }

ExperimentKind parse_kind(const std::string& text) {
    const auto& names = experiment_kind_names();
    const auto it = std::find(names.begin(), names.end(), trim(text));
    if (it == names.end()) throw ConfigError("config: unknown experiment kind '" + text + "'");
    return static_cast<ExperimentKind>(it - names.begin());
}

// ---- config files ----------------------------------------------------------

ConfigMap parse_config_text(const std::string& text) {
    ConfigMap out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string body = line;
        bool quoted = false;
        for (std::size_t i = 0; i < body.size(); ++i) {
            if (body[i] == '"') quoted = !quoted;
            if (body[i] == '#' && !quoted) {
                body.resize(i);
                break;
            }
        }
        body = trim(body);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        std::string key = trim(std::string_view(body).substr(0, eq));
        std::string value = trim(std::string_view(body).substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        out[key] = value;
    }
    return out;
}

ConfigMap load_config_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read config file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

ExperimentConfig config_from_map(const ConfigMap& map) {
    ExperimentConfig cfg;
    for (const auto& [key, value] : map) {
        if (key == "kind") {
            cfg.kind = parse_kind(value);
        } else if (key == "matrix") {
            const auto parts = split(value, ',');
            if (parts.size() != 4) throw ConfigError("config: 'matrix' expects a,b,c,d");
            cfg.a = parse_integer<std::int64_t>(key, parts[0]);
            cfg.b = parse_integer<std::int64_t>(key, parts[1]);
            cfg.c = parse_integer<std::int64_t>(key, parts[2]);
            cfg.d = parse_integer<std::int64_t>(key, parts[3]);
        } else if (key == "angles") {
            cfg.angles = split(value, ',');
        } else if (key == "ell") {
            cfg.ell = parse_integer<int>(key, value);
        } else if (key == "epsilon") {
            cfg.epsilon = parse_real(key, value);
        } else if (key == "phase") {
            cfg.phase = trim(value);
        } else if (key == "n" || key == "N") {
            cfg.n = parse_count(key, value);
        } else if (key == "stride") {
            cfg.stride = parse_count(key, value);
        } else if (key == "samples") {
            cfg.samples = parse_count(key, value);
        } else if (key == "max_iter") {
            cfg.max_iter = parse_count(key, value);
        } else if (key == "radius") {
            cfg.radius = parse_real(key, value);
        } else if (key == "sampler") {
            cfg.sampler = trim(value);
        } else if (key == "box") {
            cfg.box_torus = cfg.box_rotation = parse_integer<std::int64_t>(key, value);
        } else if (key == "box_torus") {
            cfg.box_torus = parse_integer<std::int64_t>(key, value);
        } else if (key == "box_rotation") {
            cfg.box_rotation = parse_integer<std::int64_t>(key, value);
        } else if (key == "box_center") {
            cfg.box_center = parse_integer<std::int64_t>(key, value);
        } else if (key == "bins") {
            cfg.bins = parse_count(key, value);
        } else if (key == "lattice_bound" || key == "M") {
            cfg.lattice_bound = parse_integer<std::int64_t>(key, value);
        } else if (key == "max_k" || key == "K") {
            cfg.max_k = parse_integer<std::int64_t>(key, value);
        } else if (key == "step_budget") {
            cfg.step_budget = parse_integer<int>(key, value);
        } else if (key == "margin_floor") {
            cfg.margin_floor = parse_real(key, value);
        } else if (key == "eps") {
            cfg.eps = parse_real(key, value);
        } else if (key == "observable") {
            cfg.observable = trim(value);
        } else if (key == "weyl_threshold") {
            cfg.weyl_threshold = parse_real(key, value);
        } else if (key == "lyapunov_tol") {
            cfg.lyapunov_tol = parse_real(key, value);
        } else if (key == "x0") {
            cfg.x0 = trim(value);
        } else if (key == "y0") {
            cfg.y0 = trim(value);
        } else if (key == "w0") {
            cfg.w0 = trim(value);
        } else if (key == "z0") {
            cfg.z0 = trim(value);
        } else if (key == "seed") {
            cfg.seed = parse_integer<std::uint64_t>(key, value);
        } else if (key == "workers") {
            cfg.workers = parse_integer<unsigned>(key, value);
        } else if (key == "out") {
            cfg.out = trim(value);
        } else {
            throw ConfigError("config: unknown key '" + key + "'");
        }
    }
    return cfg;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["kind"] = to_string(cfg.kind);
    j["matrix"] = {cfg.a, cfg.b, cfg.c, cfg.d};
    j["angles"] = cfg.angles;
    j["ell"] = cfg.ell;
    j["epsilon"] = cfg.epsilon;
    j["phase"] = cfg.phase;
    j["N"] = effective_n(cfg);
    j["stride"] = cfg.stride;
    j["samples"] = cfg.samples;
    j["max_iter"] = cfg.max_iter;
    j["radius"] = cfg.radius;
    j["sampler"] = cfg.sampler;
    j["box"] = {{"torus", cfg.box_torus}, {"rotation", cfg.box_rotation}, {"center", cfg.box_center}};
    j["bins"] = cfg.bins;
    j["lattice_bound"] = cfg.lattice_bound;
    j["max_k"] = cfg.max_k;
    j["step_budget"] = cfg.step_budget;
    j["margin_floor"] = cfg.margin_floor;
    j["eps"] = effective_eps(cfg);
    j["observable"] = cfg.observable;
    j["weyl_threshold"] = cfg.weyl_threshold;
    j["lyapunov_tol"] = cfg.lyapunov_tol;
    auto opt = [](const std::optional<std::string>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    j["start"] = {{"x0", opt(cfg.x0)}, {"y0", opt(cfg.y0)}, {"w0", opt(cfg.w0)}, {"z0", opt(cfg.z0)}};
    j["seed"] = cfg.seed ? nlohmann::json(*cfg.seed) : nlohmann::json(nullptr);
    j["workers"] = cfg.workers;
    j["out"] = cfg.out;
    return j;
}

// ---- construction helpers --------------------------------------------------

TorusCoord parse_torus_coord(const std::string& text) {
    const std::string v = trim(text);
    if (const auto slash = v.find('/'); slash != std::string::npos) {
        const auto num = parse_integer<std::int64_t>("coordinate", v.substr(0, slash));
        const auto den = parse_integer<std::int64_t>("coordinate", v.substr(slash + 1));
        if (den <= 0) throw ConfigError("coordinate: denominator must be positive in '" + text + "'");
        return TorusCoord::from_ratio(num, static_cast<std::uint64_t>(den));
    }
    return TorusCoord::from_double(parse_real("coordinate", v));
}

ProductSystem make_system(const ExperimentConfig& cfg) {
    try {
        std::vector<AngleSpec> angles;
        for (const auto& text : cfg.angles) angles.push_back(AngleSpec::parse(text));
        std::optional<MorseSmaleMap> center;
        if (cfg.ell < 0) throw ConfigError("config: ell must be >= 0");
        if (cfg.ell > 0) center = MorseSmaleMap(cfg.ell, cfg.epsilon, parse_torus_coord(cfg.phase));
        return ProductSystem(CatMap(cfg.a, cfg.b, cfg.c, cfg.d), std::move(angles), center);
    } catch (const ConfigError&) {
        throw;
    } catch (const PreconditionError& e) {
        throw ConfigError(std::string("config: invalid system: ") + e.what());
    }
}

Observable parse_observable(const std::string& text, const ProductSystem& s) {
    const std::string v = trim(text);
    const std::size_t width = 2 + s.rotation_count() + (s.has_center() ? 1 : 0);
    auto parse_index = [&](const std::string& list) {
        const auto parts = split(list, ',');
        if (parts.size() != width) {
            throw ConfigError("observable: frequency '" + list + "' needs " + std::to_string(width) + " entries");
        }
        FrequencyIndex idx;
        idx.m = parse_integer<std::int64_t>("observable", parts[0]);
        idx.n = parse_integer<std::int64_t>("observable", parts[1]);
        for (std::size_t i = 0; i < s.rotation_count(); ++i) {
            idx.k.push_back(parse_integer<std::int64_t>("observable", parts[2 + i]));
        }
        if (s.has_center()) idx.j = parse_integer<std::int64_t>("observable", parts.back());
        return idx;
    };

    Observable obs = Observable::constant(0.0);
    if (v == "exp_cos_x") {
        obs = Observable::builtin(BuiltinObservable::exp_cos_x);
    } else if (v == "exp_cos_z") {
        obs = Observable::builtin(BuiltinObservable::exp_cos_z);
    } else if (v.rfind("character:", 0) == 0) {
        obs = Observable::character(parse_index(v.substr(10)));
    } else if (v.rfind("constant:", 0) == 0) {
        obs = Observable::constant(parse_real("observable", v.substr(9)));
    } else if (v.rfind("trig:", 0) == 0) {
        std::vector<Observable::Term> terms;
        for (const auto& term : split(v.substr(5), ';')) {
            const auto at = term.find('@');
            if (at == std::string::npos) throw ConfigError("observable: trig term '" + term + "' needs '@coef'");
            terms.emplace_back(parse_index(term.substr(0, at)), parse_real("observable", term.substr(at + 1)));
        }
        obs = Observable::trig_polynomial(std::move(terms));
    } else {
        throw ConfigError("observable: unrecognized '" + text + "'");
    }
    try {
        obs.check_compatible(s);
    } catch (const PreconditionError& e) {
        throw ConfigError(std::string("observable: ") + e.what());
    }
    return obs;
}

SystemPoint start_point(const ExperimentConfig& cfg, const ProductSystem& s) {
    const bool complete = cfg.x0 && cfg.y0 && cfg.w0 && (cfg.z0 || !s.has_center());
    if (!complete && !cfg.seed) {
        throw ConfigError("config: a seed is required when the start point is not fully specified");
    }
    const CounterRng rng(cfg.seed.value_or(0));
    SystemPoint p;
    p.x = cfg.x0 ? parse_torus_coord(*cfg.x0) : TorusCoord(rng.bits(kStartPointStream, 0));
    p.y = cfg.y0 ? parse_torus_coord(*cfg.y0) : TorusCoord(rng.bits(kStartPointStream, 1));
    if (cfg.w0) {
        for (const auto& part : split(*cfg.w0, ',')) p.w.push_back(parse_torus_coord(part));
        if (p.w.size() != s.rotation_count()) {
            throw ConfigError("config: w0 needs " + std::to_string(s.rotation_count()) + " entries");
        }
    } else {
        for (std::size_t i = 0; i < s.rotation_count(); ++i) p.w.emplace_back(rng.bits(kStartPointStream, 2 + i));
    }
    if (s.has_center()) {
        p.z = cfg.z0 ? parse_torus_coord(*cfg.z0).to_double() : rng.uniform(kStartPointStream, 2 + s.rotation_count());
    }
    return p;
}

std::size_t effective_n(const ExperimentConfig& cfg) {
    if (cfg.n) return *cfg.n;
    switch (cfg.kind) {
        case ExperimentKind::simulate:
            return 1000;
        case ExperimentKind::certify:
        case ExperimentKind::basins:
            return 0;
        default:
            return 1'000'000;
    }
}

double effective_eps(const ExperimentConfig& cfg) {
    if (cfg.eps) return *cfg.eps;
    switch (cfg.kind) {
        case ExperimentKind::sandwich:
            return 0.01;
        case ExperimentKind::transitivity:
            return 0.1;
        default:
            return 0.0;
    }
}

void validate(const ExperimentConfig& cfg) {
    const ProductSystem s = make_system(cfg);
    const auto need = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError("config: " + msg);
    };
    const bool uses_orbit = cfg.kind == ExperimentKind::weyl || cfg.kind == ExperimentKind::lyapunov ||
                            cfg.kind == ExperimentKind::sandwich || cfg.kind == ExperimentKind::transitivity ||
                            cfg.kind == ExperimentKind::simulate;
    if (uses_orbit) {
        need(effective_n(cfg) >= 1, "N must be >= 1");
        (void)start_point(cfg, s);
    }
    need(cfg.stride >= 1, "stride must be >= 1");

    switch (cfg.kind) {
        case ExperimentKind::certify:
            need(!s.has_center(), "certify applies to the system without center map (ell = 0)");
            need(cfg.lattice_bound >= 1, "lattice_bound must be >= 1");
            need(cfg.max_k >= 1, "max_k must be >= 1");
            need(cfg.step_budget >= 1, "step_budget must be >= 1");
            break;
        case ExperimentKind::weyl:
            need(cfg.box_torus >= 0 && cfg.box_rotation >= 0 && cfg.box_center >= 0, "box bounds must be >= 0");
            need(cfg.weyl_threshold > 0, "weyl_threshold must be positive");
            break;
        case ExperimentKind::lyapunov:
            need(cfg.lyapunov_tol > 0, "lyapunov_tol must be positive");
            break;
        case ExperimentKind::basins:
            need(s.has_center(), "basins needs a center map (ell >= 1)");
            need(cfg.samples >= 1, "samples must be >= 1");
            need(cfg.max_iter >= 1, "max_iter must be >= 1");
            need(cfg.radius > 0, "radius must be positive");
            need(cfg.sampler == "uniform" || cfg.sampler == "grid", "sampler must be 'uniform' or 'grid'");
            need(cfg.sampler == "grid" || cfg.seed.has_value(), "a seed is required for the uniform sampler");
            break;
        case ExperimentKind::sandwich: {
            need(s.has_center(), "sandwich needs a center map (ell >= 1)");
            need(effective_eps(cfg) > 0, "eps must be positive");
            (void)parse_observable(cfg.observable, s);
            const SystemPoint p0 = start_point(cfg, s);
            need(classify_basin(*s.center(), *p0.z).resolved(), "start point does not resolve to a sink");
            break;
        }
        case ExperimentKind::transitivity: {
            need(!s.has_center(), "transitivity applies to the system without center map (ell = 0)");
            const double eps = effective_eps(cfg);
            need(eps > 0 && eps <= 1, "eps must lie in (0,1]");
            break;
        }
        case ExperimentKind::simulate:
            break;
    }
}

fs::path output_directory(const ExperimentConfig& cfg) {
    fs::path out = cfg.out.empty() ? fs::path("runs") / to_string(cfg.kind) : fs::path(cfg.out);
    if (out.is_relative()) {
        if (const char* root = std::getenv(kOutputRootEnv); root && *root) out = fs::path(root) / out;
    }
    return out;
}

// ---- manifests -------------------------------------------------------------

std::string tool_version() { return std::string("phlab ") + PHLAB_VERSION; }

bool RunManifest::passed() const {
    return std::all_of(assertions.begin(), assertions.end(), [](const AssertionResult& a) { return a.passed; });
}

nlohmann::json RunManifest::to_json() const {
    nlohmann::json j;
    j["config"] = config;
    j["tool_version"] = tool_version;
    j["started_at"] = started_at;
    j["wall_seconds"] = wall_seconds;
    j["outputs"] = outputs;
    j["assertions"] = nlohmann::json::array();
    for (const auto& a : assertions) j["assertions"].push_back({{"name", a.name}, {"passed", a.passed}, {"detail", a.detail}});
    j["passed"] = passed();
    j["summary"] = summary;
    j["summary_text"] = summary_text;
    return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
    RunManifest m;
    m.config = j.at("config");
    m.tool_version = j.at("tool_version").get<std::string>();
    m.started_at = j.at("started_at").get<std::string>();
    m.wall_seconds = j.at("wall_seconds").get<double>();
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    for (const auto& a : j.at("assertions")) {
        m.assertions.push_back({a.at("name").get<std::string>(), a.at("passed").get<bool>(),
                                a.at("detail").get<std::string>()});
    }
    m.summary = j.at("summary");
    m.summary_text = j.at("summary_text").get<std::string>();
    return m;
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

RunManifest run(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    RunManifest manifest;
    manifest.started_at = utc_timestamp();
    manifest.tool_version = tool_version();

    validate(cfg);
    manifest.config = config_to_json(cfg);
    const ProductSystem s = make_system(cfg);
    const fs::path dir = output_directory(cfg);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());

    ExperimentOutput result;
    switch (cfg.kind) {
        case ExperimentKind::certify:
            result = run_certify(cfg, s);
            break;
        case ExperimentKind::weyl:
            result = run_weyl(cfg, s);
            break;
        case ExperimentKind::lyapunov:
            result = run_lyapunov(cfg, s);
            break;
        case ExperimentKind::basins:
            result = run_basins(cfg, s);
            break;
        case ExperimentKind::sandwich:
            result = run_sandwich(cfg, s);
            break;
        case ExperimentKind::transitivity:
            result = run_transitivity(cfg, s);
            break;
        case ExperimentKind::simulate:
            result = run_simulate(cfg, s);
            break;
    }

    for (const auto& [name, contents] : result.files) {
        write_file_atomic(dir / name, contents);
        manifest.outputs.push_back(name);
    }
    manifest.assertions = std::move(result.assertions);
    manifest.summary = std::move(result.summary);

    std::ostringstream text;
    text << "kind: " << to_string(cfg.kind) << "\n";
    text << "result: " << (manifest.passed() ? "PASS" : "FAIL") << "\n";
    for (const auto& a : manifest.assertions) {
        text << "  [" << (a.passed ? "pass" : "FAIL") << "] " << a.name << ": " << a.detail << "\n";
    }
    for (const auto& [key, value] : manifest.summary.items()) {
        if (!value.is_object()) text << "  " << key << " = " << value.dump() << "\n";
    }
    text << "outputs:";
    for (const auto& o : manifest.outputs) text << " " << o;
    text << "\n";
    manifest.summary_text = text.str();

    manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_file_atomic(dir / kManifestName, manifest.to_json().dump(2) + "\n");
    return manifest;
}

// ---- report ----------------------------------------------------------------

std::string report(const std::vector<fs::path>& paths) {
    if (paths.empty()) throw IoError("report: no manifests given");
    struct Loaded {
        fs::path path;
        RunManifest manifest;
        std::string kind;
    };
    std::vector<Loaded> loaded;
    for (fs::path p : paths) {
        if (fs::is_directory(p)) p /= kManifestName;
        std::ifstream in(p, std::ios::binary);
        if (!in) throw IoError("report: missing manifest " + p.string());
        try {
            const nlohmann::json j = nlohmann::json::parse(in);
            RunManifest m = RunManifest::from_json(j);
            const std::string kind = m.config.at("kind").get<std::string>();
            loaded.push_back({p, std::move(m), kind});
        } catch (const nlohmann::json::exception& e) {
            throw IoError("report: corrupt manifest " + p.string() + ": " + e.what());
        }
    }
    if (loaded.size() == 1) return loaded.front().manifest.summary_text;

    std::map<std::string, std::vector<const Loaded*>> groups;
    for (const auto& l : loaded) groups[l.kind].push_back(&l);

    std::ostringstream out;
    for (const auto& [kind, runs] : groups) {
        out << "# kind=" << kind << " runs=" << runs.size() << "\n";
        if (kind == "basins") {
            std::vector<const Loaded*> sorted = runs;
            std::sort(sorted.begin(), sorted.end(), [](const Loaded* l, const Loaded* r) {
                return l->manifest.summary.value("ell", 0) < r->manifest.summary.value("ell", 0);
            });
            out << "ell,sinks_found,max_abs_fraction_dev,passed,manifest\n";
            for (const auto* l : sorted) {
                const auto& sm = l->manifest.summary;
                out << sm.value("ell", 0) << "," << sm.value("sinks_found", 0) << ","
                    << format_real(sm.value("max_abs_fraction_dev", 0.0)) << "," << (l->manifest.passed() ? 1 : 0)
                    << "," << l->path.string() << "\n";
            }
        } else {
            std::set<std::string> keys;
            for (const auto* l : runs) {
                for (const auto& [key, value] : l->manifest.summary.items()) {
                    if (!value.is_object()) keys.insert(key);
                }
            }
            for (const auto& key : keys) out << key << ",";
            out << "passed,manifest\n";
            for (const auto* l : runs) {
                for (const auto& key : keys) {
                    const auto& sm = l->manifest.summary;
                    if (sm.contains(key)) out << sm.at(key).dump();
                    out << ",";
                }
                out << (l->manifest.passed() ? 1 : 0) << "," << l->path.string() << "\n";
            }
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace phlab
