// SPDX-License-Identifier: Apache-2.0
//
// phlab: command-line front end for the experiment harness.
//
//   phlab <kind> [--config FILE] [--seed S] [--workers W] [--out DIR] [--set key=value ...]
//   phlab report MANIFEST_OR_DIR...
//
// Exit status: 0 all assertions passed, 1 an assertion failed,
// 2 invalid configuration, 3 I/O failure.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "phlab/harness.hpp"

namespace {

struct RunOptions {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    std::string out;
};

int execute(const std::string& kind, const RunOptions& opts) {
    phlab::ConfigMap map;
    if (!opts.config.empty()) map = phlab::load_config_file(opts.config);
    for (const auto& kv : opts.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw phlab::ConfigError("--set expects key=value, got '" + kv + "'");
        map[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    map["kind"] = kind;
    if (opts.seed) map["seed"] = std::to_string(*opts.seed);
    if (opts.workers) map["workers"] = std::to_string(*opts.workers);
    if (!opts.out.empty()) map["out"] = opts.out;

    const phlab::ExperimentConfig cfg = phlab::config_from_map(map);
    const phlab::RunManifest manifest = phlab::run(cfg);
    std::cout << manifest.summary_text;
    std::cout << "manifest: " << (phlab::output_directory(cfg) / phlab::kManifestName).string() << "\n";
    return manifest.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulation and verification runs for partially hyperbolic product systems"};
    app.require_subcommand(1);
    app.set_version_flag("--version", phlab::tool_version());

    RunOptions opts;
    std::string selected;
    for (const auto& kind : phlab::experiment_kind_names()) {
        CLI::App* sub = app.add_subcommand(kind, "run the '" + kind + "' experiment");
        sub->add_option("--config", opts.config, "key = value config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", opts.seed, "seed for stochastic steps");
        sub->add_option("--workers", opts.workers, "worker threads (0 = all cores)");
        sub->add_option("--out", opts.out, "output directory");
        sub->add_option("--set", opts.sets, "override a config key (key=value), repeatable");
        sub->callback([&selected, kind] { selected = kind; });
    }

    std::vector<std::string> manifests;
    CLI::App* rep = app.add_subcommand("report", "summarize one or more run manifests");
    rep->add_option("manifests", manifests, "manifest files or run directories")->required();
    rep->callback([&selected] { selected = "report"; });

    CLI11_PARSE(app, argc, argv);

    try {
        if (selected == "report") {
            std::vector<std::filesystem::path> paths(manifests.begin(), manifests.end());
            std::cout << phlab::report(paths);
            return 0;
        }
        return execute(selected, opts);
    } catch (const phlab::PreconditionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const phlab::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
