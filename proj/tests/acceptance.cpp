// SPDX-License-Identifier: Apache-2.0
//
// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "phlab/ergodic.hpp"
#include "phlab/harness.hpp"
#include "phlab/lattice.hpp"

using namespace phlab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool passed = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            passed = false;
            detail << " [failed: " << what << "]";
        }
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ProductSystem default_f() { return ProductSystem(CatMap{}, {AngleSpec::golden()}); }
ProductSystem default_g(int ell) { return ProductSystem(CatMap{}, {AngleSpec::golden()}, MorseSmaleMap(ell, 0.5)); }

SystemPoint seeded_point(const ProductSystem& s, std::uint64_t seed) {
    return BasinSampler::uniform(seed).sample(s, 0, 1);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

constexpr std::uint64_t kSeed = 20240601;

// 1. l physical measures: l sinks found, fractions within 3 sigma of 1/l, nothing unresolved.
void criterion_1(Outcome& o) {
    for (int ell : {1, 2, 3, 5}) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto rep = basin_survey(default_g(ell), BasinSampler::uniform(kSeed + ell), 10000);
        const double secs = seconds_since(t0);
        std::size_t found = 0;
        double max_dev = 0;
        const double p = 1.0 / ell;
        const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(rep.total));
        for (std::size_t i = 0; i < rep.counts.size(); ++i) {
            if (rep.counts[i] > 0) ++found;
            max_dev = std::max(max_dev, std::fabs(rep.fraction(i) - p));
        }
        o.detail << " l=" << ell << ": sinks=" << found << " max|f-1/l|=" << max_dev << " (3s=" << 3 * sigma
                 << ") unresolved=" << rep.unresolved << " " << secs << "s;";
        o.require(found == static_cast<std::size_t>(ell), "sink count for l=" + std::to_string(ell));
        o.require(max_dev <= 3 * sigma, "3 sigma for l=" + std::to_string(ell));
        o.require(rep.unresolved == 0, "unresolved for l=" + std::to_string(ell));
        o.require(secs < 60, "runtime for l=" + std::to_string(ell));
    }
}

// 2. Classified sink equals the source interval containing z0.
void criterion_2(Outcome& o) {
    const int ell = 3;
    const auto g = default_g(ell);
    const std::size_t n = 100000;
    const auto sampler = BasinSampler::uniform(kSeed);
    const auto t0 = std::chrono::steady_clock::now();
    const auto classes = classify_samples(g, sampler, n, kDefaultMaxIter, kDefaultRadius);
    const double secs = seconds_since(t0);

    // Phase 0: sources at k/l, the sink of interval (k/l, (k+1)/l) is (2k+1)/(2l), sink index k.
    std::size_t resolved = 0, agree = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!classes[i].sink) continue;
        ++resolved;
        const double z0 = *sampler.sample(g, i, n).z;
        const auto interval = static_cast<std::size_t>(std::floor(z0 * ell));
        if (*classes[i].sink == interval) ++agree;
    }
    o.detail << " resolved=" << resolved << " agree=" << agree << " " << secs << "s";
    o.require(resolved > 0 && agree == resolved, "membership agreement");
    o.require(secs < 60, "runtime");
}

// 3. Lyapunov spectrum: rotation 0, cat +-log((3+sqrt5)/2), center log(1 - eps).
void criterion_3(Outcome& o) {
    const double cat_exact = 0.9624236501192069;  // log((3 + sqrt5)/2)
    for (int ell : {1, 3}) {
        const auto g = default_g(ell);
        const auto t0 = std::chrono::steady_clock::now();
        const auto est = lyapunov_estimate(g, seeded_point(g, kSeed), 1000000);
        const double secs = seconds_since(t0);
        const double center_err = std::fabs(*est.center - std::log(0.5));
        o.detail << " l=" << ell << ": rot=" << est.rotation[0] << " cat=" << est.cat_unstable << "/"
                 << est.cat_stable << " center_err=" << center_err << " " << secs << "s;";
        o.require(est.rotation == std::vector<double>{0.0}, "rotation exponent exactly 0");
        o.require(std::fabs(est.cat_unstable - cat_exact) < 1e-9, "unstable exponent");
        o.require(std::fabs(est.cat_stable + cat_exact) < 1e-9, "stable exponent");
        o.require(center_err < 1e-3, "center exponent");
        o.require(secs < 10, "runtime");
    }
}

// 4. Ergodicity certificate on f, and the rational negative control.
void criterion_4(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto pass = ergodicity_certificate(default_f(), 50, 8);
    const auto fail = ergodicity_certificate(ProductSystem(CatMap{}, {AngleSpec::explicit_ratio(1, 3)}), 50, 8);
    const double secs = seconds_since(t0);
    o.detail << " golden: indices=" << pass.escape.entries.size() << " max_step=" << pass.escape.max_escape_step
             << " min_margin=" << static_cast<double>(pass.min_margin) << "@k=" << pass.min_margin_k
             << "; alpha=1/3: passed=" << fail.passed << " min_margin=" << static_cast<double>(fail.min_margin)
             << "@k=" << fail.min_margin_k << "; " << secs << "s";
    o.require(pass.passed, "golden certificate");
    o.require(pass.escape.entries.size() == 10200 && pass.escape.passed(), "all 10200 indices escape");
    o.require(pass.min_margin > 0.05L, "margins > 0.05");
    o.require(!fail.passed && fail.min_margin_k == 3 && fail.min_margin <= fail.margin_floor, "1/3 fails at k=3");
    o.require(secs < 5, "runtime");
}

// 5. Weyl table for f.
void criterion_5(Outcome& o) {
    const auto f = default_f();
    const std::size_t n = 1000000;
    const auto t0 = std::chrono::steady_clock::now();
    const auto table = weyl_sums(f, seeded_point(f, kSeed), WeylBox{2, 2, 0}, n, 0);
    const double secs = seconds_since(t0);
    double max_nonzero = 0, max_closed_err = 0;
    std::size_t rows = 0;
    for (const auto& row : table.rows) {
        if (row.index.is_zero()) continue;
        ++rows;
        max_nonzero = std::max(max_nonzero, row.modulus);
        if (row.index.m == 0 && row.index.n == 0) {
            const TorusCoord theta = AngleSpec::golden().rounded().times(row.index.k[0]);
            max_closed_err = std::max(max_closed_err, std::fabs(row.modulus - rotation_weyl_closed_form(theta, n)));
        }
    }
    o.detail << " nonzero_rows=" << rows << " max_modulus=" << max_nonzero << " closed_form_err=" << max_closed_err
             << " " << secs << "s";
    o.require(rows == 124, "124 nonzero frequencies");
    o.require(max_nonzero < 0.02, "moduli < 0.02");
    o.require(max_closed_err < 1e-12, "closed form");
    o.require(secs < 30, "runtime");
}

// 6. Basin covering for random sampling; grid sources are exactly the unresolved points.
void criterion_6(Outcome& o) {
    for (int ell : {1, 2, 3, 5}) {
        const auto g = default_g(ell);
        const auto rep = basin_survey(g, BasinSampler::uniform(kSeed + ell), 10000);
        const double sum = std::accumulate(rep.counts.begin(), rep.counts.end(), std::uint64_t{0}) /
                           static_cast<double>(rep.total);
        const double expected = 1.0 - static_cast<double>(rep.unresolved) / static_cast<double>(rep.total);
        o.require(rep.unresolved == 0 && std::fabs(sum - expected) < 1e-12,
                  "random covering for l=" + std::to_string(ell));

        // Grid z = i/N hits a source k/l exactly gcd(N, l) times.
        for (std::size_t n : {std::size_t{10000}, std::size_t{12000}}) {
            const auto grid = basin_survey(g, BasinSampler::grid(), n);
            const auto hits = std::gcd(n, static_cast<std::size_t>(ell));
            o.detail << " l=" << ell << ",N=" << n << ": unresolved=" << grid.unresolved << "/" << hits << ";";
            o.require(grid.unresolved == hits, "grid sources for l=" + std::to_string(ell));
            o.require(std::accumulate(grid.counts.begin(), grid.counts.end(), std::uint64_t{0}) + grid.unresolved == n,
                      "grid covering");
        }
    }
}

// 7. Transitivity for f; a rational rotation plateaus below full coverage.
void criterion_7(Outcome& o) {
    const auto f = default_f();
    const auto t0 = std::chrono::steady_clock::now();
    const auto rep = transitivity_probe(f, seeded_point(f, kSeed), 0.1, 1000000);
    const double secs = seconds_since(t0);
    const ProductSystem rational(CatMap{}, {AngleSpec::explicit_ratio(1, 4)});
    const auto p0 = seeded_point(rational, kSeed);
    const auto early = transitivity_probe(rational, p0, 0.1, 100000);
    const auto late = transitivity_probe(rational, p0, 0.1, 1000000);
    o.detail << " golden: " << rep.visited << "/" << rep.total_boxes << " (all at "
             << rep.all_visited_at.value_or(0) << ") " << secs << "s; alpha=1/4: " << early.fraction() << " -> "
             << late.fraction();
    o.require(rep.total_boxes == 1000 && rep.fraction() == 1.0, "all boxes visited");
    o.require(late.fraction() < 1.0 && early.visited == late.visited, "rational plateau below 1");
    o.require(secs < 10, "runtime");
}

// 8. Sandwich bound on the ladder 10^3..10^6.
void criterion_8(Outcome& o) {
    const auto g = default_g(1);
    const auto p0 = seeded_point(g, kSeed);
    const std::size_t ladder[] = {1000, 10000, 100000, 1000000};
    const auto t0 = std::chrono::steady_clock::now();
    const auto rep = sandwich_check(g, Observable::character({1, 0, {0}, 0}), p0, 0.01, 1000000, ladder);
    // A center-dependent character, so that D(n) is not identically zero.
    const auto rep_z = sandwich_check(g, Observable::character({1, 0, {0}, 1}), p0, 0.01, 1000000, ladder);
    const double secs = seconds_since(t0);
    for (const auto* r : {&rep, &rep_z}) {
        o.detail << (r == &rep ? " (1,0,0,0):" : " (1,0,0,1):") << " N_delta=" << r->n_delta;
        for (const auto& row : r->rows) o.detail << " D(" << row.n << ")=" << row.difference << "<=" << row.bound;
        o.detail << ";";
        o.require(r->holds(), "bound at every ladder point");
        o.require(r->rows.back().difference <= r->rows.front().difference, "D(n) does not grow");
        o.require(r->rows.back().difference < 0.01, "D(10^6) small");
    }
    o.require(rep_z.rows.back().difference < rep_z.rows.front().difference || rep_z.rows.front().difference == 0,
              "D(n) decreases");
    o.detail << " " << secs << "s";
    o.require(secs < 30, "runtime");
}

// 9. Same seed, different worker counts: byte-identical CSVs.
void criterion_9(Outcome& o) {
    const fs::path root = fs::temp_directory_path() / "phlab_acceptance_determinism";
    fs::remove_all(root);
    const std::vector<std::pair<std::string, ConfigMap>> runs{
        {"basins.csv", {{"kind", "basins"}, {"ell", "5"}, {"samples", "20000"}}},
        {"weyl.csv", {{"kind", "weyl"}, {"N", "100000"}}},
        {"sandwich.csv", {{"kind", "sandwich"}, {"ell", "2"}, {"observable", "exp_cos_z"}, {"N", "100000"}}},
        {"orbit.csv", {{"kind", "simulate"}, {"ell", "3"}, {"N", "5000"}}},
    };
    for (const auto& [csv, base] : runs) {
        std::vector<std::string> contents;
        for (unsigned workers : {1u, 3u, 8u}) {
            ConfigMap m = base;
            m["seed"] = std::to_string(kSeed);
            m["workers"] = std::to_string(workers);
            const fs::path dir = root / (base.at("kind") + "_w" + std::to_string(workers));
            m["out"] = dir.string();
            run(config_from_map(m));
            contents.push_back(slurp(dir / csv));
        }
        const bool same = contents[0] == contents[1] && contents[1] == contents[2] && !contents[0].empty();
        o.detail << " " << csv << "=" << (same ? "identical" : "DIFFERENT") << "(" << contents[0].size() << "B);";
        o.require(same, csv + " identical across workers");
    }
    fs::remove_all(root);
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<void(Outcome&)>>> criteria{
        {"AC1 l physical measures", criterion_1},   {"AC2 basin equality", criterion_2},
        {"AC3 Lyapunov spectrum", criterion_3},     {"AC4 ergodicity certificate", criterion_4},
        {"AC5 Weyl sums", criterion_5},             {"AC6 basin covering", criterion_6},
        {"AC7 transitivity", criterion_7},          {"AC8 sandwich bound", criterion_8},
        {"AC9 determinism", criterion_9},
    };
    int failures = 0;
    for (const auto& [name, body] : criteria) {
        Outcome o;
        try {
            body(o);
        } catch (const std::exception& e) {
            o.passed = false;
            o.detail << " [exception: " << e.what() << "]";
        }
        if (!o.passed) ++failures;
        std::printf("%s %s:%s\n", o.passed ? "PASS" : "FAIL", name, o.detail.str().c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
