// SPDX-License-Identifier: Apache-2.0
#include "phlab/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <boost/multiprecision/cpp_int.hpp>

#include "phlab/parallel.hpp"

namespace phlab {

namespace {

using boost::multiprecision::cpp_int;
using boost::multiprecision::cpp_rational;

WideInt wide_abs(WideInt v) { return v < 0 ? -v : v; }

bool all_rational(const std::vector<AngleSpec>& alphas) {
    return std::all_of(alphas.begin(), alphas.end(), [](const AngleSpec& a) { return a.is_rational(); });
}

// Fractional part in [0,1) of sum k_i alpha_i, exact for explicit angles.
cpp_rational exact_pairing_frac(const std::vector<AngleSpec>& alphas, const std::vector<std::int64_t>& k) {
    cpp_rational sum = 0;
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        sum += cpp_rational(cpp_int(k[i]) * alphas[i].numerator(), cpp_int(alphas[i].denominator()));
    }
    const cpp_int whole = numerator(sum) / denominator(sum);
    cpp_rational frac = sum - cpp_rational(whole);
    if (frac < 0) frac += 1;
    return frac;
}

// <alpha,k> mod 1 from the rounded angles; exact mod 1 in 2^-64 arithmetic.
TorusCoord rounded_pairing(const std::vector<AngleSpec>& alphas, const std::vector<std::int64_t>& k) {
    TorusCoord acc{};
    for (std::size_t i = 0; i < alphas.size(); ++i) acc = acc + alphas[i].rounded().times(k[i]);
    return acc;
}

long double centered(long double t) { return t > 0.5L ? t - 1.0L : t; }

}  // namespace

bool FrequencyIndex::is_zero() const {
    return m == 0 && n == 0 && std::all_of(k.begin(), k.end(), [](std::int64_t v) { return v == 0; }) &&
           j.value_or(0) == 0;
}

double FrequencyIndex::norm() const {
    double sq = static_cast<double>(m) * static_cast<double>(m) + static_cast<double>(n) * static_cast<double>(n);
    for (auto v : k) sq += static_cast<double>(v) * static_cast<double>(v);
    if (j) sq += static_cast<double>(*j) * static_cast<double>(*j);
    return std::sqrt(sq);
}

std::pair<WideInt, WideInt> index_step(WideInt m, WideInt n, const CatMap& cat) {
    WideInt am = 0, cn = 0, bm = 0, dn = 0, nm = 0, nn = 0;
    bool overflow = __builtin_mul_overflow(static_cast<WideInt>(cat.a()), m, &am);
    overflow |= __builtin_mul_overflow(static_cast<WideInt>(cat.c()), n, &cn);
    overflow |= __builtin_mul_overflow(static_cast<WideInt>(cat.b()), m, &bm);
    overflow |= __builtin_mul_overflow(static_cast<WideInt>(cat.d()), n, &dn);
    overflow |= __builtin_add_overflow(am, cn, &nm);
    overflow |= __builtin_add_overflow(bm, dn, &nn);
    if (overflow) throw std::overflow_error("index_step: frequency left 128-bit range");
    return {nm, nn};
}

// ---- CoefficientRelation ---------------------------------------------------

CoefficientRelation::CoefficientRelation(CatMap cat, std::vector<AngleSpec> angles)
    : cat_(cat), angles_(std::move(angles)) {}

FrequencyIndex CoefficientRelation::next(const FrequencyIndex& idx) const {
    const auto [m, n] = index_step(idx.m, idx.n, cat_);
    constexpr WideInt lim = std::numeric_limits<std::int64_t>::max();
    if (wide_abs(m) > lim || wide_abs(n) > lim) throw std::overflow_error("CoefficientRelation: index exceeds 64 bits");
    FrequencyIndex out = idx;
    out.m = static_cast<std::int64_t>(m);
    out.n = static_cast<std::int64_t>(n);
    return out;
}

std::complex<long double> CoefficientRelation::phase_factor(const std::vector<std::int64_t>& k) const {
    if (k.size() != angles_.size()) throw PreconditionError("phase_factor: k has wrong length");
    const long double t = centered(rounded_pairing(angles_, k).to_long_double());
    const long double theta = 2.0L * std::numbers::pi_v<long double> * t;
    return {std::cos(theta), std::sin(theta)};
}

std::complex<long double> CoefficientRelation::transport(const FrequencyIndex& idx,
                                                         std::complex<long double> coeff) const {
    return phase_factor(idx.k) * coeff;
}

// ---- escape certificate ----------------------------------------------------

EscapeCertificate escape_certificate(const CatMap& cat, std::int64_t box_bound, int step_budget, unsigned workers) {
    if (box_bound < 1) throw PreconditionError("escape_certificate: box bound must be >= 1");
    if (step_budget < 1) throw PreconditionError("escape_certificate: step budget must be >= 1");

    const std::int64_t side = 2 * box_bound + 1;
    const auto cells = static_cast<std::size_t>(side * side);
    // steps == -1 marks budget exhaustion.
    std::vector<int> steps(cells, 0);

    parallel_for(cells, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t cell = begin; cell < end; ++cell) {
            const std::int64_t m0 = static_cast<std::int64_t>(cell) / side - box_bound;
            const std::int64_t n0 = static_cast<std::int64_t>(cell) % side - box_bound;
            if (m0 == 0 && n0 == 0) continue;
            WideInt m = m0, n = n0;
            int count = 0;
            while (std::max(wide_abs(m), wide_abs(n)) <= box_bound) {
                if (count == step_budget) {
                    count = -1;
                    break;
                }
                std::tie(m, n) = index_step(m, n, cat);
                ++count;
            }
            steps[cell] = count;
        }
    });

    EscapeCertificate cert;
    cert.box_bound = box_bound;
    cert.max_steps = step_budget;
    cert.entries.reserve(cells - 1);
    for (std::size_t cell = 0; cell < cells; ++cell) {
        const std::int64_t m0 = static_cast<std::int64_t>(cell) / side - box_bound;
        const std::int64_t n0 = static_cast<std::int64_t>(cell) % side - box_bound;
        if (m0 == 0 && n0 == 0) continue;
        cert.entries.push_back({m0, n0, steps[cell]});
        if (steps[cell] < 0) {
            cert.failures.emplace_back(m0, n0);
        } else {
            cert.max_escape_step = std::max(cert.max_escape_step, steps[cell]);
        }
    }
    return cert;
}

// ---- rotation side ---------------------------------------------------------

long double rotation_margin(const std::vector<AngleSpec>& alphas, const std::vector<std::int64_t>& k) {
    if (k.size() != alphas.size()) throw PreconditionError("rotation_margin: k has wrong length");
    if (std::all_of(k.begin(), k.end(), [](std::int64_t v) { return v == 0; })) {
        throw PreconditionError("rotation_margin: k must be nonzero");
    }
    long double t = 0;
    if (all_rational(alphas)) {
        const cpp_rational frac = exact_pairing_frac(alphas, k);
        if (frac == 0) return 0.0L;
        t = static_cast<long double>(numerator(frac).convert_to<long double>() /
                                     denominator(frac).convert_to<long double>());
    } else {
        t = rounded_pairing(alphas, k).to_long_double();
    }
    return 2.0L * std::fabs(std::sin(std::numbers::pi_v<long double> * centered(t)));
}

std::optional<IntegerRelation> independence_falsifier(const std::vector<AngleSpec>& alphas,
                                                      std::int64_t coeff_bound, long double tol) {
    if (coeff_bound < 1) throw PreconditionError("independence_falsifier: coefficient bound must be >= 1");
    if (alphas.empty()) return std::nullopt;

    const bool exact = all_rational(alphas);
    std::vector<long double> values;
    for (const auto& a : alphas) values.push_back(a.value());

    std::optional<IntegerRelation> best;
    std::int64_t best_norm = 0;
    std::vector<std::int64_t> c(alphas.size(), -coeff_bound);
    while (true) {
        const auto first_nonzero = std::find_if(c.begin(), c.end(), [](std::int64_t v) { return v != 0; });
        if (first_nonzero != c.end() && *first_nonzero > 0) {
            std::int64_t norm = 0;
            for (auto v : c) norm = std::max(norm, v < 0 ? -v : v);
            IntegerRelation cand{c, 0, 0};
            if (exact) {
                cpp_rational sum = 0;
                for (std::size_t i = 0; i < c.size(); ++i) {
                    sum += cpp_rational(cpp_int(c[i]) * alphas[i].numerator(), cpp_int(alphas[i].denominator()));
                }
                const cpp_rational shifted = sum + cpp_rational(1, 2);
                cpp_int fl = numerator(shifted) / denominator(shifted);
                if (cpp_rational(fl) > shifted) fl -= 1;
                cand.constant = fl.convert_to<std::int64_t>();
                const cpp_rational res = sum - cpp_rational(fl);
                cand.residual = numerator(res).convert_to<long double>() / denominator(res).convert_to<long double>();
            } else {
                long double sum = 0;
                for (std::size_t i = 0; i < c.size(); ++i) sum += static_cast<long double>(c[i]) * values[i];
                const long double nearest = std::nearbyint(sum);
                cand.constant = static_cast<std::int64_t>(nearest);
                cand.residual = sum - nearest;
            }
            if (std::fabs(cand.residual) < tol) {
                const auto abs_c0 = [](const IntegerRelation& r) { return r.constant < 0 ? -r.constant : r.constant; };
                const bool better = !best || norm < best_norm ||
                                    (norm == best_norm && (abs_c0(cand) < abs_c0(*best) ||
                                                           (abs_c0(cand) == abs_c0(*best) &&
                                                            cand.coefficients < best->coefficients)));
                if (better) {
                    best = cand;
                    best_norm = norm;
                }
            }
        }
        std::size_t pos = 0;
        while (pos < c.size() && c[pos] == coeff_bound) c[pos++] = -coeff_bound;
        if (pos == c.size()) break;
        ++c[pos];
    }
    return best;
}

// ---- combined certificate --------------------------------------------------

ErgodicityReport ergodicity_certificate(const ProductSystem& s, std::int64_t box_bound, std::int64_t max_k,
                                        int step_budget, long double margin_floor, unsigned workers) {
    if (s.has_center()) throw PreconditionError("ergodicity_certificate: system must not carry a center map");
    if (max_k < 1) throw PreconditionError("ergodicity_certificate: K must be >= 1");

    ErgodicityReport report;
    report.escape = escape_certificate(s.cat(), box_bound, step_budget, workers);
    report.margin_floor = margin_floor;
    report.min_margin = std::numeric_limits<long double>::infinity();

    const auto& alphas = s.rotations();
    for (std::size_t factor = 0; factor < alphas.size(); ++factor) {
        std::vector<std::int64_t> k(alphas.size(), 0);
        for (std::int64_t kk = 1; kk <= max_k; ++kk) {
            k[factor] = kk;
            const long double margin = rotation_margin(alphas, k);
            report.margins.push_back({factor, kk, margin});
            if (margin < report.min_margin) {
                report.min_margin = margin;
                report.min_margin_factor = factor;
                report.min_margin_k = kk;
            }
        }
    }
    report.passed = report.escape.passed() && report.min_margin > margin_floor;
    return report;
}

nlohmann::json to_json(const EscapeCertificate& cert, bool include_entries) {
    nlohmann::json j;
    j["box_bound"] = cert.box_bound;
    j["step_budget"] = cert.max_steps;
    j["indices"] = cert.entries.size();
    j["max_escape_step"] = cert.max_escape_step;
    j["passed"] = cert.passed();
    j["failures"] = nlohmann::json::array();
    for (const auto& [m, n] : cert.failures) j["failures"].push_back({m, n});
    if (include_entries) {
        j["entries"] = nlohmann::json::array();
        for (const auto& e : cert.entries) j["entries"].push_back({e.m, e.n, e.steps});
    }
    return j;
}

nlohmann::json to_json(const ErgodicityReport& report) {
    nlohmann::json j;
    j["escape"] = to_json(report.escape);
    j["min_margin"] = static_cast<double>(report.min_margin);
    j["min_margin_factor"] = report.min_margin_factor;
    j["min_margin_k"] = report.min_margin_k;
    j["margin_floor"] = static_cast<double>(report.margin_floor);
    j["passed"] = report.passed;
    return j;
}

}  // namespace phlab
