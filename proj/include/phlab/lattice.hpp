// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <json.hpp>

#include "phlab/dynamics.hpp"

namespace phlab {

using WideInt = __int128;

/// Index (m, n, k_1..k_r[, j]) of the character
/// e(m x + n y + k.w [+ j z]) on T^2 x (S^1)^r [x S^1].
struct FrequencyIndex {
    std::int64_t m = 0;
    std::int64_t n = 0;
    std::vector<std::int64_t> k;
    std::optional<std::int64_t> j;

    bool is_zero() const;
    /// Euclidean norm of the full integer vector.
    double norm() const;
    bool operator==(const FrequencyIndex&) const = default;
};

/// Action of the automorphism on torus frequencies: a character composed with
/// the lift picks up the transposed matrix, (m, n) -> (a m + c n, b m + d n).
/// Throws std::overflow_error if the result leaves 128-bit range.
std::pair<WideInt, WideInt> index_step(WideInt m, WideInt n, const CatMap& cat);

/// Invariance of an observable forces a_{step(m,n),k} = e(<alpha,k>) a_{m,n,k}.
class CoefficientRelation {
public:
    CoefficientRelation(CatMap cat, std::vector<AngleSpec> angles);

    /// Index reached by one application of the relation.
    FrequencyIndex next(const FrequencyIndex& idx) const;
    /// e^{2 pi i <alpha, k>}, evaluated from the rounded angles.
    std::complex<long double> phase_factor(const std::vector<std::int64_t>& k) const;
    /// Coefficient at next(idx) given the coefficient at idx.
    std::complex<long double> transport(const FrequencyIndex& idx, std::complex<long double> coeff) const;

private:
    CatMap cat_;
    std::vector<AngleSpec> angles_;
};

struct EscapeEntry {
    std::int64_t m;
    std::int64_t n;
    int steps;
};

struct EscapeCertificate {
    std::int64_t box_bound = 0;
    int max_steps = 0;
    std::vector<EscapeEntry> entries;
    std::vector<std::pair<std::int64_t, std::int64_t>> failures;
    int max_escape_step = 0;

    bool passed() const { return failures.empty(); }
};

/// Iterates index_step from every nonzero (m,n) in [-M,M]^2 until the
/// orbit leaves the box. Indices that stay inside for step_budget steps
/// are recorded as failures. Entries are in row-major order over (m, n).
EscapeCertificate escape_certificate(const CatMap& cat, std::int64_t box_bound, int step_budget,
                                     unsigned workers = 1);

/// |e(<alpha,k>) - 1| = 2 |sin(pi <alpha,k>)|. Exact zero for rational
/// relations among explicit angles.
long double rotation_margin(const std::vector<AngleSpec>& alphas, const std::vector<std::int64_t>& k);

struct IntegerRelation {
    std::vector<std::int64_t> coefficients;
    std::int64_t constant = 0;
    long double residual = 0;
};

/// Searches nonzero C with |C_i| <= coeff_bound for |sum C_i alpha_i - C_0| < tol.
/// Candidates are scanned by increasing max |C_i|, then |C_0|, then
/// lexicographically with the first nonzero entry positive. A hit falsifies
/// rational independence; no hit proves nothing.
std::optional<IntegerRelation> independence_falsifier(const std::vector<AngleSpec>& alphas,
                                                      std::int64_t coeff_bound, long double tol);

struct MarginEntry {
    std::size_t factor;
    std::int64_t k;
    long double margin;
};

struct ErgodicityReport {
    EscapeCertificate escape;
    std::vector<MarginEntry> margins;
    long double min_margin = 0;
    std::size_t min_margin_factor = 0;
    std::int64_t min_margin_k = 0;
    long double margin_floor = 0;
    bool passed = false;
};

inline constexpr int kDefaultStepBudget = 64;
inline constexpr long double kDefaultMarginFloor = 0.05L;

/// Combines the escape certificate on (m,n) != 0 with rotation margins for
/// 0 < k <= K on each rotation factor. Requires a system without center map.
ErgodicityReport ergodicity_certificate(const ProductSystem& s, std::int64_t box_bound, std::int64_t max_k,
                                        int step_budget = kDefaultStepBudget,
                                        long double margin_floor = kDefaultMarginFloor, unsigned workers = 1);

nlohmann::json to_json(const EscapeCertificate& cert, bool include_entries = false);
nlohmann::json to_json(const ErgodicityReport& report);

}  // namespace phlab
