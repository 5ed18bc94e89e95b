// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "phlab/dynamics.hpp"
#include "phlab/lattice.hpp"
#include "phlab/rng.hpp"

namespace phlab {

/// Neumaier-compensated complex accumulator.
class CompensatedSum {
public:
    void add(std::complex<double> v) {
        add_component(re_, re_c_, v.real());
        add_component(im_, im_c_, v.imag());
    }
    void add(const CompensatedSum& other) {
        add(other.value());
    }
    std::complex<double> value() const { return {re_ + re_c_, im_ + im_c_}; }

private:
    static void add_component(double& sum, double& comp, double v);
    double re_ = 0, re_c_ = 0, im_ = 0, im_c_ = 0;
};

/// Sums per-index terms in fixed-size chunks merged in chunk order.
inline constexpr std::size_t kSummationChunk = 1 << 16;

enum class BuiltinObservable {
    exp_cos_x,  // exp(cos 2 pi x)
    exp_cos_z,  // exp(cos 2 pi z), center factor only
};

/// Bounded continuous test function on the phase space.
class Observable {
public:
    enum class Kind { character, trig_polynomial, builtin };
    using Term = std::pair<FrequencyIndex, std::complex<double>>;

    static Observable character(FrequencyIndex idx);
    static Observable trig_polynomial(std::vector<Term> terms);
    static Observable constant(std::complex<double> value);
    static Observable builtin(BuiltinObservable which);

    Kind kind() const { return kind_; }
    const std::vector<Term>& terms() const { return terms_; }

    std::complex<double> operator()(const SystemPoint& p) const;
    /// Sup norm; closed form (sum of coefficient moduli) for trig polynomials.
    double sup_norm() const;
    /// Lipschitz constant for the product Euclidean metric. Closed form for
    /// trig polynomials, finite-difference estimate for built-ins.
    double lipschitz() const;
    bool lipschitz_is_estimate() const { return kind_ == Kind::builtin; }
    /// Throws PreconditionError if the observable does not fit the system.
    void check_compatible(const ProductSystem& s) const;
    std::string describe() const;

private:
    Kind kind_ = Kind::trig_polynomial;
    std::vector<Term> terms_;
    BuiltinObservable builtin_ = BuiltinObservable::exp_cos_x;
};

/// Value of e(<idx, p>) with the torus and rotation part of the phase
/// computed exactly mod 1.
std::complex<double> evaluate_character(const FrequencyIndex& idx, const SystemPoint& p);

std::complex<double> birkhoff_average(const ProductSystem& s, const SystemPoint& p0, const Observable& obs,
                                      std::size_t n);

struct WeylBox {
    std::int64_t torus = 0;     // |m|, |n|
    std::int64_t rotation = 0;  // |k_i|
    std::int64_t center = 0;    // |j|, g only
};

struct WeylRow {
    FrequencyIndex index;
    std::size_t n;
    double modulus;
};

struct WeylSumTable {
    std::vector<WeylRow> rows;
};

/// Frequencies of the box in lexicographic order over (m, n, k..., j).
std::vector<FrequencyIndex> enumerate_box(const ProductSystem& s, const WeylBox& box);

WeylSumTable weyl_sums(const ProductSystem& s, const SystemPoint& p0, const WeylBox& box, std::size_t n,
                       unsigned workers = 1);

/// |sin(pi N theta)| / (N |sin(pi theta)|), the modulus of an N-term
/// rotation Weyl sum with exact angle theta; 1 when theta = 0.
double rotation_weyl_closed_form(TorusCoord theta, std::size_t n);

/// Histogram over the equidistributing coordinates (x, y, w_1..w_r).
class EmpiricalMeasure {
public:
    explicit EmpiricalMeasure(std::vector<std::size_t> dims);

    void add(std::span<const TorusCoord> coords);
    void add(const SystemPoint& p);

    const std::vector<std::size_t>& dims() const { return dims_; }
    const std::vector<std::uint64_t>& counts() const { return counts_; }
    std::uint64_t total() const { return total_; }
    std::size_t bin_count() const { return counts_.size(); }

private:
    std::vector<std::size_t> dims_;
    std::vector<std::uint64_t> counts_;
    std::uint64_t total_ = 0;
};

EmpiricalMeasure empirical_measure(const ProductSystem& s, const SystemPoint& p0, std::size_t bins_per_axis,
                                   std::size_t n);
/// max over bins of |count / N - 1 / bins|.
double uniformity_deviation(const EmpiricalMeasure& e);

struct LyapunovEstimate {
    double cat_unstable = 0;
    double cat_stable = 0;
    std::vector<double> rotation;
    std::optional<double> center;
    std::size_t n = 0;
};

LyapunovEstimate lyapunov_estimate(const ProductSystem& s, const SystemPoint& p0, std::size_t n);
/// Running center exponent sampled at each checkpoint (ascending).
std::vector<std::pair<std::size_t, double>> center_exponent_ladder(const ProductSystem& s, const SystemPoint& p0,
                                                                   std::span<const std::size_t> checkpoints);

inline constexpr std::size_t kDefaultMaxIter = 100000;
inline constexpr double kDefaultRadius = 1e-9;

struct BasinClass {
    std::optional<std::size_t> sink;  // index into MorseSmaleMap::sinks()
    std::size_t iterations = 0;

    bool resolved() const { return sink.has_value(); }
    bool operator==(const BasinClass&) const = default;
};

/// Iterates only the center coordinate. Starting points within `radius`
/// of a source are Unresolved.
BasinClass classify_basin(const MorseSmaleMap& h, double z0, std::size_t max_iter = kDefaultMaxIter,
                          double radius = kDefaultRadius);
BasinClass classify_basin(const ProductSystem& s, const SystemPoint& p0, std::size_t max_iter = kDefaultMaxIter,
                          double radius = kDefaultRadius);

struct BasinSampler {
    enum class Kind { uniform, grid };
    Kind kind = Kind::uniform;
    std::uint64_t seed = 0;

    static BasinSampler uniform(std::uint64_t seed) { return {Kind::uniform, seed}; }
    static BasinSampler grid() { return {Kind::grid, 0}; }

    /// Sample `index` of `total`. Grid samples put z at index/total.
    SystemPoint sample(const ProductSystem& s, std::size_t index, std::size_t total) const;
};

struct BasinReport {
    std::vector<double> sink_positions;
    std::vector<std::uint64_t> counts;
    std::vector<double> expected_fraction;  // source-to-source interval length
    std::uint64_t unresolved = 0;
    std::uint64_t total = 0;

    double fraction(std::size_t sink) const;
    /// 3 sigma binomial half-width at the observed fraction.
    double half_width(std::size_t sink) const;
    double resolved_fraction_sum() const;
};

std::vector<BasinClass> classify_samples(const ProductSystem& s, const BasinSampler& sampler,
                                         std::size_t n_samples, std::size_t max_iter, double radius,
                                         unsigned workers = 1);
BasinReport basin_survey(const ProductSystem& s, const BasinSampler& sampler, std::size_t n_samples,
                         std::size_t max_iter = kDefaultMaxIter, double radius = kDefaultRadius,
                         unsigned workers = 1);

struct SandwichRow {
    std::size_t n;
    double difference;  // D(n)
    double bound;       // eps + N_delta P / n
    bool holds;
};

struct SandwichReport {
    std::size_t sink = 0;
    double sink_position = 0;
    double delta = 0;
    std::size_t n_delta = 0;
    bool delta_reached = false;
    double sup_norm = 0;
    bool lipschitz_estimated = false;
    std::vector<SandwichRow> rows;
    std::optional<std::size_t> first_violation;

    bool holds() const { return !first_violation.has_value(); }
};

/// Powers of ten from 10 up to n, plus n itself.
std::vector<std::size_t> default_ladder(std::size_t n);

/// Compares Birkhoff averages of obs from p0 and from p0 projected onto its
/// sink slice against the bound eps + N_delta P / n.
SandwichReport sandwich_check(const ProductSystem& s, const Observable& obs, const SystemPoint& p0, double eps,
                              std::size_t n, std::span<const std::size_t> ladder = {});

struct TransitivityReport {
    std::size_t boxes_per_axis = 0;
    std::size_t total_boxes = 0;
    std::size_t visited = 0;
    std::optional<std::size_t> all_visited_at;

    double fraction() const { return static_cast<double>(visited) / static_cast<double>(total_boxes); }
};

TransitivityReport transitivity_probe(const ProductSystem& s, const SystemPoint& p0, double eps, std::size_t n);

}  // namespace phlab
