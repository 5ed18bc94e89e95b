// SPDX-License-Identifier: Apache-2.0
#include "phlab/ergodic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "phlab/parallel.hpp"

namespace phlab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double exp_cos_profile(double t) { return std::exp(cos_2pi(t)); }

// Finite-difference Lipschitz estimate of exp(cos 2 pi t) on a uniform grid.
double exp_cos_lipschitz_estimate() {
    constexpr int kGrid = 1 << 14;
    constexpr double kStep = 1e-7;
    double best = 0;
    for (int i = 0; i < kGrid; ++i) {
        const double t = static_cast<double>(i) / kGrid;
        best = std::max(best, std::fabs(exp_cos_profile(t + kStep) - exp_cos_profile(t)) / kStep);
    }
    return best;
}

long double centered_long(TorusCoord t) {
    const long double v = t.to_long_double();
    return v > 0.5L ? v - 1.0L : v;
}

double product_distance(const SystemPoint& a, const SystemPoint& b) {
    auto sq = [](double d) { return d * d; };
    double acc = sq(circle_distance(a.x.to_double(), b.x.to_double())) +
                 sq(circle_distance(a.y.to_double(), b.y.to_double()));
    for (std::size_t i = 0; i < a.w.size(); ++i) acc += sq(circle_distance(a.w[i].to_double(), b.w[i].to_double()));
    if (a.z && b.z) acc += sq(circle_distance(*a.z, *b.z));
    return std::sqrt(acc);
}

const MorseSmaleMap& require_center(const ProductSystem& s, const char* op) {
    if (!s.center()) throw PreconditionError(std::string(op) + ": system has no center map");
    return *s.center();
}

}  // namespace

void CompensatedSum::add_component(double& sum, double& comp, double v) {
    const double t = sum + v;
    if (std::fabs(sum) >= std::fabs(v)) {
        comp += (sum - t) + v;
    } else {
        comp += (v - t) + sum;
    }
    sum = t;
}

// ---- Observable ------------------------------------------------------------

Observable Observable::character(FrequencyIndex idx) {
    Observable o;
    o.kind_ = Kind::character;
    o.terms_.emplace_back(std::move(idx), std::complex<double>(1.0, 0.0));
    return o;
}

Observable Observable::trig_polynomial(std::vector<Term> terms) {
    Observable o;
    o.kind_ = Kind::trig_polynomial;
    o.terms_ = std::move(terms);
    return o;
}

Observable Observable::constant(std::complex<double> value) {
    return trig_polynomial({{FrequencyIndex{}, value}});
}

Observable Observable::builtin(BuiltinObservable which) {
    Observable o;
    o.kind_ = Kind::builtin;
    o.builtin_ = which;
    return o;
}

std::complex<double> evaluate_character(const FrequencyIndex& idx, const SystemPoint& p) {
    TorusCoord phase = p.x.times(idx.m) + p.y.times(idx.n);
    for (std::size_t i = 0; i < idx.k.size() && i < p.w.size(); ++i) phase = phase + p.w[i].times(idx.k[i]);
    double t = phase.to_double();
    if (idx.j && *idx.j != 0 && p.z) t += static_cast<double>(*idx.j) * *p.z;
    return {cos_2pi(t), sin_2pi(t)};
}

std::complex<double> Observable::operator()(const SystemPoint& p) const {
    if (kind_ == Kind::builtin) {
        switch (builtin_) {
            case BuiltinObservable::exp_cos_x:
                return exp_cos_profile(p.x.to_double());
            case BuiltinObservable::exp_cos_z:
                return exp_cos_profile(p.z.value_or(0.0));
        }
    }
    std::complex<double> acc = 0;
    for (const auto& [idx, coeff] : terms_) acc += coeff * evaluate_character(idx, p);
    return acc;
}

double Observable::sup_norm() const {
    if (kind_ == Kind::builtin) return std::numbers::e;
    double acc = 0;
    for (const auto& term : terms_) acc += std::abs(term.second);
    return acc;
}

double Observable::lipschitz() const {
    if (kind_ == Kind::builtin) {
        static const double estimate = exp_cos_lipschitz_estimate();
        return estimate;
    }
    double acc = 0;
    for (const auto& [idx, coeff] : terms_) acc += kTwoPi * std::abs(coeff) * idx.norm();
    return acc;
}

void Observable::check_compatible(const ProductSystem& s) const {
    if (kind_ == Kind::builtin) {
        if (builtin_ == BuiltinObservable::exp_cos_z && !s.has_center()) {
            throw PreconditionError("observable exp_cos_z needs a center factor");
        }
        return;
    }
    for (const auto& [idx, coeff] : terms_) {
        // The zero index (constant term) fits any system.
        if (idx.is_zero() && idx.k.empty()) continue;
        if (idx.k.size() != s.rotation_count()) {
            throw PreconditionError("observable frequency has " + std::to_string(idx.k.size()) +
                                    " rotation entries, system has " + std::to_string(s.rotation_count()));
        }
        if (idx.j.value_or(0) != 0 && !s.has_center()) {
            throw PreconditionError("observable has a center frequency but the system has no center factor");
        }
    }
}

std::string Observable::describe() const {
    if (kind_ == Kind::builtin) {
        return builtin_ == BuiltinObservable::exp_cos_x ? "exp_cos_x" : "exp_cos_z";
    }
    std::ostringstream out;
    out << (kind_ == Kind::character ? "character" : "trig");
    for (const auto& [idx, coeff] : terms_) {
        out << "(" << idx.m << "," << idx.n;
        for (auto k : idx.k) out << "," << k;
        if (idx.j) out << "," << *idx.j;
        out << ")";
        if (kind_ != Kind::character) out << "*" << coeff;
    }
    return out.str();
}

// ---- Birkhoff averages -----------------------------------------------------

std::complex<double> birkhoff_average(const ProductSystem& s, const SystemPoint& p0, const Observable& obs,
                                      std::size_t n) {
    if (n == 0) throw PreconditionError("birkhoff_average: N must be >= 1");
    s.check_point(p0);
    obs.check_compatible(s);

    CompensatedSum total, chunk;
    SystemPoint p = p0;
    for (std::size_t j = 0; j < n; ++j) {
        chunk.add(obs(p));
        if ((j + 1) % kSummationChunk == 0) {
            total.add(chunk);
            chunk = CompensatedSum{};
        }
        s.advance(p);
    }
    total.add(chunk);
    return total.value() / static_cast<double>(n);
}

// ---- Weyl sums -------------------------------------------------------------

std::vector<FrequencyIndex> enumerate_box(const ProductSystem& s, const WeylBox& box) {
    if (box.torus < 0 || box.rotation < 0 || box.center < 0) {
        throw PreconditionError("weyl_sums: box bounds must be >= 0");
    }
    const std::size_t r = s.rotation_count();
    std::vector<std::int64_t> lo, hi;
    lo.push_back(-box.torus);
    hi.push_back(box.torus);
    lo.push_back(-box.torus);
    hi.push_back(box.torus);
    for (std::size_t i = 0; i < r; ++i) {
        lo.push_back(-box.rotation);
        hi.push_back(box.rotation);
    }
    if (s.has_center()) {
        lo.push_back(-box.center);
        hi.push_back(box.center);
    }

    std::vector<FrequencyIndex> out;
    std::vector<std::int64_t> cur = lo;
    while (true) {
        FrequencyIndex idx;
        idx.m = cur[0];
        idx.n = cur[1];
        idx.k.assign(cur.begin() + 2, cur.begin() + 2 + static_cast<std::ptrdiff_t>(r));
        if (s.has_center()) idx.j = cur.back();
        out.push_back(std::move(idx));
        // Last coordinate varies fastest.
        std::size_t pos = cur.size();
        while (pos > 0 && cur[pos - 1] == hi[pos - 1]) {
            cur[pos - 1] = lo[pos - 1];
            --pos;
        }
        if (pos == 0) break;
        ++cur[pos - 1];
    }
    return out;
}

WeylSumTable weyl_sums(const ProductSystem& s, const SystemPoint& p0, const WeylBox& box, std::size_t n,
                       unsigned workers) {
    if (n == 0) throw PreconditionError("weyl_sums: N must be >= 1");
    s.check_point(p0);
    const std::vector<FrequencyIndex> freqs = enumerate_box(s, box);
    std::vector<double> moduli(freqs.size(), 0.0);

    parallel_for(freqs.size(), workers, [&](std::size_t begin, std::size_t end) {
        const std::size_t count = end - begin;
        std::vector<CompensatedSum> totals(count), chunks(count);
        SystemPoint p = p0;
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t f = 0; f < count; ++f) chunks[f].add(evaluate_character(freqs[begin + f], p));
            if ((j + 1) % kSummationChunk == 0) {
                for (std::size_t f = 0; f < count; ++f) {
                    totals[f].add(chunks[f]);
                    chunks[f] = CompensatedSum{};
                }
            }
            s.advance(p);
        }
        for (std::size_t f = 0; f < count; ++f) {
            totals[f].add(chunks[f]);
            moduli[begin + f] = freqs[begin + f].is_zero() ? 1.0 : std::abs(totals[f].value()) / static_cast<double>(n);
        }
    });

    WeylSumTable table;
    table.rows.reserve(freqs.size());
    for (std::size_t f = 0; f < freqs.size(); ++f) table.rows.push_back({freqs[f], n, moduli[f]});
    return table;
}

double rotation_weyl_closed_form(TorusCoord theta, std::size_t n) {
    if (n == 0) throw PreconditionError("rotation_weyl_closed_form: N must be >= 1");
    if (theta.raw() == 0) return 1.0;
    const long double pi = std::numbers::pi_v<long double>;
    const long double num = std::fabs(std::sin(pi * centered_long(theta.times(static_cast<std::int64_t>(n)))));
    const long double den = static_cast<long double>(n) * std::fabs(std::sin(pi * centered_long(theta)));
    return static_cast<double>(num / den);
}

// ---- empirical measures ----------------------------------------------------

EmpiricalMeasure::EmpiricalMeasure(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) throw PreconditionError("EmpiricalMeasure: need at least one axis");
    std::size_t total = 1;
    for (auto d : dims_) {
        if (d == 0) throw PreconditionError("EmpiricalMeasure: bin counts must be positive");
        if (total > (std::size_t{1} << 32) / d) throw PreconditionError("EmpiricalMeasure: too many bins");
        total *= d;
    }
    counts_.assign(total, 0);
}

void EmpiricalMeasure::add(std::span<const TorusCoord> coords) {
    if (coords.size() != dims_.size()) throw PreconditionError("EmpiricalMeasure: coordinate count mismatch");
    std::size_t flat = 0;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        const auto bin = static_cast<std::size_t>(
            (static_cast<unsigned __int128>(coords[i].raw()) * dims_[i]) >> 64);
        flat = flat * dims_[i] + bin;
    }
    ++counts_[flat];
    ++total_;
}

void EmpiricalMeasure::add(const SystemPoint& p) {
    std::vector<TorusCoord> coords{p.x, p.y};
    coords.insert(coords.end(), p.w.begin(), p.w.end());
    add(coords);
}

EmpiricalMeasure empirical_measure(const ProductSystem& s, const SystemPoint& p0, std::size_t bins_per_axis,
                                   std::size_t n) {
    if (bins_per_axis < 2) throw PreconditionError("empirical_measure: need >= 2 bins per axis");
    if (n == 0) throw PreconditionError("empirical_measure: N must be >= 1");
    s.check_point(p0);
    EmpiricalMeasure e(std::vector<std::size_t>(2 + s.rotation_count(), bins_per_axis));
    std::vector<TorusCoord> coords(2 + s.rotation_count());
    SystemPoint p = p0;
    for (std::size_t j = 0; j < n; ++j) {
        coords[0] = p.x;
        coords[1] = p.y;
        std::copy(p.w.begin(), p.w.end(), coords.begin() + 2);
        e.add(coords);
        s.advance(p);
    }
    return e;
}

double uniformity_deviation(const EmpiricalMeasure& e) {
    if (e.total() == 0) throw PreconditionError("uniformity_deviation: empty measure");
    const double uniform = 1.0 / static_cast<double>(e.bin_count());
    const double total = static_cast<double>(e.total());
    double worst = 0;
    for (auto c : e.counts()) worst = std::max(worst, std::fabs(static_cast<double>(c) / total - uniform));
    return worst;
}

// ---- Lyapunov exponents ----------------------------------------------------

std::vector<std::pair<std::size_t, double>> center_exponent_ladder(const ProductSystem& s, const SystemPoint& p0,
                                                                   std::span<const std::size_t> checkpoints) {
    const MorseSmaleMap& h = require_center(s, "center_exponent_ladder");
    s.check_point(p0);
    if (!std::is_sorted(checkpoints.begin(), checkpoints.end())) {
        throw PreconditionError("center_exponent_ladder: checkpoints must be ascending");
    }
    std::vector<std::pair<std::size_t, double>> out;
    if (checkpoints.empty()) return out;
    if (checkpoints.front() == 0) throw PreconditionError("center_exponent_ladder: checkpoints must be >= 1");

    // Product structure: the center exponent only sees z.
    CompensatedSum total, chunk;
    double z = *p0.z;
    std::size_t next = 0;
    for (std::size_t j = 0; next < checkpoints.size(); ++j) {
        chunk.add(std::log(h.derivative(z)));
        if ((j + 1) % kSummationChunk == 0) {
            total.add(chunk);
            chunk = CompensatedSum{};
        }
        z = h.apply(z);
        while (next < checkpoints.size() && checkpoints[next] == j + 1) {
            CompensatedSum snapshot = total;
            snapshot.add(chunk);
            out.emplace_back(j + 1, snapshot.value().real() / static_cast<double>(j + 1));
            ++next;
        }
    }
    return out;
}

LyapunovEstimate lyapunov_estimate(const ProductSystem& s, const SystemPoint& p0, std::size_t n) {
    if (n == 0) throw PreconditionError("lyapunov_estimate: N must be >= 1");
    s.check_point(p0);
    LyapunovEstimate est;
    // The cat block has constant derivative, so its exponents are exact.
    est.cat_unstable = std::log(s.cat().unstable_eigenvalue());
    est.cat_stable = -est.cat_unstable;
    est.rotation.assign(s.rotation_count(), 0.0);
    est.n = n;
    if (s.has_center()) {
        const std::size_t checkpoint[] = {n};
        est.center = center_exponent_ladder(s, p0, checkpoint).front().second;
    }
    return est;
}

// ---- basins ----------------------------------------------------------------

BasinClass classify_basin(const MorseSmaleMap& h, double z0, std::size_t max_iter, double radius) {
    if (!(z0 >= 0.0 && z0 < 1.0)) throw PreconditionError("classify_basin: z0 must lie in [0,1)");
    if (!(radius > 0.0)) throw PreconditionError("classify_basin: radius must be positive");
    const std::vector<double> sinks = h.sinks();
    for (double u : h.sources()) {
        if (circle_distance(z0, u) < radius) return {std::nullopt, 0};
    }
    double z = z0;
    for (std::size_t it = 0; it <= max_iter; ++it) {
        for (std::size_t i = 0; i < sinks.size(); ++i) {
            if (circle_distance(z, sinks[i]) < radius) return {i, it};
        }
        if (it < max_iter) z = h.apply(z);
    }
    return {std::nullopt, max_iter};
}

BasinClass classify_basin(const ProductSystem& s, const SystemPoint& p0, std::size_t max_iter, double radius) {
    const MorseSmaleMap& h = require_center(s, "classify_basin");
    s.check_point(p0);
    return classify_basin(h, *p0.z, max_iter, radius);
}

SystemPoint BasinSampler::sample(const ProductSystem& s, std::size_t index, std::size_t total) const {
    SystemPoint p;
    p.w.resize(s.rotation_count());
    if (kind == Kind::grid) {
        if (total == 0) throw PreconditionError("grid sampler: total must be >= 1");
        const TorusCoord c = TorusCoord::from_ratio(static_cast<std::int64_t>(index), total);
        p.x = c;
        p.y = c;
        std::fill(p.w.begin(), p.w.end(), c);
        if (s.has_center()) p.z = static_cast<double>(index) / static_cast<double>(total);
        return p;
    }
    const CounterRng rng(seed);
    p.x = TorusCoord(rng.bits(index, 0));
    p.y = TorusCoord(rng.bits(index, 1));
    for (std::size_t i = 0; i < p.w.size(); ++i) p.w[i] = TorusCoord(rng.bits(index, 2 + i));
    if (s.has_center()) p.z = rng.uniform(index, 2 + p.w.size());
    return p;
}

double BasinReport::fraction(std::size_t sink) const {
    return total == 0 ? 0.0 : static_cast<double>(counts.at(sink)) / static_cast<double>(total);
}

double BasinReport::half_width(std::size_t sink) const {
    if (total == 0) return 0.0;
    const double p = fraction(sink);
    return 3.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(total));
}

double BasinReport::resolved_fraction_sum() const {
    if (total == 0) return 0.0;
    std::uint64_t resolved = 0;
    for (auto c : counts) resolved += c;
    return static_cast<double>(resolved) / static_cast<double>(total);
}

std::vector<BasinClass> classify_samples(const ProductSystem& s, const BasinSampler& sampler, std::size_t n_samples,
                                         std::size_t max_iter, double radius, unsigned workers) {
    const MorseSmaleMap& h = require_center(s, "basin_survey");
    std::vector<BasinClass> out(n_samples);
    parallel_for(n_samples, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            out[i] = classify_basin(h, *sampler.sample(s, i, n_samples).z, max_iter, radius);
        }
    });
    return out;
}

BasinReport basin_survey(const ProductSystem& s, const BasinSampler& sampler, std::size_t n_samples,
                         std::size_t max_iter, double radius, unsigned workers) {
    const MorseSmaleMap& h = require_center(s, "basin_survey");
    if (n_samples == 0) throw PreconditionError("basin_survey: need at least one sample");

    BasinReport report;
    report.sink_positions = h.sinks();
    report.counts.assign(report.sink_positions.size(), 0);
    report.total = n_samples;

    const std::vector<double> sources = h.sources();
    for (double u : report.sink_positions) {
        // Basin of u is the arc between its neighbouring sources.
        double left = -1.0, right = 2.0;
        for (double src : sources) {
            const double ahead = src > u ? src - u : src + 1.0 - u;
            const double behind = src < u ? u - src : u + 1.0 - src;
            right = std::min(right, ahead);
            left = std::max(left, -behind);
        }
        report.expected_fraction.push_back(sources.size() == 1 ? 1.0 : right - left);
    }

    for (const auto& c : classify_samples(s, sampler, n_samples, max_iter, radius, workers)) {
        if (c.sink) {
            ++report.counts[*c.sink];
        } else {
            ++report.unresolved;
        }
    }
    return report;
}

// ---- sandwich bound --------------------------------------------------------

std::vector<std::size_t> default_ladder(std::size_t n) {
    std::vector<std::size_t> out;
    for (std::size_t p = 10; p <= n; p *= 10) {
        out.push_back(p);
        if (p > std::numeric_limits<std::size_t>::max() / 10) break;
    }
    if (out.empty() || out.back() != n) out.push_back(n);
    return out;
}

SandwichReport sandwich_check(const ProductSystem& s, const Observable& obs, const SystemPoint& p0, double eps,
                              std::size_t n, std::span<const std::size_t> ladder_in) {
    const MorseSmaleMap& h = require_center(s, "sandwich_check");
    s.check_point(p0);
    obs.check_compatible(s);
    if (!(eps > 0.0)) throw PreconditionError("sandwich_check: eps must be positive");
    if (n == 0) throw PreconditionError("sandwich_check: N must be >= 1");

    std::vector<std::size_t> ladder(ladder_in.begin(), ladder_in.end());
    if (ladder.empty()) ladder = default_ladder(n);
    std::sort(ladder.begin(), ladder.end());
    if (ladder.front() == 0 || ladder.back() > n) throw PreconditionError("sandwich_check: ladder must lie in [1, N]");

    const BasinClass basin = classify_basin(h, *p0.z);
    if (!basin.sink) throw PreconditionError("sandwich_check: p0 does not resolve to a sink");

    SandwichReport report;
    report.sink = *basin.sink;
    report.sink_position = h.sinks()[report.sink];
    report.sup_norm = obs.sup_norm();
    report.lipschitz_estimated = obs.lipschitz_is_estimate();
    const double lip = obs.lipschitz();
    report.delta = lip > 0 ? eps / lip : std::numeric_limits<double>::infinity();

    SystemPoint a = p0;
    SystemPoint b = p0;
    b.z = report.sink_position;

    CompensatedSum sum_a, sum_b;
    std::vector<double> differences;
    // N_delta: every index from here on stays within delta.
    std::size_t last_far = 0;
    bool any_far = false;
    std::size_t next = 0;
    for (std::size_t j = 0; j < n && next < ladder.size(); ++j) {
        if (!(product_distance(a, b) < report.delta)) {
            last_far = j;
            any_far = true;
        }
        sum_a.add(obs(a));
        sum_b.add(obs(b));
        while (next < ladder.size() && ladder[next] == j + 1) {
            const double inv = 1.0 / static_cast<double>(j + 1);
            differences.push_back(std::abs(sum_a.value() * inv - sum_b.value() * inv));
            ++next;
        }
        s.advance(a);
        s.advance(b);
    }
    report.n_delta = any_far ? last_far + 1 : 0;
    report.delta_reached = !any_far || last_far + 1 < ladder.back();

    for (std::size_t i = 0; i < ladder.size(); ++i) {
        const double bound = eps + static_cast<double>(report.n_delta) * report.sup_norm / static_cast<double>(ladder[i]);
        const bool holds = differences[i] <= bound;
        report.rows.push_back({ladder[i], differences[i], bound, holds});
        if (!holds && !report.first_violation) report.first_violation = ladder[i];
    }
    return report;
}

// ---- transitivity ----------------------------------------------------------

TransitivityReport transitivity_probe(const ProductSystem& s, const SystemPoint& p0, double eps, std::size_t n) {
    if (s.has_center()) throw PreconditionError("transitivity_probe: system must not carry a center map");
    if (!(eps > 0.0 && eps <= 1.0)) throw PreconditionError("transitivity_probe: eps must lie in (0,1]");
    if (n == 0) throw PreconditionError("transitivity_probe: N must be >= 1");
    s.check_point(p0);

    TransitivityReport report;
    report.boxes_per_axis = static_cast<std::size_t>(std::ceil(1.0 / eps - 1e-9));
    const std::size_t axes = 2 + s.rotation_count();
    report.total_boxes = 1;
    for (std::size_t i = 0; i < axes; ++i) {
        if (report.total_boxes > 100'000'000 / report.boxes_per_axis) {
            throw PreconditionError("transitivity_probe: too many boxes");
        }
        report.total_boxes *= report.boxes_per_axis;
    }

    const auto bin = [&](TorusCoord c) {
        return static_cast<std::size_t>((static_cast<unsigned __int128>(c.raw()) * report.boxes_per_axis) >> 64);
    };
    std::vector<std::uint8_t> seen(report.total_boxes, 0);
    SystemPoint p = p0;
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t flat = bin(p.x) * report.boxes_per_axis + bin(p.y);
        for (const auto& w : p.w) flat = flat * report.boxes_per_axis + bin(w);
        if (!seen[flat]) {
            seen[flat] = 1;
            if (++report.visited == report.total_boxes) {
                report.all_visited_at = j + 1;
                break;
            }
        }
        s.advance(p);
    }
    return report;
}

}  // namespace phlab
