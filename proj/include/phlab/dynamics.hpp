// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace phlab {

/// Thrown when a value violates a documented precondition or invariant.
class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A point of the circle R/Z stored as a 64-bit binary fraction,
/// value = raw / 2^64. Unsigned wraparound is exactly reduction mod 1.
class TorusCoord {
public:
    constexpr TorusCoord() = default;
    constexpr explicit TorusCoord(std::uint64_t raw) : raw_(raw) {}

    /// Nearest representable coordinate to frac(v).
    static TorusCoord from_double(double v);
    /// Exact coordinate num/den mod 1, rounded to nearest when den is not a power of two.
    static TorusCoord from_ratio(std::int64_t num, std::uint64_t den);

    constexpr std::uint64_t raw() const { return raw_; }
    double to_double() const;
    long double to_long_double() const;

    constexpr TorusCoord operator+(TorusCoord o) const { return TorusCoord(raw_ + o.raw_); }
    constexpr TorusCoord operator-(TorusCoord o) const { return TorusCoord(raw_ - o.raw_); }
    constexpr TorusCoord operator-() const { return TorusCoord(0 - raw_); }
    constexpr TorusCoord times(std::int64_t k) const {
        return TorusCoord(raw_ * static_cast<std::uint64_t>(k));
    }
    constexpr bool operator==(const TorusCoord&) const = default;

private:
    std::uint64_t raw_ = 0;
};

/// Integer 2x2 matrix ((a,b),(c,d)) in SL(2,Z) with |trace| > 2.
class CatMap {
public:
    /// The default automorphism ((2,1),(1,1)).
    CatMap() = default;
    CatMap(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d);

    std::int64_t a() const { return a_; }
    std::int64_t b() const { return b_; }
    std::int64_t c() const { return c_; }
    std::int64_t d() const { return d_; }
    std::int64_t trace() const { return a_ + d_; }

    /// Modulus of the expanding eigenvalue, (|tr| + sqrt(tr^2 - 4)) / 2.
    double unstable_eigenvalue() const;
    /// Unit vector spanning the expanding eigendirection.
    std::pair<double, double> unstable_direction() const;

    /// Inverse matrix ((d,-b),(-c,a)).
    CatMap inverse() const;

    bool operator==(const CatMap&) const = default;

private:
    std::int64_t a_ = 2, b_ = 1, c_ = 1, d_ = 1;
};

/// A rotation angle for a circle factor.
///
/// Golden and sqrt-prime angles are irrational by construction. Explicit
/// angles are parsed from decimal or p/q literals and kept as exact
/// rationals; they carry no irrationality guarantee.
class AngleSpec {
public:
    enum class Kind { golden, sqrt_prime, explicit_real };

    static AngleSpec golden();
    static AngleSpec sqrt_prime(std::uint64_t p);
    static AngleSpec explicit_ratio(std::int64_t num, std::int64_t den);
    /// Accepts "golden", "sqrt:<p>", "<p>/<q>", or a decimal literal in (0,1).
    static AngleSpec parse(const std::string& text);

    Kind kind() const { return kind_; }
    std::uint64_t prime() const { return prime_; }
    bool is_rational() const { return kind_ == Kind::explicit_real; }
    /// Exact numerator/denominator, reduced; only meaningful for explicit angles.
    std::int64_t numerator() const { return num_; }
    std::int64_t denominator() const { return den_; }

    /// The angle rounded once to the nearest multiple of 2^-64.
    TorusCoord rounded() const { return rounded_; }
    long double value() const;
    std::string to_string() const;

    bool operator==(const AngleSpec&) const = default;

private:
    AngleSpec(Kind kind, std::uint64_t prime, std::int64_t num, std::int64_t den, TorusCoord rounded)
        : kind_(kind), prime_(prime), num_(num), den_(den), rounded_(rounded) {}

    Kind kind_ = Kind::golden;
    std::uint64_t prime_ = 0;
    std::int64_t num_ = 0;
    std::int64_t den_ = 1;
    TorusCoord rounded_{};
};

enum class FixedPointKind { sink, source };

struct FixedPoint {
    double position;
    FixedPointKind kind;
    double derivative;
};

/// Circle diffeomorphism h(z) = z + eps/(2 pi l) sin(2 pi l (z - phase)) mod 1.
/// Fixed points sit at phase + k/(2l): sources for even k, sinks for odd k.
class MorseSmaleMap {
public:
    MorseSmaleMap(int ell, double epsilon, TorusCoord phase = TorusCoord{});

    int ell() const { return ell_; }
    double epsilon() const { return epsilon_; }
    TorusCoord phase() const { return phase_; }

    double apply(double z) const;
    double derivative(double z) const;
    /// 2l fixed points sorted by position in [0,1).
    std::vector<FixedPoint> fixed_points() const;
    /// Sink positions sorted ascending; index i is the i-th physical measure.
    std::vector<double> sinks() const;
    std::vector<double> sources() const;

    bool operator==(const MorseSmaleMap&) const = default;

private:
    int ell_;
    double epsilon_;
    TorusCoord phase_;
};

/// sin(2 pi t) and cos(2 pi t) with exact values at multiples of 1/4.
double sin_2pi(double t);
double cos_2pi(double t);
/// Circular distance on R/Z.
double circle_distance(double a, double b);

/// A point of T^2 x (S^1)^r, optionally x S^1 for the center factor.
struct SystemPoint {
    TorusCoord x;
    TorusCoord y;
    std::vector<TorusCoord> w;
    std::optional<double> z;

    bool operator==(const SystemPoint&) const = default;
};

struct PartialHyperbolicityCertificate {
    double lambda_u;
    double sup_center;
    double C;
    double lambda;
    /// Unit vector spanning E^u inside the T^2 factor; F is its complement.
    std::pair<double, double> unstable_direction;
};

/// f = A x R_{alpha_1} x ... x R_{alpha_r}, or g = f x h when a center map is present.
class ProductSystem {
public:
    ProductSystem(CatMap cat, std::vector<AngleSpec> rotations,
                  std::optional<MorseSmaleMap> center = std::nullopt);

    const CatMap& cat() const { return cat_; }
    const std::vector<AngleSpec>& rotations() const { return rotations_; }
    const std::optional<MorseSmaleMap>& center() const { return center_; }
    std::size_t rotation_count() const { return rotations_.size(); }
    bool has_center() const { return center_.has_value(); }

    /// Throws PreconditionError if p does not have this system's shape.
    void check_point(const SystemPoint& p) const;
    bool matches(const SystemPoint& p) const;

    SystemPoint step(const SystemPoint& p) const;
    /// In-place step, skipping shape checks.
    void advance(SystemPoint& p) const;
    /// Exact inverse on the torus and rotation factors; center untouched.
    void retreat_exact_factors(SystemPoint& p) const;

private:
    CatMap cat_;
    std::vector<AngleSpec> rotations_;
    std::optional<MorseSmaleMap> center_;
};

std::pair<TorusCoord, TorusCoord> cat_apply(const CatMap& map, TorusCoord x, TorusCoord y);
TorusCoord rotation_apply(const AngleSpec& alpha, TorusCoord w);
double ms_apply(const MorseSmaleMap& h, double z);
std::vector<FixedPoint> ms_fixed_points(const MorseSmaleMap& h);
SystemPoint system_step(const ProductSystem& s, const SystemPoint& p);

/// Streams p0, s^stride(p0), ... without materializing the orbit.
class OrbitStream {
public:
    OrbitStream(const ProductSystem& s, SystemPoint p0, std::size_t stride = 1);

    const SystemPoint& current() const { return current_; }
    std::size_t index() const { return index_; }
    void next();

private:
    const ProductSystem* system_;
    SystemPoint current_;
    std::size_t stride_;
    std::size_t index_ = 0;
};

/// Materialized n-sample orbit; use OrbitStream for long runs.
std::vector<SystemPoint> system_orbit(const ProductSystem& s, const SystemPoint& p0,
                                      std::size_t n, std::size_t stride = 1);

/// Descending Lyapunov spectrum. For g, sink_index selects the physical measure.
std::vector<double> analytic_lyapunov_spectrum(const ProductSystem& s,
                                               std::optional<int> sink_index = std::nullopt);

PartialHyperbolicityCertificate partial_hyperbolicity_certificate(const ProductSystem& s);
/// Builds a certificate from raw rates; fails when sup_center / lambda_u >= 1.
PartialHyperbolicityCertificate certify_domination(double lambda_u, double sup_center,
                                                   std::pair<double, double> unstable_direction);

}  // namespace phlab
