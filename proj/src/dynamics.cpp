// SPDX-License-Identifier: Apache-2.0
#include "phlab/dynamics.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <numeric>

#include <boost/multiprecision/cpp_int.hpp>

namespace phlab {

namespace {

using boost::multiprecision::cpp_int;

// round(2^64 * v) given floor(2^65 * v), for v in (0,1) irrational.
TorusCoord round_from_double_scale(const cpp_int& floor_2_65_v) {
    cpp_int raw = (floor_2_65_v + 1) >> 1;
    if (raw >= (cpp_int(1) << 64)) raw = 0;
    return TorusCoord(raw.convert_to<std::uint64_t>());
}

bool is_prime(std::uint64_t p) {
    if (p < 2) return false;
    for (std::uint64_t q = 2; q * q <= p; ++q) {
        if (p % q == 0) return false;
    }
    return true;
}

}  // namespace

// ---- TorusCoord ------------------------------------------------------------

TorusCoord TorusCoord::from_double(double v) {
    const long double frac = static_cast<long double>(v) - std::floor(static_cast<long double>(v));
    const long double scaled = std::rint(std::ldexp(frac, 64));
    if (scaled >= std::ldexp(1.0L, 64) || scaled < 0) return TorusCoord(0);
    return TorusCoord(static_cast<std::uint64_t>(scaled));
}

TorusCoord TorusCoord::from_ratio(std::int64_t num, std::uint64_t den) {
    if (den == 0) throw PreconditionError("TorusCoord::from_ratio: zero denominator");
    const auto sden = static_cast<__int128>(den);
    __int128 r = static_cast<__int128>(num) % sden;
    if (r < 0) r += sden;
    const unsigned __int128 scaled = (static_cast<unsigned __int128>(r) << 64) + den / 2;
    const unsigned __int128 q = scaled / den;
    return TorusCoord(static_cast<std::uint64_t>(q));  // q == 2^64 wraps to 0
}

double TorusCoord::to_double() const {
    // Truncate to 53 bits so the result stays strictly below 1.
    return std::ldexp(static_cast<double>(raw_ >> 11), -53);
}

long double TorusCoord::to_long_double() const {
    return std::ldexp(static_cast<long double>(raw_), -64);
}

// ---- CatMap ----------------------------------------------------------------

CatMap::CatMap(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d)
    : a_(a), b_(b), c_(c), d_(d) {
    const __int128 det = static_cast<__int128>(a) * d - static_cast<__int128>(b) * c;
    if (det != 1) throw PreconditionError("CatMap: determinant must be 1");
    const __int128 tr = static_cast<__int128>(a) + d;
    if (tr >= -2 && tr <= 2) throw PreconditionError("CatMap: |trace| must exceed 2 (not hyperbolic)");
}

double CatMap::unstable_eigenvalue() const {
    const double t = std::fabs(static_cast<double>(trace()));
    return (t + std::sqrt(t * t - 4.0)) / 2.0;
}

std::pair<double, double> CatMap::unstable_direction() const {
    const double mu = trace() > 0 ? unstable_eigenvalue() : -unstable_eigenvalue();
    double vx = 0, vy = 0;
    if (b_ != 0) {
        vx = static_cast<double>(b_);
        vy = mu - static_cast<double>(a_);
    } else {
        vx = mu - static_cast<double>(d_);
        vy = static_cast<double>(c_);
    }
    const double norm = std::hypot(vx, vy);
    return {vx / norm, vy / norm};
}

CatMap CatMap::inverse() const { return CatMap(d_, -b_, -c_, a_); }

// ---- AngleSpec -------------------------------------------------------------

AngleSpec AngleSpec::golden() {
    // floor(2^65 (sqrt5 - 1)/2) = isqrt(5 * 2^128) - 2^64
    const cpp_int scaled = boost::multiprecision::sqrt(cpp_int(5) << 128) - (cpp_int(1) << 64);
    return AngleSpec(Kind::golden, 0, 0, 1, round_from_double_scale(scaled));
}

AngleSpec AngleSpec::sqrt_prime(std::uint64_t p) {
    if (!is_prime(p)) throw PreconditionError("AngleSpec: sqrt-prime angle needs a prime, got " + std::to_string(p));
    const cpp_int whole = boost::multiprecision::sqrt(cpp_int(p));
    const cpp_int scaled = boost::multiprecision::sqrt(cpp_int(p) << 130) - (whole << 65);
    return AngleSpec(Kind::sqrt_prime, p, 0, 1, round_from_double_scale(scaled));
}

AngleSpec AngleSpec::explicit_ratio(std::int64_t num, std::int64_t den) {
    if (den == 0) throw PreconditionError("AngleSpec: zero denominator");
    if (den < 0) {
        num = -num;
        den = -den;
    }
    if (num <= 0 || num >= den) throw PreconditionError("AngleSpec: explicit angle must lie in (0,1)");
    const std::int64_t g = std::gcd(num, den);
    num /= g;
    den /= g;
    return AngleSpec(Kind::explicit_real, 0, num, den,
                     TorusCoord::from_ratio(num, static_cast<std::uint64_t>(den)));
}

AngleSpec AngleSpec::parse(const std::string& raw_text) {
    std::string text;
    for (char ch : raw_text) {
        if (!std::isspace(static_cast<unsigned char>(ch))) text.push_back(ch);
    }
    auto parse_int = [&](std::string_view sv) -> std::int64_t {
        std::int64_t v = 0;
        const auto* end = sv.data() + sv.size();
        auto [ptr, ec] = std::from_chars(sv.data(), end, v);
        if (ec != std::errc() || ptr != end || sv.empty()) {
            throw PreconditionError("AngleSpec: cannot parse integer in '" + raw_text + "'");
        }
        return v;
    };

    if (text == "golden") return golden();
    if (text.rfind("sqrt:", 0) == 0) {
        const std::int64_t p = parse_int(std::string_view(text).substr(5));
        if (p < 2) throw PreconditionError("AngleSpec: sqrt-prime angle needs a prime");
        return sqrt_prime(static_cast<std::uint64_t>(p));
    }
    if (const auto slash = text.find('/'); slash != std::string::npos) {
        const std::string_view sv(text);
        return explicit_ratio(parse_int(sv.substr(0, slash)), parse_int(sv.substr(slash + 1)));
    }
    const auto dot = text.find('.');
    if (dot == std::string::npos) throw PreconditionError("AngleSpec: unrecognized angle '" + raw_text + "'");
    const std::string_view whole = std::string_view(text).substr(0, dot);
    const std::string_view digits = std::string_view(text).substr(dot + 1);
    if (digits.empty() || digits.size() > 18) {
        throw PreconditionError("AngleSpec: decimal angle needs 1..18 fractional digits");
    }
    if (!whole.empty() && whole != "0") throw PreconditionError("AngleSpec: explicit angle must lie in (0,1)");
    std::int64_t den = 1;
    for (std::size_t i = 0; i < digits.size(); ++i) den *= 10;
    return explicit_ratio(parse_int(digits), den);
}

long double AngleSpec::value() const {
    switch (kind_) {
        case Kind::golden:
            return (std::sqrt(5.0L) - 1.0L) / 2.0L;
        case Kind::sqrt_prime: {
            const long double r = std::sqrt(static_cast<long double>(prime_));
            return r - std::floor(r);
        }
        case Kind::explicit_real:
            return static_cast<long double>(num_) / static_cast<long double>(den_);
    }
    return 0.0L;
}

std::string AngleSpec::to_string() const {
    switch (kind_) {
        case Kind::golden:
            return "golden";
        case Kind::sqrt_prime:
            return "sqrt:" + std::to_string(prime_);
        case Kind::explicit_real:
            return std::to_string(num_) + "/" + std::to_string(den_);
    }
    return {};
}

// ---- circle helpers --------------------------------------------------------

namespace {

// Reduce t to (-1/2, 1/2].
double centered_frac(double t) {
    double r = t - std::floor(t);
    if (r >= 1.0) r = 0.0;
    if (r > 0.5) r -= 1.0;
    return r;
}

}  // namespace

double sin_2pi(double t) {
    const double r = centered_frac(t);
    if (r == 0.0 || r == 0.5) return 0.0;
    if (r == 0.25) return 1.0;
    if (r == -0.25) return -1.0;
    return std::sin(2.0 * std::numbers::pi * r);
}

double cos_2pi(double t) {
    const double r = centered_frac(t);
    if (r == 0.0) return 1.0;
    if (r == 0.5) return -1.0;
    if (r == 0.25 || r == -0.25) return 0.0;
    return std::cos(2.0 * std::numbers::pi * r);
}

double circle_distance(double a, double b) {
    double d = std::fabs(a - b);
    d -= std::floor(d);
    return std::min(d, 1.0 - d);
}

// ---- MorseSmaleMap ---------------------------------------------------------

MorseSmaleMap::MorseSmaleMap(int ell, double epsilon, TorusCoord phase)
    : ell_(ell), epsilon_(epsilon), phase_(phase) {
    if (ell < 1) throw PreconditionError("MorseSmaleMap: ell must be positive");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw PreconditionError("MorseSmaleMap: epsilon must lie in (0,1)");
}

double MorseSmaleMap::apply(double z) const {
    const double t = static_cast<double>(ell_) * (z - phase_.to_double());
    double out = z + epsilon_ / (2.0 * std::numbers::pi * ell_) * sin_2pi(t);
    out -= std::floor(out);
    if (out >= 1.0) out = 0.0;
    return out;
}

double MorseSmaleMap::derivative(double z) const {
    const double t = static_cast<double>(ell_) * (z - phase_.to_double());
    return 1.0 + epsilon_ * cos_2pi(t);
}

std::vector<FixedPoint> MorseSmaleMap::fixed_points() const {
    std::vector<FixedPoint> out;
    const auto count = static_cast<std::uint64_t>(2 * ell_);
    out.reserve(count);
    for (std::uint64_t k = 0; k < count; ++k) {
        const TorusCoord u = phase_ + TorusCoord::from_ratio(static_cast<std::int64_t>(k), count);
        const bool sink = (k % 2) == 1;
        out.push_back({u.to_double(), sink ? FixedPointKind::sink : FixedPointKind::source,
                       sink ? 1.0 - epsilon_ : 1.0 + epsilon_});
    }
    std::sort(out.begin(), out.end(),
              [](const FixedPoint& l, const FixedPoint& r) { return l.position < r.position; });
    return out;
}

std::vector<double> MorseSmaleMap::sinks() const {
    std::vector<double> out;
    for (const auto& fp : fixed_points()) {
        if (fp.kind == FixedPointKind::sink) out.push_back(fp.position);
    }
    return out;
}

std::vector<double> MorseSmaleMap::sources() const {
    std::vector<double> out;
    for (const auto& fp : fixed_points()) {
        if (fp.kind == FixedPointKind::source) out.push_back(fp.position);
    }
    return out;
}

// ---- free operations -------------------------------------------------------

std::pair<TorusCoord, TorusCoord> cat_apply(const CatMap& map, TorusCoord x, TorusCoord y) {
    return {x.times(map.a()) + y.times(map.b()), x.times(map.c()) + y.times(map.d())};
}

TorusCoord rotation_apply(const AngleSpec& alpha, TorusCoord w) { return w + alpha.rounded(); }

double ms_apply(const MorseSmaleMap& h, double z) { return h.apply(z); }

std::vector<FixedPoint> ms_fixed_points(const MorseSmaleMap& h) { return h.fixed_points(); }

// ---- ProductSystem ---------------------------------------------------------

ProductSystem::ProductSystem(CatMap cat, std::vector<AngleSpec> rotations,
                             std::optional<MorseSmaleMap> center)
    : cat_(cat), rotations_(std::move(rotations)), center_(center) {
    if (rotations_.empty()) throw PreconditionError("ProductSystem: at least one rotation factor required");
    // Validates the domination margin.
    (void)partial_hyperbolicity_certificate(*this);
}

bool ProductSystem::matches(const SystemPoint& p) const {
    if (p.w.size() != rotations_.size()) return false;
    if (p.z.has_value() != center_.has_value()) return false;
    if (p.z && !(*p.z >= 0.0 && *p.z < 1.0)) return false;
    return true;
}

void ProductSystem::check_point(const SystemPoint& p) const {
    if (p.w.size() != rotations_.size()) {
        throw PreconditionError("SystemPoint: expected " + std::to_string(rotations_.size()) +
                                " rotation coordinates, got " + std::to_string(p.w.size()));
    }
    if (p.z.has_value() != center_.has_value()) {
        throw PreconditionError(center_ ? "SystemPoint: missing center coordinate"
                                        : "SystemPoint: unexpected center coordinate");
    }
    if (p.z && !(*p.z >= 0.0 && *p.z < 1.0)) throw PreconditionError("SystemPoint: z must lie in [0,1)");
}

void ProductSystem::advance(SystemPoint& p) const {
    std::tie(p.x, p.y) = cat_apply(cat_, p.x, p.y);
    for (std::size_t i = 0; i < rotations_.size(); ++i) p.w[i] = p.w[i] + rotations_[i].rounded();
    if (center_) p.z = center_->apply(*p.z);
}

void ProductSystem::retreat_exact_factors(SystemPoint& p) const {
    std::tie(p.x, p.y) = cat_apply(cat_.inverse(), p.x, p.y);
    for (std::size_t i = 0; i < rotations_.size(); ++i) p.w[i] = p.w[i] - rotations_[i].rounded();
}

SystemPoint ProductSystem::step(const SystemPoint& p) const {
    check_point(p);
    SystemPoint out = p;
    advance(out);
    return out;
}

SystemPoint system_step(const ProductSystem& s, const SystemPoint& p) { return s.step(p); }

// ---- orbits ----------------------------------------------------------------

OrbitStream::OrbitStream(const ProductSystem& s, SystemPoint p0, std::size_t stride)
    : system_(&s), current_(std::move(p0)), stride_(stride) {
    if (stride_ == 0) throw PreconditionError("system_orbit: stride must be >= 1");
    s.check_point(current_);
}

void OrbitStream::next() {
    for (std::size_t i = 0; i < stride_; ++i) system_->advance(current_);
    ++index_;
}

std::vector<SystemPoint> system_orbit(const ProductSystem& s, const SystemPoint& p0, std::size_t n,
                                      std::size_t stride) {
    if (n == 0) throw PreconditionError("system_orbit: n must be >= 1");
    OrbitStream stream(s, p0, stride);
    std::vector<SystemPoint> out;
    out.reserve(n);
    out.push_back(stream.current());
    while (out.size() < n) {
        stream.next();
        out.push_back(stream.current());
    }
    return out;
}

// ---- spectra ---------------------------------------------------------------

std::vector<double> analytic_lyapunov_spectrum(const ProductSystem& s, std::optional<int> sink_index) {
    const double lu = std::log(s.cat().unstable_eigenvalue());
    std::vector<double> out{lu, -lu};
    out.insert(out.end(), s.rotation_count(), 0.0);
    if (const auto& h = s.center()) {
        if (!sink_index) throw PreconditionError("analytic_lyapunov_spectrum: sink index required for g");
        if (*sink_index < 0 || *sink_index >= h->ell()) {
            throw PreconditionError("analytic_lyapunov_spectrum: sink index out of range");
        }
        out.push_back(std::log(1.0 - h->epsilon()));
    }
    std::sort(out.begin(), out.end(), std::greater<>());
    return out;
}

PartialHyperbolicityCertificate certify_domination(double lambda_u, double sup_center,
                                                   std::pair<double, double> unstable_direction) {
    const double lambda = sup_center / lambda_u;
    if (!(lambda < 1.0)) {
        throw PreconditionError("partial hyperbolicity fails: center rate " + std::to_string(sup_center) +
                                " is not dominated by unstable rate " + std::to_string(lambda_u));
    }
    return {lambda_u, sup_center, 1.0, lambda, unstable_direction};
}

PartialHyperbolicityCertificate partial_hyperbolicity_certificate(const ProductSystem& s) {
    const double sup_center = s.center() ? std::max(1.0, 1.0 + s.center()->epsilon()) : 1.0;
    return certify_domination(s.cat().unstable_eigenvalue(), sup_center, s.cat().unstable_direction());
}

}  // namespace phlab
