// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <boost/multiprecision/cpp_dec_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include "phlab/dynamics.hpp"

using namespace phlab;
using boost::multiprecision::cpp_dec_float_50;
using boost::multiprecision::cpp_int;

namespace {

const cpp_dec_float_50 kTwo64 = boost::multiprecision::pow(cpp_dec_float_50(2), 64);

// 50-digit oracle for frac(v)
cpp_dec_float_50 frac50(const cpp_dec_float_50& v) { return v - boost::multiprecision::floor(v); }

cpp_dec_float_50 golden50() { return (boost::multiprecision::sqrt(cpp_dec_float_50(5)) - 1) / 2; }

ProductSystem default_f() { return ProductSystem(CatMap{}, {AngleSpec::golden()}); }

ProductSystem default_g(int ell = 1, double eps = 0.5) {
    return ProductSystem(CatMap{}, {AngleSpec::golden()}, MorseSmaleMap(ell, eps));
}

}  // namespace

TEST_CASE("TorusCoord arithmetic is exact modulo one") {
    const TorusCoord half = TorusCoord::from_ratio(1, 2);
    CHECK(half.raw() == (std::uint64_t{1} << 63));
    CHECK((half + half).raw() == 0);
    CHECK(TorusCoord::from_ratio(-1, 4) == TorusCoord::from_ratio(3, 4));
    CHECK(TorusCoord::from_double(1.25) == TorusCoord::from_ratio(1, 4));
    CHECK(TorusCoord(~std::uint64_t{0}).to_double() < 1.0);
    CHECK(TorusCoord::from_ratio(3, 8).to_double() == 0.375);
}

TEST_CASE("CatMap validates SL(2,Z) hyperbolicity") {
    CHECK_THROWS_AS(CatMap(1, 0, 0, 1), PreconditionError);
    CHECK_THROWS_AS(CatMap(2, 1, 1, 2), PreconditionError);  // det 3
    CHECK_THROWS_AS(CatMap(1, 1, 0, 1), PreconditionError);  // parabolic
    CHECK_NOTHROW(CatMap(1, 1, 1, 2));
    CHECK_NOTHROW(CatMap(-2, 1, 1, -1));
    const CatMap def;
    CHECK(def.a() == 2);
    CHECK(def.b() == 1);
    CHECK(def.c() == 1);
    CHECK(def.d() == 1);
}

TEST_CASE("cat_apply examples") {
    const CatMap cat;
    SUBCASE("origin is fixed") {
        const auto [x, y] = cat_apply(cat, TorusCoord{}, TorusCoord{});
        CHECK(x.raw() == 0);
        CHECK(y.raw() == 0);
    }
    SUBCASE("(1/2,1/2) -> (1/2,0)") {
        const TorusCoord h = TorusCoord::from_ratio(1, 2);
        const auto [x, y] = cat_apply(cat, h, h);
        CHECK(x == h);
        CHECK(y.raw() == 0);
    }
    SUBCASE("dyadic point returns exactly after the (Z/8Z)^2 period") {
        // Oracle: enumerate the orbit of (1,0) in (Z/8Z)^2.
        int period = 0;
        int u = 1, v = 0;
        do {
            const int nu = (2 * u + v) % 8, nv = (u + v) % 8;
            u = nu;
            v = nv;
            ++period;
        } while (!(u == 1 && v == 0));
        CHECK(period == 6);
        TorusCoord x = TorusCoord::from_ratio(1, 8), y{};
        for (int i = 0; i < period; ++i) std::tie(x, y) = cat_apply(cat, x, y);
        CHECK(x == TorusCoord::from_ratio(1, 8));
        CHECK(y.raw() == 0);
    }
    SUBCASE("(1/5,0) returns after its (Z/5Z)^2 period up to rounding of 1/5") {
        int period = 0;
        int u = 1, v = 0;
        do {
            const int nu = (2 * u + v) % 5, nv = (u + v) % 5;
            u = nu;
            v = nv;
            ++period;
        } while (!(u == 1 && v == 0));
        CHECK(period == 10);
        TorusCoord x = TorusCoord::from_ratio(1, 5), y{};
        for (int i = 0; i < period; ++i) std::tie(x, y) = cat_apply(cat, x, y);
        CHECK(circle_distance(x.to_double(), 0.2) < 1e-12);
        CHECK(circle_distance(y.to_double(), 0.0) < 1e-12);
    }
}

TEST_CASE("AngleSpec rounding matches a 50-digit oracle") {
    const auto check_rounding = [](const AngleSpec& a, const cpp_dec_float_50& exact) {
        const cpp_dec_float_50 scaled = exact * kTwo64;
        const cpp_dec_float_50 err = boost::multiprecision::abs(cpp_dec_float_50(a.rounded().raw()) - scaled);
        CHECK(err <= 0.5);
    };
    check_rounding(AngleSpec::golden(), golden50());
    for (std::uint64_t p : {2u, 3u, 5u, 7u, 101u}) {
        check_rounding(AngleSpec::sqrt_prime(p), frac50(boost::multiprecision::sqrt(cpp_dec_float_50(p))));
    }
    CHECK_THROWS_AS(AngleSpec::sqrt_prime(4), PreconditionError);
    CHECK(AngleSpec::parse("0.25") == AngleSpec::explicit_ratio(1, 4));
    CHECK(AngleSpec::parse("2/6") == AngleSpec::explicit_ratio(1, 3));
    CHECK(AngleSpec::parse("sqrt:2").kind() == AngleSpec::Kind::sqrt_prime);
    CHECK(AngleSpec::parse(" golden ").kind() == AngleSpec::Kind::golden);
    CHECK_THROWS_AS(AngleSpec::parse("1.5"), PreconditionError);
    CHECK_THROWS_AS(AngleSpec::parse("0/3"), PreconditionError);
    CHECK_THROWS_AS(AngleSpec::parse("pi"), PreconditionError);
}

TEST_CASE("rotation_apply examples") {
    CHECK(rotation_apply(AngleSpec::explicit_ratio(1, 4), TorusCoord::from_ratio(1, 2)) == TorusCoord::from_ratio(3, 4));

    const AngleSpec g = AngleSpec::golden();
    TorusCoord w{};
    for (int i = 0; i < 10; ++i) w = rotation_apply(g, w);
    // Iteration is exact: N steps equal N times the rounded angle.
    CHECK(w == g.rounded().times(10));
    // Within 10 * 2^-64 of frac(10 (sqrt5-1)/2), by a 50-digit oracle.
    const cpp_dec_float_50 exact = frac50(10 * golden50());
    const cpp_dec_float_50 got = cpp_dec_float_50(w.raw()) / kTwo64;
    CHECK(boost::multiprecision::abs(got - exact) <= 10 / kTwo64);
    CHECK(w.to_double() == doctest::Approx(0.180339887).epsilon(1e-9));
}

TEST_CASE("ms_apply examples") {
    const MorseSmaleMap h1(1, 0.5);
    CHECK(ms_apply(h1, 0.0) == 0.0);
    // Oracle: direct long double formula evaluation.
    const long double expected = 0.25L + 0.5L / (2.0L * std::numbers::pi_v<long double>);
    CHECK(std::fabs(ms_apply(h1, 0.25) - static_cast<double>(expected)) < 1e-15);
    CHECK(ms_apply(h1, 0.25) == doctest::Approx(0.329577).epsilon(1e-6));

    const MorseSmaleMap h2(2, 0.3);
    CHECK(ms_apply(h2, 0.25) == 0.25);
    CHECK(h2.derivative(0.25) == doctest::Approx(0.7).epsilon(1e-15));
    CHECK_THROWS_AS(MorseSmaleMap(0, 0.5), PreconditionError);
    CHECK_THROWS_AS(MorseSmaleMap(1, 1.0), PreconditionError);
    CHECK_THROWS_AS(MorseSmaleMap(1, 0.0), PreconditionError);
}

TEST_CASE("ms_fixed_points examples") {
    SUBCASE("ell = 1") {
        const auto fps = ms_fixed_points(MorseSmaleMap(1, 0.5));
        REQUIRE(fps.size() == 2);
        CHECK(fps[0].position == 0.0);
        CHECK(fps[0].kind == FixedPointKind::source);
        CHECK(fps[0].derivative == 1.5);
        CHECK(fps[1].position == 0.5);
        CHECK(fps[1].kind == FixedPointKind::sink);
        CHECK(fps[1].derivative == 0.5);
    }
    SUBCASE("ell = 2") {
        const MorseSmaleMap h(2, 0.3);
        CHECK(h.sinks() == std::vector<double>{0.25, 0.75});
        CHECK(h.sources() == std::vector<double>{0.0, 0.5});
    }
    SUBCASE("ell = 3 with phase 1/12") {
        const MorseSmaleMap h(3, 0.5, TorusCoord::from_ratio(1, 12));
        const auto fps = h.fixed_points();
        REQUIRE(fps.size() == 6);
        for (std::size_t k = 0; k < fps.size(); ++k) {
            CHECK(fps[k].position == doctest::Approx(1.0 / 12.0 + static_cast<double>(k) / 6.0).epsilon(1e-15));
            CHECK(fps[k].kind == (k % 2 == 0 ? FixedPointKind::source : FixedPointKind::sink));
            CHECK(std::fabs(h.apply(fps[k].position) - fps[k].position) < 1e-12);
            CHECK(h.derivative(fps[k].position) == doctest::Approx(fps[k].derivative).epsilon(1e-12));
        }
    }
    SUBCASE("phase wrap keeps positions sorted and alternating") {
        const MorseSmaleMap h(2, 0.4, TorusCoord::from_ratio(7, 8));
        const auto fps = h.fixed_points();
        for (std::size_t k = 1; k < fps.size(); ++k) {
            CHECK(fps[k - 1].position < fps[k].position);
            CHECK(fps[k - 1].kind != fps[k].kind);
        }
    }
}

TEST_CASE("system_step examples") {
    SUBCASE("f from the origin with alpha = 1/4") {
        const ProductSystem f(CatMap{}, {AngleSpec::explicit_ratio(1, 4)});
        const SystemPoint p = system_step(f, SystemPoint{TorusCoord{}, TorusCoord{}, {TorusCoord{}}, std::nullopt});
        CHECK(p.x.raw() == 0);
        CHECK(p.y.raw() == 0);
        CHECK(p.w[0] == TorusCoord::from_ratio(1, 4));
    }
    SUBCASE("sink slice is invariant") {
        const ProductSystem g(CatMap{}, {AngleSpec::golden()}, MorseSmaleMap(2, 0.3));
        SystemPoint p{TorusCoord::from_double(0.3), TorusCoord::from_double(0.7), {TorusCoord{}}, 0.75};
        for (int i = 0; i < 100; ++i) p = system_step(g, p);
        CHECK(*p.z == 0.75);
    }
    SUBCASE("three steps agree with an independent scalar oracle") {
        const ProductSystem g = default_g();
        SystemPoint p{TorusCoord::from_ratio(1, 2), TorusCoord::from_ratio(1, 2), {TorusCoord{}}, 0.25};
        for (int i = 0; i < 3; ++i) p = system_step(g, p);

        // Oracle: torus by integer matrix on numerators over 2, rotation via
        // 50-digit golden rounding, center by long double formula.
        int u = 1, v = 1;
        for (int i = 0; i < 3; ++i) {
            const int nu = (2 * u + v) % 2, nv = (u + v) % 2;
            u = nu;
            v = nv;
        }
        CHECK(p.x == TorusCoord::from_ratio(u, 2));
        CHECK(p.y == TorusCoord::from_ratio(v, 2));
        const cpp_dec_float_50 raw_alpha = boost::multiprecision::round(golden50() * kTwo64);
        const cpp_int three_alpha = (cpp_int(raw_alpha.convert_to<std::uint64_t>()) * 3) % (cpp_int(1) << 64);
        CHECK(p.w[0].raw() == three_alpha.convert_to<std::uint64_t>());
        long double z = 0.25L;
        for (int i = 0; i < 3; ++i) {
            z = z + 0.5L / (2.0L * std::numbers::pi_v<long double>) * std::sin(2.0L * std::numbers::pi_v<long double> * z);
            z -= std::floor(z);
        }
        CHECK(std::fabs(*p.z - static_cast<double>(z)) < 1e-15);
    }
    SUBCASE("dimension mismatch") {
        const ProductSystem g = default_g();
        CHECK_THROWS_AS(system_step(g, SystemPoint{TorusCoord{}, TorusCoord{}, {TorusCoord{}}, std::nullopt}),
                        PreconditionError);
        CHECK_THROWS_AS(system_step(g, SystemPoint{TorusCoord{}, TorusCoord{}, {}, 0.1}), PreconditionError);
        CHECK_THROWS_AS(system_step(default_f(), SystemPoint{TorusCoord{}, TorusCoord{}, {TorusCoord{}}, 0.1}),
                        PreconditionError);
    }
}

TEST_CASE("system_orbit examples") {
    const ProductSystem g = default_g(3);
    const SystemPoint p0{TorusCoord(0x123456789abcdefULL), TorusCoord(42), {TorusCoord(7)}, 0.1};
    CHECK(system_orbit(g, p0, 1) == std::vector<SystemPoint>{p0});

    const auto fine = system_orbit(g, p0, 5, 1);
    const auto coarse = system_orbit(g, p0, 3, 2);
    CHECK(coarse[0] == fine[0]);
    CHECK(coarse[1] == fine[2]);
    CHECK(coarse[2] == fine[4]);

    CHECK(system_orbit(g, p0, 50) == system_orbit(g, p0, 50));
    CHECK_THROWS_AS(system_orbit(g, p0, 0), PreconditionError);
    CHECK_THROWS_AS(system_orbit(g, p0, 3, 0), PreconditionError);

    OrbitStream stream(g, p0, 2);
    stream.next();
    CHECK(stream.index() == 1);
    CHECK(stream.current() == fine[2]);
}

TEST_CASE("analytic_lyapunov_spectrum examples") {
    const double lu = 0.96242365011920689;  // log((3+sqrt5)/2), 50-digit evaluation
    const auto spec_f = analytic_lyapunov_spectrum(default_f());
    REQUIRE(spec_f.size() == 3);
    CHECK(spec_f[0] == doctest::Approx(lu).epsilon(1e-15));
    CHECK(spec_f[1] == 0.0);
    CHECK(spec_f[2] == doctest::Approx(-lu).epsilon(1e-15));

    const auto spec_g = analytic_lyapunov_spectrum(default_g(), 0);
    REQUIRE(spec_g.size() == 4);
    CHECK(spec_g[2] == doctest::Approx(std::log(0.5)).epsilon(1e-15));
    CHECK(spec_g[2] == doctest::Approx(-0.6931472).epsilon(1e-7));
    CHECK_THROWS_AS(analytic_lyapunov_spectrum(default_g(), 1), PreconditionError);
    CHECK_THROWS_AS(analytic_lyapunov_spectrum(default_g()), PreconditionError);
}

TEST_CASE("partial_hyperbolicity_certificate examples") {
    const auto cert_g = partial_hyperbolicity_certificate(default_g());
    CHECK(cert_g.C == 1.0);
    CHECK(cert_g.lambda == doctest::Approx(0.57294901687515773).epsilon(1e-14));
    const auto cert_f = partial_hyperbolicity_certificate(default_f());
    CHECK(cert_f.lambda == doctest::Approx(0.38196601125010515).epsilon(1e-14));

    const ProductSystem conj(CatMap(1, 1, 1, 2), {AngleSpec::golden()}, MorseSmaleMap(1, 0.5));
    CHECK(partial_hyperbolicity_certificate(conj).lambda == cert_g.lambda);

    // E^u is an eigenvector of the matrix.
    const auto [vx, vy] = cert_f.unstable_direction;
    CHECK(2 * vx + vy == doctest::Approx(cert_f.lambda_u * vx));
    CHECK(vx + vy == doctest::Approx(cert_f.lambda_u * vy));

    CHECK_THROWS_AS(certify_domination(1.2, 1.5, {1.0, 0.0}), PreconditionError);
}

// ---- properties -------------------------------------------------------------

TEST_CASE("property: torus and rotation factors are exactly reversible") {
    std::mt19937_64 gen(11);
    const ProductSystem s(CatMap(3, 2, 1, 1), {AngleSpec::golden(), AngleSpec::sqrt_prime(3)});
    for (int trial = 0; trial < 50; ++trial) {
        const SystemPoint p0{TorusCoord(gen()), TorusCoord(gen()), {TorusCoord(gen()), TorusCoord(gen())}, std::nullopt};
        SystemPoint p = p0;
        const int steps = 1 + static_cast<int>(gen() % 500);
        for (int i = 0; i < steps; ++i) s.advance(p);
        for (int i = 0; i < steps; ++i) s.retreat_exact_factors(p);
        CHECK(p == p0);
    }
}

TEST_CASE("property: h is an increasing circle diffeomorphism") {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const int ell = 1 + static_cast<int>(gen() % 6);
        const double eps = 0.01 + 0.98 * unit(gen);
        const MorseSmaleMap h(ell, eps, TorusCoord(gen()));
        const double z1 = unit(gen), z2 = unit(gen);
        const double lo = std::min(z1, z2), hi = std::max(z1, z2);
        if (lo == hi) continue;
        // Lift: z + eps/(2 pi l) sin(...) without reduction.
        const auto lift = [&](double z) { return z + (h.apply(z) - z - std::floor(h.apply(z) - z + 0.5)); };
        CHECK(lift(lo) < lift(hi));
        CHECK(h.derivative(lo) > 0.0);
    }
}

TEST_CASE("property: sink slices are invariant and spectra multiply to the Jacobian") {
    for (int ell : {1, 2, 3, 5}) {
        const ProductSystem g(CatMap{}, {AngleSpec::golden()}, MorseSmaleMap(ell, 0.5));
        for (double u : g.center()->sinks()) {
            SystemPoint p{TorusCoord(99), TorusCoord(7), {TorusCoord(3)}, u};
            for (int i = 0; i < 20; ++i) g.advance(p);
            CHECK(std::fabs(*p.z - u) < 1e-15);
        }
        double sum = 0;
        for (double e : analytic_lyapunov_spectrum(g, 0)) sum += e;
        CHECK(std::exp(sum) == doctest::Approx(0.5).epsilon(1e-14));
    }
    double sum_f = 0;
    for (double e : analytic_lyapunov_spectrum(default_f())) sum_f += e;
    CHECK(std::fabs(sum_f) < 1e-15);
}

TEST_CASE("property: f preserves Lebesgue measure (8x8x8 chi-square)") {
    const ProductSystem f = default_f();
    constexpr int kBins = 8;
    constexpr int kSamples = 100000;
    std::mt19937_64 gen(2024);
    std::vector<int> counts(kBins * kBins * kBins, 0);
    const auto bin = [](TorusCoord c) { return static_cast<int>(c.raw() >> 61); };
    for (int i = 0; i < kSamples; ++i) {
        SystemPoint p{TorusCoord(gen()), TorusCoord(gen()), {TorusCoord(gen())}, std::nullopt};
        f.advance(p);
        ++counts[(bin(p.x) * kBins + bin(p.y)) * kBins + bin(p.w[0])];
    }
    const double expected = static_cast<double>(kSamples) / counts.size();
    double chi2 = 0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    const double dof = counts.size() - 1.0;
    CHECK(chi2 < dof + 3.0 * std::sqrt(2.0 * dof));
}
