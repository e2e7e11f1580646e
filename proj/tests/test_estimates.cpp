#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "manifold_gap/estimates.hpp"
#include "manifold_gap/harness.hpp"

using namespace manifold_gap;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double kAlpha = 0.5;

ProblemInstance instance(const std::string& kind, double eps, std::size_t n = 32, std::size_t m = 1) {
    FamilyParams fp;
    fp.kind = kind;
    NonlinearityParams np;
    np.family = "zero";
    return make_family(fp, quadratic_spectrum(n), np, kAlpha, m).generator(eps);
}

EigenData spectrum(std::initializer_list<double> ev) { return EigenData::create(Vector(ev)); }

}  // namespace

TEST_CASE("tau_of", "[estimates]") {
    const EigenData e0 = quadratic_spectrum(40);
    CHECK(tau_of(e0, e0, ComparisonPair::identity(40), kAlpha) == 0.0);

    SECTION("diagonal shift matches the per-mode closed form") {
        for (double eps : {1e-1, 1e-2, 1e-3, 1e-4}) {
            Vector ev = e0.eigenvalues();
            for (auto& x : ev) x += eps;
            const EigenData ee = EigenData::create(ev);
            double closed = 0.0;
            for (std::size_t i = 0; i < 40; ++i) {
                const double l = e0[i];
                closed = std::max(closed, std::pow(l + eps, kAlpha) * eps / (l * (l + eps)));
            }
            CHECK_THAT(tau_of(ee, e0, ComparisonPair::identity(40), kAlpha), WithinAbs(closed, 1e-10));
        }
    }
    SECTION("rotation family: tau -> 0 with tau/eps bounded") {
        double prev = std::numeric_limits<double>::infinity(), lo = 1e300, hi = 0.0;
        for (double eps : {1e-1, 1e-2, 1e-3, 1e-4}) {
            const ProblemInstance p = instance("rotation", eps);
            const double tau = tau_of(p.eigs, quadratic_spectrum(32), p.pair, kAlpha);
            CHECK(tau < prev);
            prev = tau;
            lo = std::min(lo, tau / eps);
            hi = std::max(hi, tau / eps);
        }
        CHECK(hi / lo < 1.1);
    }
    SECTION("mode-count mismatch") {
        CHECK_THROWS_AS(tau_of(quadratic_spectrum(4), e0, ComparisonPair::identity(40), kAlpha), std::invalid_argument);
    }
}

TEST_CASE("l_eps_alpha", "[estimates]") {
    CHECK_THAT(l_eps_alpha(1.0, 0.01, 0.5), WithinRel(0.01, 1e-15));
    CHECK_THAT(l_eps_alpha(1e-6, 0.01, 0.5), WithinRel(1000.0, 1e-12));
    const double tau = 0.01, alpha = 0.3;
    const double cross = std::pow(tau, 1.0 / (1.0 - alpha));
    CHECK_THAT(tau / cross, WithinRel(std::pow(cross, -alpha), 1e-12));
    CHECK_THAT(l_eps_alpha(cross, tau, alpha), WithinRel(tau / cross, 1e-12));
    CHECK(l_eps_alpha(cross * 2, tau, alpha) == tau / (cross * 2));
    CHECK(l_eps_alpha(cross / 2, tau, alpha) == std::pow(cross / 2, -alpha));
    CHECK(l_eps_alpha(3.0, 0.0, alpha) == 0.0);
    CHECK_THROWS_AS(l_eps_alpha(0.0, tau, alpha), std::invalid_argument);
}

TEST_CASE("c3_of", "[estimates]") {
    const EigenData e = spectrum({1.0, 4.0, 9.0});
    CHECK(c3_of(0.0, e, e) == 1.0);
    // dist(-2.5, {-1, -4, -9}) = 1.5
    CHECK_THAT(c3_of(-2.5, e, e), WithinRel((1.0 + 2.5 / 1.5) * (1.0 + 2.5 / 1.5), 1e-14));
    const EigenData f = spectrum({2.0, 4.0, 9.0});
    CHECK_THAT(c3_of(-2.5, f, e), WithinRel((1.0 + 2.5 / 0.5) * (1.0 + 2.5 / 1.5), 1e-14));
    CHECK_THROWS_AS(c3_of(-4.0, e, e), PoleError);

    const EigenData q = quadratic_spectrum(64);
    double worst = 0.0;
    for (double r : log_grid(1e-3, 1e5, 400))
        for (double sgn : {-1.0, 1.0}) {
            const Complex z = std::polar(r, sgn * 3.0 * std::numbers::pi / 4.0);
            worst = std::max(worst, c3_of(z, q, instance("eigen_shift", 0.1, 64).eigs));
        }
    CHECK(worst <= 6.0);
    CHECK(worst > 5.0);

    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd(0.0, 10.0);
    for (int k = 0; k < 1000; ++k) CHECK(c3_of(Complex(nd(rng), nd(rng)), q, q) >= 1.0);
}

TEST_CASE("gap_check", "[estimates]") {
    SECTION("quadratic spectrum, L_F = 0.05: brute-force scan") {
        const EigenData e = quadratic_spectrum(64);
        const double L = 0.05, a = 0.5;
        std::optional<std::size_t> first;
        for (std::size_t m = 1; m < 64 && !first; ++m) {
            const double lm = double(m * m), ln = double((m + 1) * (m + 1));
            const bool ok = ln - lm >= 12 * L * (std::sqrt(lm) + std::sqrt(ln)) && std::sqrt(lm) >= 24 * L / (1 - a) &&
                            std::sqrt(lm) >= 12 * L / (1 - a) && ln - lm >= 6 * L * (std::sqrt(lm) + std::sqrt(ln)) &&
                            ln - lm >= 3;
            if (ok) first = m;
        }
        const GapReport rep = gap_check(e, e, L, a);
        REQUIRE(first);
        REQUIRE(rep.chosen);
        CHECK(*rep.chosen == *first);
        CHECK(*rep.chosen == 3);
        CHECK(rep.rows.size() == 63);
        CHECK_THAT(rep.row(1).margin_2_14, WithinAbs(1.0 - 2.4, 1e-14));
        CHECK_THAT(rep.row(1).margin_separation, WithinAbs(0.0, 1e-14));
        const GapReport longer = gap_check(quadratic_spectrum(200), quadratic_spectrum(200), L, a);
        CHECK(longer.chosen == rep.chosen);
        const GapReport shorter = gap_check(quadratic_spectrum(8), quadratic_spectrum(8), L, a);
        CHECK(shorter.chosen == rep.chosen);
    }
    SECTION("unit gaps with L_F = 1: empty") {
        Vector ev(50);
        for (std::size_t i = 0; i < 50; ++i) ev[i] = double(i + 1);
        const EigenData e = EigenData::create(ev);
        const GapReport rep = gap_check(e, e, 1.0, 0.5);
        CHECK(rep.admissible.empty());
        CHECK_FALSE(rep.chosen);
        for (const GapRow& r : rep.rows) CHECK(r.margin_2_13 < 0.0);
    }
    SECTION("L_F = 0: every separated m") {
        const EigenData e = quadratic_spectrum(30);
        const GapReport rep = gap_check(e, e, 0.0, 0.5);
        CHECK(rep.admissible.size() == 29);
        CHECK(rep.chosen == 1u);
        const EigenData lin = linear_gapped_spectrum(10, 2, 10.0);
        const GapReport r2 = gap_check(lin, lin, 0.0, 0.5);
        REQUIRE(r2.admissible.size() == 1);
        CHECK(r2.admissible[0] == 2);
    }
    SECTION("chosen m has nonnegative margins") {
        const EigenData e = quadratic_spectrum(64);
        const ProblemInstance p = instance("eigen_shift", 0.1, 64);
        const GapReport rep = gap_check(e, p.eigs, 0.0177, 0.5);
        REQUIRE(rep.chosen);
        const GapRow& r = rep.row(*rep.chosen);
        CHECK(r.margin_2_13 >= 0.0);
        CHECK(r.margin_2_14 >= 0.0);
        CHECK(r.margin_4_3a >= 0.0);
        CHECK(r.margin_4_3b >= 0.0);
    }
    CHECK_THROWS_AS(gap_check(quadratic_spectrum(4), quadratic_spectrum(4), -1.0, 0.5), std::invalid_argument);
}

TEST_CASE("resolvent identity", "[estimates]") {
    const EigenData e0 = quadratic_spectrum(24);
    SECTION("lambda = 0 reduces to the inverse difference") {
        const ProblemInstance p = instance("rotation", 1e-2, 24);
        const double tau = tau_of(p.eigs, e0, p.pair, kAlpha);
        const std::vector<Complex> zero{Complex(0.0)};
        const LemmaCheckReport rep = verify_resolvent_identity(p.eigs, e0, p.pair, kAlpha, tau, zero);
        CHECK(rep.passed());
        CHECK(rep.max_identity_error < 1e-15);
        CHECK_THAT(rep.worst_ratio, WithinRel(1.0, 1e-12));
    }
    SECTION("random lambda, rotation and combined families") {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> re(-30.0, 10.0), im(-5.0, 5.0);
        std::vector<Complex> pts;
        for (int k = 0; k < 200; ++k) pts.emplace_back(re(rng), im(rng));
        for (const char* kind : {"rotation", "combined", "eigen_shift"}) {
            const ProblemInstance p = instance(kind, 1e-2, 24);
            const double tau = tau_of(p.eigs, e0, p.pair, kAlpha);
            const LemmaCheckReport rep = verify_resolvent_identity(p.eigs, e0, p.pair, kAlpha, tau, pts);
            CHECK(rep.violations == 0);
            CHECK(rep.max_identity_error <= 1e-10);
            CHECK(rep.worst_ratio <= 1.0);
        }
    }
    const std::vector<Complex> pole{Complex(-4.0)};
    CHECK_THROWS_AS(verify_resolvent_identity(e0, e0, ComparisonPair::identity(24), kAlpha, 0.0, pole), PoleError);
}

TEST_CASE("projection distance", "[estimates]") {
    const EigenData e0 = quadratic_spectrum(24);
    for (std::size_t m : {1u, 2u}) {
        const ProblemInstance shift = instance("eigen_shift", 1e-2, 24, m);
        const double tau_s = tau_of(shift.eigs, e0, shift.pair, kAlpha);
        const ContourConstants cs = contour_constants(shift.eigs, e0, m);
        const LemmaCheckReport rs = verify_projection_distance(shift.eigs, e0, shift.pair, m, kAlpha, tau_s, cs);
        CHECK(rs.passed());
        CHECK(rs.worst_ratio == 0.0);

        for (double eps : {1e-1, 1e-2, 1e-3}) {
            const ProblemInstance rot = instance("rotation", eps, 24, m);
            const double tau = tau_of(rot.eigs, e0, rot.pair, kAlpha);
            const ContourConstants c = contour_constants(rot.eigs, e0, m);
            CHECK(c.C_P > 0.0);
            CHECK(c.C_5 >= 4.0);
            const LemmaCheckReport r = verify_projection_distance(rot.eigs, e0, rot.pair, m, kAlpha, tau, c);
            CHECK(r.passed());
            CHECK(r.worst_ratio > 0.0);
        }
    }
}

TEST_CASE("semigroup distances", "[estimates]") {
    const EigenData e0 = quadratic_spectrum(24);
    const std::vector<double> pos = log_grid(1e-3, 10.0, 40), neg = linear_grid(-3.0, 0.0, 13);
    const std::vector<double> late{10.0};
    for (const char* kind : {"eigen_shift", "rotation", "combined"})
        for (double eps : {1e-1, 1e-2, 1e-3}) {
            INFO(kind << " eps = " << eps);
            const ProblemInstance p = instance(kind, eps, 24);
            const double tau = tau_of(p.eigs, e0, p.pair, kAlpha);
            const ContourConstants c = contour_constants(p.eigs, e0, 1);
            const LemmaCheckReport full = verify_semigroup_distance(p.eigs, e0, p.pair, kAlpha, tau, pos,
                                                                    SemigroupPart::full, 1, c);
            CHECK(full.passed());
            CHECK(full.samples == pos.size());
            CHECK(verify_semigroup_distance(p.eigs, e0, p.pair, kAlpha, tau, late, SemigroupPart::full, 1, c).passed());
            CHECK(verify_semigroup_distance(p.eigs, e0, p.pair, kAlpha, tau, neg, SemigroupPart::P, 1, c).passed());
            CHECK(verify_semigroup_distance(p.eigs, e0, p.pair, kAlpha, tau, pos, SemigroupPart::Q, 1, c).passed());
        }
    const ComparisonPair id = ComparisonPair::identity(24);
    const ContourConstants c = contour_constants(e0, e0, 1);
    CHECK_THROWS_AS(verify_semigroup_distance(e0, e0, id, kAlpha, 0.0, pos, SemigroupPart::P, 1, c),
                    std::invalid_argument);
    CHECK_THROWS_AS(verify_semigroup_distance(e0, e0, id, kAlpha, 0.0, neg, SemigroupPart::Q, 1, c),
                    std::invalid_argument);
}

TEST_CASE("semigroup bounds and eigenvalue convergence", "[estimates]") {
    const EigenData e0 = quadratic_spectrum(64);
    const std::vector<double> grid = log_grid(1e-3, 10.0, 100);
    const LemmaCheckReport r = verify_semigroup_bounds(e0, kAlpha, grid);
    CHECK(r.passed());
    CHECK(r.worst_ratio <= 1.0);

    std::vector<std::pair<double, EigenData>> runs;
    for (double eps : {1e-3, 1e-1, 1e-2}) runs.emplace_back(eps, instance("eigen_shift", eps, 64).eigs);
    CHECK(verify_eigenvalue_convergence(e0, runs, 1).passed());
    std::vector<std::pair<double, EigenData>> bad{{1e-1, e0}, {1e-2, instance("eigen_shift", 0.1, 64).eigs}};
    CHECK_FALSE(verify_eigenvalue_convergence(e0, bad, 1).passed());
}

TEST_CASE("integral bounds", "[estimates]") {
    SECTION("semigroup integral with lambda = 1, alpha = 0.5, a = 1") {
        const auto reps = verify_integral_bounds(0.01, 0.5, 0.0, 1.0, 1.0);
        REQUIRE(reps.size() == 2);
        CHECK(reps[1].lemma == "5.2");
        CHECK(reps[1].passed());
        // oracle: int_0^0.5 e^{-s} (0.5/s)^0.5 ds + int_0.5^inf e^{-s} ds
        const double head = std::sqrt(0.5) * std::sqrt(std::numbers::pi) * std::erf(std::sqrt(0.5));
        const double value = head + std::exp(-0.5);
        CHECK_THAT(reps[1].worst_ratio, WithinRel(value / 3.0, 1e-8));
    }
    SECTION("all three estimates as tau -> 0") {
        for (double tau : {1e-2, 1e-4, 1e-6}) {
            const auto reps = verify_integral_bounds(tau, 0.5, 0.5, 1.0);
            CHECK(reps[0].passed());
            CHECK(reps[0].worst_ratio <= 1.0);
            CHECK(reps[0].samples == 2 * 9 + 1);
        }
    }
    SECTION("t = 1 case at gamma = 0.5, tau = 1e-3 against a direct oracle") {
        const double tau = 1e-3, alpha = 0.5, gamma = 0.5;
        const std::vector<double> one{1.0};
        const auto reps = verify_integral_bounds(tau, alpha, gamma, 1.0, 1.0, one);
        CHECK(reps[0].passed());
        // oracle: Gauss-Legendre after s = 1 - u^2 removes the endpoint singularity, split at the kink
        const double kink = tau * tau;
        auto l = [&](double s) { return std::min(tau / s, std::pow(s, -alpha)); };
        const auto gl = gauss_legendre(200);
        double q = 0.0;
        // [0, kink]: s^{-1/2} branch, substitute s = kink v^2
        for (std::size_t i = 0; i < 200; ++i) {
            const double v = 0.5 * (gl.nodes[i] + 1.0), s = kink * v * v;
            q += 0.5 * gl.weights[i] * std::pow(1 - s, -gamma) * std::pow(s, -alpha) * 2 * kink * v;
        }
        // [kink, 1]: log spacing for tau/s, s = 1 - u^2 near 1
        for (std::size_t i = 0; i < 200; ++i) {
            const double x = 0.5 * (gl.nodes[i] + 1.0), s = kink * std::pow(0.5 / kink, x);
            q += 0.5 * gl.weights[i] * std::pow(1 - s, -gamma) * l(s) * s * std::log(0.5 / kink);
        }
        for (std::size_t i = 0; i < 200; ++i) {
            const double u = 0.5 * (gl.nodes[i] + 1.0) * std::sqrt(0.5), s = 1 - u * u;
            q += 0.5 * std::sqrt(0.5) * gl.weights[i] * l(s) * 2 * std::pow(u, 1 - 2 * gamma);
        }
        const double bound = std::pow(2.0, gamma) / ((1 - gamma) * (1 - alpha)) * std::abs(std::log(tau)) * tau;
        CHECK(q <= bound);
        CHECK(reps[0].worst_ratio >= q / bound * (1 - 1e-6));
    }
    CHECK_THROWS_AS(verify_integral_bounds(0.0, 0.5, 0.5, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(verify_integral_bounds(0.1, 0.5, 1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(verify_integral_bounds(0.1, 0.5, 0.5, 0.0), std::invalid_argument);
}

TEST_CASE("coordinate comparison", "[estimates]") {
    const EigenData e0 = quadratic_spectrum(24);
    for (std::size_t m : {1u, 2u}) {
        SECTION("rotation, 1e3 samples, m = " + std::to_string(m)) {
            const ProblemInstance p = instance("rotation", 1e-2, 24, m);
            const double tau = tau_of(p.eigs, e0, p.pair, kAlpha);
            const ContourConstants c = contour_constants(p.eigs, e0, m);
            const LemmaCheckReport r = verify_coordinate_comparison(p.eigs, e0, p.pair, m, kAlpha, tau, c, 1000, 9);
            CHECK(r.passed());
            CHECK(r.samples == 1000);
        }
    }
    SECTION("w_eps = E w_0 on the shift family gives zero") {
        const ProblemInstance p = instance("eigen_shift", 1e-2, 24);
        const double tau = tau_of(p.eigs, e0, p.pair, kAlpha);
        const ContourConstants c = contour_constants(p.eigs, e0, 1);
        const SpectralSplit split(p.eigs, 1);
        const CoordinateMap coords(split, p.pair);
        StateVector w0(24);
        w0[0] = 1.7;
        const StateVector Ew0 = comparison_apply(p.pair, Direction::E, w0);
        CHECK_THAT(coords.coord_map(Ew0)[0], WithinAbs(1.7, 1e-14));
        CHECK(verify_coordinate_comparison(p.eigs, e0, p.pair, 1, kAlpha, tau, c, 300, 4).passed());
    }
    SECTION("doubling w_0 doubles both sides") {
        const ProblemInstance p = instance("rotation", 1e-2, 24, 2);
        const ContourConstants c = contour_constants(p.eigs, e0, 2);
        const double tau = tau_of(p.eigs, e0, p.pair, kAlpha);
        const CoordinateMap coords(SpectralSplit(p.eigs, 2), p.pair);
        StateVector w0(24), we(24);
        w0[0] = 0.3;
        w0[1] = -1.1;
        we[0] = 0.5;
        we[1] = -0.9;
        auto sides = [&](double k) {
            const StateVector a = w0 * k, b = we * k;
            const Vector pe = coords.coord_map(b);
            const Vector w0a = e0.powers(kAlpha);
            double lhs = 0.0;
            for (std::size_t i = 0; i < 2; ++i) lhs += std::pow((pe[i] - a[i]) * w0a[i], 2);
            return std::pair{std::sqrt(lhs), 3 * frac_norm(b - comparison_apply(p.pair, Direction::E, a), kAlpha, p.eigs) +
                                                 3 * c.C_P * tau * euclidean_norm(a.span())};
        };
        const auto [l1, r1] = sides(1.0);
        const auto [l2, r2] = sides(2.0);
        CHECK_THAT(l2, WithinRel(2 * l1, 1e-12));
        CHECK_THAT(r2, WithinRel(2 * r1, 1e-12));
        CHECK(l1 <= r1);
    }
}

TEST_CASE("LemmaCheckReport bookkeeping", "[estimates]") {
    LemmaCheckReport r{"x", "g"};
    detail::record(r, 0.5, 1.0);
    detail::record(r, 0.0, 0.0);
    CHECK(r.passed());
    CHECK(r.worst_ratio == 0.5);
    detail::record(r, 2.0, 1.0);
    CHECK(r.violations == 1);
    CHECK_FALSE(r.passed());
    LemmaCheckReport z{"z", "g"};
    detail::record(z, 1.0, 0.0);
    CHECK_FALSE(z.passed());
    CHECK(std::isinf(z.worst_ratio));
}
