#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "manifold_gap/harness.hpp"
#include "manifold_gap/io.hpp"
#include "manifold_gap/spectral_core.hpp"

using namespace manifold_gap;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

StateVector random_state(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    StateVector v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = nd(rng);
    return v;
}

EigenData spectrum(std::initializer_list<double> ev) { return EigenData::create(Vector(ev)); }

}  // namespace

TEST_CASE("EigenData validates its invariants", "[spectral]") {
    CHECK_NOTHROW(spectrum({1.0, 1.0, 2.0}));
    CHECK_THROWS_AS(spectrum({1.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(spectrum({2.0, 1.5}), std::invalid_argument);
    CHECK_THROWS_AS(spectrum({0.5, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(EigenData::create(Vector{1.0, std::nan("")}), std::invalid_argument);
    Matrix skew = Matrix::identity(2);
    skew(0, 1) = 1e-6;
    CHECK_THROWS_AS(EigenData::create(Vector{1.0, 2.0}, skew), std::invalid_argument);
    CHECK_NOTHROW(EigenData::create(Vector{1.0, 4.0, 9.0}, givens_product(3, {{1, 3}}, 0.3)));
    CHECK_THROWS_AS(SpaceContext::create(1.0, 4, 1), std::invalid_argument);
    CHECK_THROWS_AS(SpaceContext::create(0.5, 4, 4), std::invalid_argument);
    CHECK_THROWS_AS(SpectralSplit(spectrum({1.0, 1.0, 2.0}), 1), std::invalid_argument);
}

TEST_CASE("frac_norm", "[spectral]") {
    const EigenData e = spectrum({4.0});
    CHECK(frac_norm(StateVector::unit(1, 0), 0.5, e) == 2.0);
    CHECK_THAT(frac_norm(StateVector{1.0, 1.0}, 1.0, spectrum({1.0, 4.0})), WithinRel(std::sqrt(17.0), 1e-15));

    std::mt19937_64 rng(3);
    const EigenData q = quadratic_spectrum(16);
    for (int k = 0; k < 50; ++k) {
        const StateVector a = random_state(16, rng), b = random_state(16, rng);
        CHECK_THAT(frac_norm(a, 0.0, q), WithinRel(euclidean_norm(a.span()), 1e-14));
        CHECK_THAT(frac_norm(-2.5 * a, 0.5, q), WithinRel(2.5 * frac_norm(a, 0.5, q), 1e-12));
        CHECK(frac_norm(a + b, 0.5, q) <= frac_norm(a, 0.5, q) + frac_norm(b, 0.5, q) + 1e-12);
    }
}

TEST_CASE("semigroup_apply", "[spectral]") {
    const EigenData e = quadratic_spectrum(8);
    const SpectralSplit split(e, 3);
    std::mt19937_64 rng(5);
    const StateVector v = random_state(8, rng);

    CHECK(semigroup_apply(e, 0.0, v, Part::full, split) == v);
    const StateVector e1 = semigroup_apply(e, 1.0, StateVector::unit(8, 0), Part::full, split);
    CHECK_THAT(e1[0], WithinRel(std::exp(-1.0), 1e-15));

    SECTION("semigroup property") {
        for (auto [t, s] : {std::pair{0.1, 0.3}, std::pair{1.0, 0.01}, std::pair{0.0, 2.0}}) {
            const StateVector lhs = semigroup_apply(e, t + s, v, Part::full, split);
            const StateVector rhs = semigroup_apply(e, t, semigroup_apply(e, s, v, Part::full, split), Part::full, split);
            for (std::size_t i = 0; i < 8; ++i) CHECK_THAT(lhs[i], WithinAbs(rhs[i], 1e-12));
        }
    }
    SECTION("Lemma-style bounds over sampled unit vectors") {
        for (int k = 0; k < 100; ++k) {
            StateVector u = random_state(8, rng);
            u *= 1.0 / euclidean_norm(u.span());
            for (double t : {1e-3, 1e-2, 0.1, 0.5, 1.0, 10.0}) {
                const StateVector r = semigroup_apply(e, t, u, Part::full, split);
                CHECK(euclidean_norm(r.span()) <= std::exp(-t) * (1.0 + 1e-12));
                CHECK(frac_norm(r, 0.5, e) <= std::exp(-t) * std::pow(std::max(1.0, 0.5 / t), 0.5) * (1.0 + 1e-12));
            }
        }
        StateVector u = random_state(8, rng);
        u *= 1.0 / euclidean_norm(u.span());
        CHECK(frac_norm(semigroup_apply(e, 0.5, u, Part::full, split), 0.5, e) <= 0.60653066 + 1e-8);
    }
    SECTION("negative time only on P") {
        CHECK_THROWS_AS(semigroup_apply(e, -1.0, v, Part::full, split), std::invalid_argument);
        CHECK_THROWS_AS(semigroup_apply(e, -1.0, v, Part::Q, split), std::invalid_argument);
        const StateVector back = semigroup_apply(e, -1.0, v, Part::P, split);
        CHECK_THAT(back[2], WithinRel(std::exp(9.0) * v[2], 1e-14));
        CHECK(back[3] == 0.0);
    }
}

TEST_CASE("resolvent_apply", "[spectral]") {
    const auto r = resolvent_apply(spectrum({2.0}), 0.0, Vector{1.0});
    CHECK(r[0] == Complex(-0.5, 0.0));
    const EigenData e = quadratic_spectrum(6);
    CHECK_THROWS_AS(resolvent_apply(e, 4.0, Vector(6, 1.0)), PoleError);

    std::mt19937_64 rng(9);
    for (int k = 0; k < 20; ++k) {
        const StateVector v = random_state(6, rng);
        const auto w = resolvent_apply(e, -1.0, v.span());
        double nw = 0.0;
        for (const auto& z : w) nw += std::norm(z);
        CHECK(std::sqrt(nw) <= euclidean_norm(v.span()) / spectrum_distance(-1.0, e) * (1.0 + 1e-14));
        const Complex lambda(0.3, 2.0);
        const auto x = resolvent_apply(e, lambda, v.span());
        for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs((lambda - e[i]) * x[i] - v[i]) < 1e-10);
    }
}

TEST_CASE("project", "[spectral]") {
    const EigenData e = quadratic_spectrum(7);
    std::mt19937_64 rng(1);
    const StateVector v = random_state(7, rng);
    const SpectralSplit full(e, 7), split(e, 3);
    CHECK(project(full, v, Part::P) == v);
    CHECK(project(full, v, Part::Q) == StateVector(7));
    CHECK(project(split, v, Part::P) + project(split, v, Part::Q) == v);
    CHECK(project(split, project(split, v, Part::P), Part::P) == project(split, v, Part::P));
    CHECK(project(split, project(split, v, Part::Q), Part::P) == StateVector(7));
    CHECK(projector_matrix(split, Part::P) + projector_matrix(split, Part::Q) == Matrix::identity(7));
}

TEST_CASE("comparison pairs", "[spectral]") {
    const std::size_t n = 6;
    const EigenData e0 = quadratic_spectrum(n);
    std::mt19937_64 rng(4);
    const StateVector v = random_state(n, rng);

    SECTION("identity: M E v = v") {
        const ComparisonPair p = ComparisonPair::identity(n);
        CHECK(comparison_apply(p, Direction::M, comparison_apply(p, Direction::E, v)) == v);
    }
    SECTION("extension: M is a left inverse") {
        Matrix E = Matrix::identity(n);
        E(0, 1) = 0.2;
        E(3, 2) = -0.1;
        const ComparisonPair p = ComparisonPair::from_extension(E);
        CHECK(((p.M() * p.E()) - Matrix::identity(n)).max_abs() < 1e-13);
        Matrix singular = Matrix::identity(n);
        singular(2, 2) = 0.0;
        CHECK_THROWS_AS(ComparisonPair::from_extension(singular), DegenerateBasisError);
    }
    SECTION("rotation family: norms <= 2 and |E v| -> |v| monotonically") {
        FamilyParams fp;
        fp.kind = "rotation";
        NonlinearityParams zero;
        zero.family = "zero";
        const PerturbationFamily fam = make_family(fp, e0, zero, 0.5, 1);
        double prev_gap = std::numeric_limits<double>::infinity();
        for (double eps : {0.1, 0.01, 0.001}) {
            const ProblemInstance inst = fam.generator(eps);
            const ComparisonNorms norms = comparison_norms(inst.pair, e0, inst.eigs, 0.5);
            CHECK(norms.max() <= 2.0);
            CHECK(((inst.pair.M() * inst.pair.E()) - Matrix::identity(n)).max_abs() < 1e-14);
            CHECK(inst.eigs.eigenvalues() == e0.eigenvalues());
            // alpha-norm of E v against v: the eps-dependent part of the metric.
            const double gap = std::abs(frac_norm(comparison_apply(inst.pair, Direction::E, v), 0.5, inst.eigs) -
                                        frac_norm(v, 0.5, e0));
            CHECK(gap <= prev_gap);
            prev_gap = gap;
        }
    }
    SECTION("ambient round trip") {
        const EigenData ee = EigenData::create(e0.eigenvalues(), givens_product(n, {{2, 3}}, 0.05));
        const ComparisonPair p = ComparisonPair::from_ambient(Matrix::identity(n), e0, ee);
        CHECK((p.ambient_E(e0, ee) - Matrix::identity(n)).max_abs() < 1e-15);
        CHECK((p.E() - ee.basis().transpose()).max_abs() < 1e-15);
    }
}

TEST_CASE("coordinate map", "[spectral]") {
    const std::size_t n = 6, m = 2;
    const EigenData e0 = quadratic_spectrum(n);
    SECTION("eps = 0: coordinates are the leading coefficients") {
        const CoordinateMap j(SpectralSplit(e0, m), ComparisonPair::identity(n));
        const StateVector w{0.3, -1.2, 0, 0, 0, 0};
        const Vector p = j.coord_map(w);
        CHECK(p == Vector{0.3, -1.2});
        CHECK_THAT(frac_norm(j.from_coords(p), 0.5, e0), WithinRel(std::hypot(0.3, 1.2 * 2.0), 1e-15));
    }
    SECTION("rotated basis: round trip to 1e-12") {
        const EigenData ee = EigenData::create(e0.eigenvalues(), givens_product(n, {{1, 2}, {2, 3}}, 0.1));
        const ComparisonPair p = ComparisonPair::from_ambient(Matrix::identity(n), e0, ee);
        const CoordinateMap j(SpectralSplit(ee, m), p);
        const Vector pbar{0.7, -0.4};
        const StateVector w = j.from_coords(pbar);
        for (std::size_t i = m; i < n; ++i) CHECK(w[i] == 0.0);
        const Vector back = j.coord_map(w);
        CHECK_THAT(back[0], WithinAbs(0.7, 1e-12));
        CHECK_THAT(back[1], WithinAbs(-0.4, 1e-12));
        // psi_k = P E phi_k
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < m; ++c) CHECK(j.psi()(r, c) == p.E()(r, c));
    }
    SECTION("degenerate psi basis is refused") {
        Matrix E = Matrix::identity(n);
        E(0, 0) = 1e-5;
        CHECK_THROWS_AS(CoordinateMap(SpectralSplit(e0, m), ComparisonPair::from_extension(E)), DegenerateBasisError);
    }
}

TEST_CASE("contour projection", "[spectral][contour]") {
    SECTION("rectangle around the first m modes matches the direct projector to 1e-8") {
        const EigenData e = quadratic_spectrum(64);
        for (std::size_t m : {1u, 2u, 3u}) {
            const Matrix P = contour_projection(e, Contour::slow_rectangle(e, m, 256));
            CHECK((P - projector_matrix(SpectralSplit(e, m), Part::P)).max_abs() <= 1e-8);
            CHECK(operator_norm(P - projector_matrix(SpectralSplit(e, m), Part::P)) <= 1e-8);
            CHECK(numerical_rank(P) == m);
        }
    }
    SECTION("contour enclosing the whole spectrum gives the identity") {
        const EigenData e = spectrum({1.0, 2.0, 5.0, 7.0});
        const Matrix P = contour_projection(e, Contour::rectangle(-8.0, 0.0, 1.0, 256));
        CHECK((P - Matrix::identity(4)).max_abs() <= 1e-8);
    }
    SECTION("contour through the spectrum is refused") {
        const EigenData e = spectrum({1.0, 2.0});
        CHECK_THROWS_AS(contour_projection(e, Contour::rectangle(-2.0, 0.0, 1.0)), ContourTooCloseError);
        CHECK_THROWS_AS(contour_projection(e, Contour::sector(-1.5)), std::invalid_argument);
    }
    SECTION("sector integral reproduces the fast semigroup") {
        const EigenData e = quadratic_spectrum(12);
        for (double t : {0.05, 0.5, 2.0}) {
            const Vector s = contour_semigroup(e, Contour::fast_sector(e, 2), t);
            for (std::size_t i = 0; i < 12; ++i) {
                const double exact = i >= 2 ? std::exp(-e[i] * t) : 0.0;
                CHECK_THAT(s[i], WithinAbs(exact, 1e-9));
            }
        }
    }
    SECTION("sample points stay on the contour") {
        const Contour c = Contour::rectangle(-3.0, -0.5, 1.0);
        for (const Complex& z : c.sample_points(16)) {
            const bool on = std::abs(std::abs(z.imag()) - 1.0) < 1e-14 || std::abs(z.real() + 3.0) < 1e-14 ||
                            std::abs(z.real() + 0.5) < 1e-14;
            CHECK(on);
        }
        CHECK(c.length() == 2.0 * 2.5 + 4.0);
    }
}

TEST_CASE("spectral JSON document round trip", "[spectral][io]") {
    const EigenData e0 = quadratic_spectrum(5);
    const EigenData ee = EigenData::create(Vector{1.1, 4.1, 9.1, 16.1, 25.1}, givens_product(5, {{2, 3}}, 0.2));
    const ComparisonPair p = ComparisonPair::from_ambient(Matrix::identity(5), e0, ee);
    const Json doc = spectral_to_json(ee, &p, &e0);
    CHECK(doc.contains("basis"));
    CHECK_FALSE(doc.contains("E"));
    const EigenData back = eigen_data_from_json(Json::parse(doc.dump()));
    CHECK(back == ee);
    CHECK(comparison_from_json(doc, e0, back) == p);
    const Json plain = spectral_to_json(e0);
    CHECK_FALSE(plain.contains("basis"));
    CHECK_THROWS_AS(eigen_data_from_json(Json::object()), SchemaError);
}
