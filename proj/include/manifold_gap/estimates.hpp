#pragma once

// Quantitative side of the comparison: the linear perturbation size tau, the
// kernel l(t) = min{tau/t, t^-alpha}, the resolvent factor C_3(lambda), the
// contour constants C_P = C_4 and C_5, gap conditions, and numerical checks
// of the lemma-level inequalities on the finite model.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "manifold_gap/errors.hpp"
#include "manifold_gap/linalg.hpp"
#include "manifold_gap/spectral_core.hpp"

namespace manifold_gap {

/// sigma_max(D^alpha T): operator norm of T measured X -> X^alpha.
inline double mixed_norm(const Matrix& T, const EigenData& target, double alpha) {
    return operator_norm(T.scale_rows(target.powers(alpha)));
}

inline double mixed_norm(const ComplexMatrix& T, const EigenData& target, double alpha) {
    const Vector w = target.powers(alpha);
    std::vector<Complex> cw(w.begin(), w.end());
    return operator_norm(T.scale_rows(cw));
}

/// A_eps^{-1} E - E A_0^{-1} in coefficient frames.
inline Matrix inverse_difference(const EigenData& eigs_eps, const EigenData& eigs_0, const ComparisonPair& pair) {
    const std::size_t n = eigs_0.size();
    Matrix T(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) T(i, j) = pair.E()(i, j) * (1.0 / eigs_eps[i] - 1.0 / eigs_0[j]);
    return T;
}

/// |A_eps^{-1} E - E A_0^{-1}| in L(X_0, X_eps^alpha).
inline double tau_of(const EigenData& eigs_eps, const EigenData& eigs_0, const ComparisonPair& pair, double alpha) {
    if (eigs_eps.size() != eigs_0.size() || pair.size() != eigs_0.size())
        throw std::invalid_argument("tau_of: mode counts differ");
    return mixed_norm(inverse_difference(eigs_eps, eigs_0, pair), eigs_eps, alpha);
}

inline double l_eps_alpha(double t, double tau, double alpha) {
    if (!(t > 0.0)) throw std::invalid_argument("l_eps_alpha: t > 0 required");
    return std::min(tau / t, std::pow(t, -alpha));
}

/// Distance from lambda to sigma(-A).
inline double distance_to_minus_spectrum(Complex lambda, const EigenData& eigs) {
    double d = std::numeric_limits<double>::infinity();
    for (double l : eigs.eigenvalues()) d = std::min(d, std::abs(lambda + l));
    return d;
}

inline double c3_of(Complex lambda, const EigenData& eigs_eps, const EigenData& eigs_0) {
    const double de = distance_to_minus_spectrum(lambda, eigs_eps);
    const double d0 = distance_to_minus_spectrum(lambda, eigs_0);
    if (de < 1e-12 || d0 < 1e-12) throw PoleError("c3_of: lambda lies on the spectrum of -A");
    const double r = std::abs(lambda);
    return (1.0 + r / de) * (1.0 + r / d0);
}

struct ContourConstants {
    double gamma_length = 0.0;
    double sup_c3_rectangle = 0.0;
    double C_P = 0.0;
    double C_4 = 0.0;
    double sup_c3_sector = 0.0;
    double C_5 = 0.0;
};

/// C_P = C_4 = |Gamma|/(2 pi) sup_Gamma C_3 on the slow rectangle and
/// C_5 = max{sup_{Gamma_m} C_3 / (pi cos phi), 4} on the fast sector.
inline ContourConstants contour_constants(const EigenData& eigs_eps, const EigenData& eigs_0, std::size_t m,
                                          std::size_t samples_per_segment = 2048) {
    ContourConstants c;
    const Contour rect = Contour::slow_rectangle(eigs_0, m);
    c.gamma_length = rect.length();
    for (const Complex& z : rect.sample_points(samples_per_segment))
        c.sup_c3_rectangle = std::max(c.sup_c3_rectangle, c3_of(z, eigs_eps, eigs_0));
    c.C_P = c.gamma_length / (2.0 * std::numbers::pi) * c.sup_c3_rectangle;
    c.C_4 = c.C_P;
    const Contour sector = Contour::fast_sector(eigs_0, m);
    for (const Complex& z : sector.sample_points(samples_per_segment))
        c.sup_c3_sector = std::max(c.sup_c3_sector, c3_of(z, eigs_eps, eigs_0));
    c.C_5 = std::max(c.sup_c3_sector / (std::numbers::pi * std::cos(sector.phi)), 4.0);
    return c;
}

struct GapRow {
    std::size_t m = 0;
    double margin_2_13 = 0.0;
    double margin_2_14 = 0.0;
    double margin_4_3a = 0.0;
    double margin_4_3b = 0.0;
    double margin_separation = 0.0;
    bool admissible = false;
};

struct GapReport {
    double L_F = 0.0;
    double alpha = 0.0;
    std::vector<GapRow> rows;
    std::vector<std::size_t> admissible;
    std::optional<std::size_t> chosen;

    const GapRow& row(std::size_t m) const { return rows.at(m - 1); }
};

/// Margins for slow dimension m (1-based). Nonnegative margins pass.
inline GapRow gap_row(const EigenData& eigs_0, const EigenData& eigs_eps, double L_F, double alpha, std::size_t m) {
    GapRow r;
    r.m = m;
    const double l0m = eigs_0[m - 1], l0n = eigs_0[m];
    const double lem = eigs_eps[m - 1], len = eigs_eps[m];
    r.margin_2_13 = (l0n - l0m) - 12.0 * L_F * (std::pow(l0m, alpha) + std::pow(l0n, alpha));
    r.margin_2_14 = std::pow(l0m, 1.0 - alpha) - 24.0 * L_F / (1.0 - alpha);
    r.margin_4_3a = std::pow(lem, 1.0 - alpha) - 12.0 * L_F / (1.0 - alpha);
    r.margin_4_3b = (len - lem) - 6.0 * L_F * (std::pow(len, alpha) + std::pow(lem, alpha));
    r.margin_separation = std::min(len - lem, l0n - l0m) - 3.0;
    // Separation exactly 3 (lambda_i = i^2 at m = 1) must survive round-off in shifted spectra.
    const double roundoff = 1e-12 * std::max(l0n, len);
    r.admissible = l0m < l0n && lem < len && r.margin_2_13 >= 0.0 && r.margin_2_14 >= 0.0 && r.margin_4_3a >= 0.0 &&
                   r.margin_4_3b >= 0.0 && r.margin_separation >= -roundoff;
    return r;
}

inline GapReport gap_check(const EigenData& eigs_0, const EigenData& eigs_eps, double L_F, double alpha) {
    if (L_F < 0.0) throw std::invalid_argument("gap_check: L_F >= 0 required");
    if (eigs_0.size() != eigs_eps.size()) throw std::invalid_argument("gap_check: mode counts differ");
    GapReport rep;
    rep.L_F = L_F;
    rep.alpha = alpha;
    for (std::size_t m = 1; m < eigs_0.size(); ++m) {
        rep.rows.push_back(gap_row(eigs_0, eigs_eps, L_F, alpha, m));
        if (rep.rows.back().admissible) rep.admissible.push_back(m);
    }
    if (!rep.admissible.empty()) rep.chosen = rep.admissible.front();
    return rep;
}

struct LemmaCheckReport {
    std::string lemma;
    std::string grid;
    double worst_ratio = 0.0;
    std::size_t violations = 0;
    std::size_t samples = 0;
    /// Largest absolute error of an identity check, where one applies.
    double max_identity_error = 0.0;

    bool passed() const { return violations == 0 && std::isfinite(worst_ratio); }
};

namespace detail {

/// Records measured <= bound with a relative slack of 1e-12 and an absolute
/// floor for exact-zero bounds.
inline void record(LemmaCheckReport& rep, double measured, double bound, double floor = 1e-13) {
    ++rep.samples;
    double ratio;
    if (bound > 0.0) {
        ratio = measured / bound;
    } else {
        ratio = measured <= floor ? 0.0 : std::numeric_limits<double>::infinity();
    }
    if (!(measured <= bound * (1.0 + 1e-12) + floor)) ++rep.violations;
    if (std::isfinite(ratio)) rep.worst_ratio = std::max(rep.worst_ratio, ratio);
    else rep.worst_ratio = std::numeric_limits<double>::infinity();
}

}  // namespace detail

inline std::vector<double> log_grid(double lo, double hi, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k)
        out[k] = lo * std::pow(hi / lo, n == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(n - 1));
    return out;
}

inline std::vector<double> linear_grid(double lo, double hi, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k)
        out[k] = lo + (hi - lo) * (n == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(n - 1));
    return out;
}

/// |e^{-At}| <= e^{-lambda_1 t} and |e^{-At}|_{X -> X^alpha} <= e^{-lambda_1 t} max{lambda_1, alpha/t}^alpha.
inline LemmaCheckReport verify_semigroup_bounds(const EigenData& eigs, double alpha, std::span<const double> t_grid) {
    LemmaCheckReport rep{"3.1", "t in [" + std::to_string(t_grid.front()) + ", " + std::to_string(t_grid.back()) + "]"};
    const double l1 = eigs[0];
    for (double t : t_grid) {
        double base = 0.0, frac = 0.0;
        for (double l : eigs.eigenvalues()) {
            base = std::max(base, std::exp(-l * t));
            frac = std::max(frac, std::exp(-l * t) * std::pow(l, alpha));
        }
        detail::record(rep, base, std::exp(-l1 * t));
        detail::record(rep, frac, std::exp(-l1 * t) * std::pow(std::max(l1, alpha / t), alpha));
    }
    return rep;
}

/// Finite-model eigenvalue convergence: max_{i <= m+1} |lambda_i^eps - lambda_i^0|
/// is nonincreasing as eps decreases. `runs` holds (eps, eigs_eps) pairs.
inline LemmaCheckReport verify_eigenvalue_convergence(const EigenData& eigs_0,
                                                      std::vector<std::pair<double, EigenData>> runs, std::size_t m) {
    std::sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    LemmaCheckReport rep{"3.2", std::to_string(runs.size()) + " eps values, modes 1.." + std::to_string(m + 1)};
    double prev = -1.0;
    for (const auto& [eps, eigs] : runs) {
        double d = 0.0;
        for (std::size_t i = 0; i <= m && i < eigs.size(); ++i) d = std::max(d, std::abs(eigs[i] - eigs_0[i]));
        if (!(eigs[m - 1] < eigs[m])) ++rep.violations;
        if (prev >= 0.0) detail::record(rep, d, prev, 1e-15);
        prev = d;
    }
    return rep;
}

/// Resolvent identity
///   (lambda + A_eps)^{-1} E - E (lambda + A_0)^{-1}
///     = [I - (lambda + A_eps)^{-1} lambda] (A_eps^{-1} E - E A_0^{-1}) [I - lambda (lambda + A_0)^{-1}]
/// to 1e-10 entrywise, and the bound |LHS|_{X_0 -> X_eps^alpha} <= C_3(lambda) tau.
inline LemmaCheckReport verify_resolvent_identity(const EigenData& eigs_eps, const EigenData& eigs_0,
                                                  const ComparisonPair& pair, double alpha, double tau,
                                                  std::span<const Complex> lambdas) {
    LemmaCheckReport rep{"3.4", std::to_string(lambdas.size()) + " points off the spectrum"};
    const std::size_t n = eigs_0.size();
    const ComplexMatrix E = to_complex(pair.E());
    const ComplexMatrix T = to_complex(inverse_difference(eigs_eps, eigs_0, pair));
    for (const Complex& lambda : lambdas) {
        if (distance_to_minus_spectrum(lambda, eigs_eps) < 1e-12 || distance_to_minus_spectrum(lambda, eigs_0) < 1e-12)
            throw PoleError("verify_resolvent_identity: lambda lies on the spectrum of -A");
        std::vector<Complex> re(n), r0(n), le(n), l0(n);
        for (std::size_t i = 0; i < n; ++i) {
            re[i] = 1.0 / (lambda + eigs_eps[i]);
            r0[i] = 1.0 / (lambda + eigs_0[i]);
            le[i] = 1.0 - re[i] * lambda;
            l0[i] = 1.0 - lambda * r0[i];
        }
        const ComplexMatrix lhs = ComplexMatrix::diagonal(re) * E - E * ComplexMatrix::diagonal(r0);
        const ComplexMatrix rhs = ComplexMatrix::diagonal(le) * T * ComplexMatrix::diagonal(l0);
        const double err = (lhs - rhs).max_abs();
        rep.max_identity_error = std::max(rep.max_identity_error, err);
        if (err > 1e-10) ++rep.violations;
        detail::record(rep, mixed_norm(lhs, eigs_eps, alpha), c3_of(lambda, eigs_eps, eigs_0) * tau);
    }
    return rep;
}

/// |P_m^eps E - E P_m^0|_{X_0 -> X_eps^alpha} <= C_P tau, plus rank(P_Gamma) = m
/// for the contour projector of A_eps on the slow rectangle.
inline LemmaCheckReport verify_projection_distance(const EigenData& eigs_eps, const EigenData& eigs_0,
                                                   const ComparisonPair& pair, std::size_t m, double alpha, double tau,
                                                   const ContourConstants& constants) {
    LemmaCheckReport rep{"3.7", "operator norm, m = " + std::to_string(m)};
    const std::size_t n = eigs_0.size();
    Matrix D(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            D(i, j) = pair.E()(i, j) * ((i < m ? 1.0 : 0.0) - (j < m ? 1.0 : 0.0));
    detail::record(rep, mixed_norm(D, eigs_eps, alpha), constants.C_P * tau);
    const Matrix P = contour_projection(eigs_eps, Contour::slow_rectangle(eigs_0, m));
    if (numerical_rank(P) != m) ++rep.violations;
    return rep;
}

enum class SemigroupPart { full, P, Q };

/// Semigroup differences e^{-A_eps t} X E - E e^{-A_0 t} X for X = I, P_m, Q_m:
///   full: <= 4 l(t);  P (t <= 0): <= C_4 e^{-(lambda_m^0 + 1) t} tau;
///   Q (t > 0): <= C_5 e^{-(lambda_{m+1}^0 - 1) t} l(t).
inline LemmaCheckReport verify_semigroup_distance(const EigenData& eigs_eps, const EigenData& eigs_0,
                                                  const ComparisonPair& pair, double alpha, double tau,
                                                  std::span<const double> t_grid, SemigroupPart which, std::size_t m,
                                                  const ContourConstants& constants) {
    const char* id = which == SemigroupPart::full ? "3.9" : (which == SemigroupPart::P ? "5.1" : "5.3");
    LemmaCheckReport rep{id, std::to_string(t_grid.size()) + " times in [" + std::to_string(t_grid.front()) + ", " +
                                 std::to_string(t_grid.back()) + "]"};
    const std::size_t n = eigs_0.size();
    auto keep = [&](std::size_t i) {
        if (which == SemigroupPart::full) return true;
        if (which == SemigroupPart::P) return i < m;
        return i >= m;
    };
    for (double t : t_grid) {
        if (which == SemigroupPart::P ? t > 0.0 : t <= 0.0)
            throw std::invalid_argument("verify_semigroup_distance: t grid has the wrong sign for this part");
        Matrix S(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            // Dropped modes are skipped rather than scaled: e^{-lambda t} overflows for t < 0.
            const double ei = keep(i) ? std::exp(-eigs_eps[i] * t) : 0.0;
            for (std::size_t j = 0; j < n; ++j)
                S(i, j) = pair.E()(i, j) * (ei - (keep(j) ? std::exp(-eigs_0[j] * t) : 0.0));
        }
        double bound;
        if (which == SemigroupPart::full) bound = 4.0 * l_eps_alpha(t, tau, alpha);
        else if (which == SemigroupPart::P) bound = constants.C_4 * std::exp(-(eigs_0[m - 1] + 1.0) * t) * tau;
        else bound = constants.C_5 * std::exp(-(eigs_0[m] - 1.0) * t) * l_eps_alpha(t, tau, alpha);
        detail::record(rep, mixed_norm(S, eigs_eps, alpha), bound);
    }
    return rep;
}

namespace detail {

/// int_lo^hi f with the interval split at the interior break points.
template <typename F>
double integrate_finite(F f, double lo, double hi, std::vector<double> breaks) {
    boost::math::quadrature::tanh_sinh<double> ts;
    breaks.push_back(lo);
    breaks.push_back(hi);
    std::sort(breaks.begin(), breaks.end());
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
        const double a = breaks[k], b = breaks[k + 1];
        if (a < lo || b > hi || !(b > a)) continue;
        total += ts.integrate(f, a, b, 1e-10);
    }
    return total;
}

template <typename F>
double integrate_tail(F f, double lo) {
    boost::math::quadrature::exp_sinh<double> es;
    return es.integrate([&](double x) { return f(x); }, lo, std::numeric_limits<double>::infinity(), 1e-10);
}

}  // namespace detail

/// The three integral estimates for l(t) (the first at every t of `t_grid`,
/// t = 1 included as its own case) and the semigroup integral estimate
///   int_0^inf e^{-as} max{lambda, alpha/s}^alpha ds <= lambda^{alpha-1}/(1-alpha) + lambda^alpha/a.
/// Returns the report for the l-integrals first, then the semigroup integral.
inline std::vector<LemmaCheckReport> verify_integral_bounds(double tau, double alpha, double gamma, double a,
                                                            double lambda = 1.0,
                                                            std::span<const double> t_grid = {}) {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("verify_integral_bounds: 0 <= gamma < 1 required");
    if (!(a > 0.0)) throw std::invalid_argument("verify_integral_bounds: a > 0 required");
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("verify_integral_bounds: tau in (0, 1) required");
    const std::vector<double> default_grid = log_grid(1e-3, 10.0, 9);
    std::vector<double> ts(t_grid.begin(), t_grid.end());
    if (ts.empty()) ts = default_grid;
    if (std::find(ts.begin(), ts.end(), 1.0) == ts.end()) ts.push_back(1.0);

    const double kink = std::pow(tau, 1.0 / (1.0 - alpha));
    const double log_tau = std::abs(std::log(tau));
    auto l = [&](double s) { return std::min(tau / s, std::pow(s, -alpha)); };

    LemmaCheckReport rep{"3.10", "tau = " + std::to_string(tau) + ", gamma = " + std::to_string(gamma) +
                                     ", a = " + std::to_string(a) + ", " + std::to_string(ts.size()) + " values of t"};
    for (double t : ts) {
        const double first = detail::integrate_finite([&](double s) { return std::pow(t - s, -gamma) * l(s); }, 0.0, t,
                                                      {kink, 0.5 * t});
        detail::record(rep, first,
                       std::pow(2.0, gamma) / ((1.0 - gamma) * (1.0 - alpha)) * std::pow(t, -gamma) *
                           (std::abs(std::log(t)) + log_tau) * tau);
        const double second = detail::integrate_finite([&](double s) { return std::exp(-a * s) * l(s); }, 0.0, t, {kink});
        detail::record(rep, second, 2.0 / (1.0 - alpha) * (std::abs(std::log(t)) + log_tau) * tau);
    }
    if (a >= 1.0) {
        auto g = [&](double s) { return std::exp(-a * s) * l(s); };
        const double third = detail::integrate_finite(g, 0.0, kink, {}) + detail::integrate_tail(g, kink);
        detail::record(rep, third, 2.0 / (1.0 - alpha) * log_tau * tau);
    }

    LemmaCheckReport rep52{"5.2", "lambda = " + std::to_string(lambda) + ", a = " + std::to_string(a)};
    {
        const double split = alpha > 0.0 ? alpha / lambda : 0.0;
        auto h = [&](double s) { return std::exp(-a * s) * std::pow(std::max(lambda, alpha / s), alpha); };
        double value = detail::integrate_tail(h, split);
        if (split > 0.0) value += detail::integrate_finite(h, 0.0, split, {});
        detail::record(rep52, value, std::pow(lambda, alpha - 1.0) / (1.0 - alpha) + std::pow(lambda, alpha) / a);
    }
    return {rep, rep52};
}

/// |j_eps(w_eps) - j_0(w_0)|_alpha <= 3 |w_eps - E w_0|_{X_eps^alpha} + 3 C_P tau |w_0|_{X_0}
/// over seeded pairs (w_eps, w_0) of slow-subspace vectors. The left side is
/// measured in the X_0^alpha coordinate norm.
inline LemmaCheckReport verify_coordinate_comparison(const EigenData& eigs_eps, const EigenData& eigs_0,
                                                     const ComparisonPair& pair, std::size_t m, double alpha,
                                                     double tau, const ContourConstants& constants,
                                                     std::size_t samples, std::uint64_t seed) {
    LemmaCheckReport rep{"5.4", std::to_string(samples) + " sampled pairs"};
    const SpectralSplit split_eps(eigs_eps, m);
    const CoordinateMap coords(split_eps, pair);
    const std::size_t n = eigs_0.size();
    const Vector w0a = eigs_0.powers(alpha);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t k = 0; k < samples; ++k) {
        Vector p0(m);
        for (auto& x : p0) x = normal(rng);
        StateVector w0(n);
        for (std::size_t i = 0; i < m; ++i) w0[i] = p0[i];
        const StateVector Ew0 = comparison_apply(pair, Direction::E, w0);
        StateVector w_eps(n);
        switch (k % 3) {
            case 0:  // P_m^eps E w_0
                for (std::size_t i = 0; i < m; ++i) w_eps[i] = Ew0[i];
                break;
            case 1: {  // nearby: P_m^eps E w_0 plus a slow perturbation
                const double scale = std::pow(10.0, -3.0 * unit(rng));
                for (std::size_t i = 0; i < m; ++i) w_eps[i] = Ew0[i] + scale * normal(rng);
                break;
            }
            default:  // independent
                for (std::size_t i = 0; i < m; ++i) w_eps[i] = normal(rng);
        }
        const Vector p_eps = coords.coord_map(w_eps);
        double lhs = 0.0;
        for (std::size_t i = 0; i < m; ++i) lhs += std::pow((p_eps[i] - p0[i]) * w0a[i], 2);
        lhs = std::sqrt(lhs);
        const double rhs = 3.0 * frac_norm(w_eps - Ew0, alpha, eigs_eps) +
                           3.0 * constants.C_P * tau * euclidean_norm(w0.span());
        detail::record(rep, lhs, rhs, 1e-12);
    }
    return rep;
}

}  // namespace manifold_gap
