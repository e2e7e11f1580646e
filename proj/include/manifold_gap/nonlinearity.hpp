#pragma once

// Nonlinearities F : X^alpha -> X with certified sup bound C_F, Lipschitz
// constant L_F (alpha-norm to base norm) and support radius R.
//
// A spec is only ever produced by a preparation routine: a raw bounded,
// Lipschitz map G is multiplied by a radial cutoff, which makes the support
// condition true by construction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "manifold_gap/errors.hpp"
#include "manifold_gap/linalg.hpp"
#include "manifold_gap/spectral_core.hpp"

namespace manifold_gap {

using MapFn = std::function<StateVector(const StateVector&)>;

/// Raw map with its own constants: sup |G| <= C_G, Lipschitz L_G in the
/// alpha-norm of the space it acts on.
struct RawMap {
    MapFn eval;
    double C_G = 0.0;
    double L_G = 0.0;
};

/// theta(s) = 1 for s <= inner, 0 for s >= 1, smoothstep in between.
struct CutoffProfile {
    double inner = 0.5;
    int degree = 3;

    double theta(double s) const {
        if (s <= inner) return 1.0;
        if (s >= 1.0) return 0.0;
        const double w = (1.0 - s) / (1.0 - inner);
        if (degree == 1) return w;
        if (degree == 3) return w * w * (3.0 - 2.0 * w);
        if (degree == 5) return w * w * w * (10.0 - 15.0 * w + 6.0 * w * w);
        throw std::invalid_argument("CutoffProfile: degree must be 1, 3 or 5");
    }

    /// Lipschitz constant of theta in s.
    double lipschitz() const {
        const double slope = 1.0 / (1.0 - inner);
        if (degree == 1) return slope;
        if (degree == 3) return 1.5 * slope;
        if (degree == 5) return 1.875 * slope;
        throw std::invalid_argument("CutoffProfile: degree must be 1, 3 or 5");
    }
};

/// Which quantity the cutoff reads: the full alpha-norm (support in the ball
/// D_R) or the alpha-norm of the slow part only (support in a slow cylinder).
enum class SupportShape { ball, slow_cylinder };

struct NonlinearitySpec {
    MapFn eval_fn;
    double C_F = 0.0;
    double L_F = 0.0;
    double R = std::numeric_limits<double>::infinity();
    double alpha = 0.5;
    /// Operator whose alpha-norm the certificates refer to.
    EigenData eigs;
    SupportShape support = SupportShape::ball;
    /// Slow-mode count read by a slow-cylinder cutoff.
    std::size_t cylinder_modes = 0;
    std::string family = "zero";
    bool is_zero = false;

    StateVector operator()(const StateVector& u) const {
        if (is_zero) return StateVector(u.size());
        return eval_fn(u);
    }

    /// The quantity compared against R by the cutoff.
    double support_norm(const StateVector& u) const {
        if (support == SupportShape::ball) return frac_norm(u, alpha, eigs);
        double s = 0.0;
        for (std::size_t i = 0; i < cylinder_modes; ++i) {
            const double x = u[i] * std::pow(eigs[i], alpha);
            s += x * x;
        }
        return std::sqrt(s);
    }
};

inline StateVector eval(const NonlinearitySpec& F, const StateVector& u) { return F(u); }

inline NonlinearitySpec zero_nonlinearity(const EigenData& eigs, double alpha, double R = 1.0) {
    NonlinearitySpec F;
    F.eval_fn = [n = eigs.size()](const StateVector&) { return StateVector(n); };
    F.C_F = 0.0;
    F.L_F = 0.0;
    F.R = R;
    F.alpha = alpha;
    F.eigs = eigs;
    F.family = "zero";
    F.is_zero = true;
    return F;
}

/// F(u) = theta(|u|_alpha / R) G(u); C_F = C_G, L_F = L_G + C_G L_theta / R.
inline NonlinearitySpec prepare_cutoff(RawMap G, const CutoffProfile& profile, double R, double alpha,
                                       const EigenData& eigs, std::string family = "prepared") {
    if (!(R > 0.0)) throw std::invalid_argument("prepare_cutoff: R must be positive");
    if (!std::isfinite(G.C_G) || !std::isfinite(G.L_G) || G.C_G < 0.0 || G.L_G < 0.0)
        throw std::invalid_argument("prepare_cutoff: C_G and L_G must be finite and nonnegative");
    NonlinearitySpec F;
    F.C_F = G.C_G;
    F.L_F = G.L_G + G.C_G * profile.lipschitz() / R;
    F.R = R;
    F.alpha = alpha;
    F.eigs = eigs;
    F.family = std::move(family);
    F.eval_fn = [g = std::move(G.eval), profile, R, alpha, eigs](const StateVector& u) {
        const double theta = profile.theta(frac_norm(u, alpha, eigs) / R);
        if (theta == 0.0) return StateVector(u.size());
        StateVector out = g(u);
        if (theta != 1.0) out *= theta;
        return out;
    };
    return F;
}

/// F(u) = theta(|P_m u|_alpha / R) G(u) for a G that reads only the first m
/// modes. Same constants as prepare_cutoff; the support is the slow cylinder.
inline NonlinearitySpec prepare_slow_cutoff(RawMap G, const CutoffProfile& profile, double R, double alpha,
                                            const EigenData& eigs, std::size_t m, std::string family = "prepared") {
    NonlinearitySpec F = prepare_cutoff(RawMap{nullptr, G.C_G, G.L_G}, profile, R, alpha, eigs, std::move(family));
    F.support = SupportShape::slow_cylinder;
    F.cylinder_modes = m;
    const Vector w = eigs.powers(alpha);
    F.eval_fn = [g = std::move(G.eval), profile, R, w, m](const StateVector& u) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += (u[i] * w[i]) * (u[i] * w[i]);
        const double theta = profile.theta(std::sqrt(s) / R);
        if (theta == 0.0) return StateVector(u.size());
        StateVector out = g(u);
        if (theta != 1.0) out *= theta;
        return out;
    };
    return F;
}

/// Parameters of the built-in families.
struct NonlinearityParams {
    std::string family = "tanh";  // zero | constant | decoupled | tanh
    double C = 0.0125;            // amplitude of c_i (tanh, decoupled) or of q (constant)
    double decay = 0.5;           // geometric decay of c_i, w_ij, q_i
    double coupling = 1.0;        // scale of w_ij
    double R = 10.0;
    CutoffProfile profile{};
};

namespace detail {

struct TanhWeights {
    Vector c;
    Matrix w;
};

/// c_i = C decay^{i-1}, w_ij = coupling decay^{|i-j|} (-1)^{i+j} cos(i j / 7);
/// columns beyond `cols` are zero.
inline TanhWeights tanh_weights(std::size_t n, const NonlinearityParams& p, std::size_t cols) {
    TanhWeights out{Vector(n), Matrix(n, n)};
    for (std::size_t i = 0; i < n; ++i) {
        out.c[i] = p.C * std::pow(p.decay, static_cast<double>(i));
        for (std::size_t j = 0; j < std::min(cols, n); ++j) {
            const double d = std::abs(static_cast<double>(i) - static_cast<double>(j));
            const double sign = (i + j) % 2 == 0 ? 1.0 : -1.0;
            out.w(i, j) = p.coupling * std::pow(p.decay, d) * sign *
                          std::cos(static_cast<double>((i + 1) * (j + 1)) / 7.0);
        }
    }
    return out;
}

/// L_G = (sum_i c_i^2 |(w_ij lambda_j^{-alpha})_j|^2)^{1/2}.
inline double tanh_lipschitz(const TanhWeights& tw, const EigenData& eigs, double alpha) {
    const Vector lw = eigs.powers(alpha);
    double s = 0.0;
    for (std::size_t i = 0; i < tw.c.size(); ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < tw.c.size(); ++j) {
            const double x = tw.w(i, j) / lw[j];
            row += x * x;
        }
        s += tw.c[i] * tw.c[i] * row;
    }
    return std::sqrt(s);
}

inline RawMap tanh_raw(TanhWeights tw, std::size_t cols) {
    const double C_G = euclidean_norm(tw.c);
    auto shared = std::make_shared<const TanhWeights>(std::move(tw));
    RawMap G;
    G.C_G = C_G;
    G.eval = [shared, cols](const StateVector& u) {
        const std::size_t n = u.size();
        StateVector out(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = shared->w.row(i);
            double acc = 0.0;
            for (std::size_t j = 0; j < cols; ++j) acc += row[j] * u[j];
            out[i] = shared->c[i] * std::tanh(acc);
        }
        return out;
    };
    return G;
}

}  // namespace detail

/// Forcing vector q_i = C decay^{i-m-1} on modes i > m, zero on the slow modes.
inline StateVector constant_forcing_vector(std::size_t n, std::size_t m, double C, double decay) {
    StateVector q(n);
    for (std::size_t i = m; i < n; ++i) q[i] = C * std::pow(decay, static_cast<double>(i - m));
    return q;
}

/// Built-in families on the operator `eigs`, with `offset` added to the raw
/// map before preparation (G + offset).
inline NonlinearitySpec make_nonlinearity(const NonlinearityParams& p, const EigenData& eigs, double alpha,
                                          std::size_t m, const StateVector* offset = nullptr) {
    const std::size_t n = eigs.size();
    auto with_offset = [offset](RawMap G) {
        if (!offset || euclidean_norm(offset->span()) == 0.0) return G;
        G.C_G += euclidean_norm(offset->span());
        G.eval = [g = std::move(G.eval), off = *offset](const StateVector& u) { return g(u) + off; };
        return G;
    };

    if (p.family == "zero") {
        if (!offset) return zero_nonlinearity(eigs, alpha, p.R);
        RawMap G{[n](const StateVector&) { return StateVector(n); }, 0.0, 0.0};
        return prepare_cutoff(with_offset(std::move(G)), p.profile, p.R, alpha, eigs, "zero");
    }
    if (p.family == "constant") {
        const StateVector q = constant_forcing_vector(n, m, p.C, p.decay);
        RawMap G{[q](const StateVector&) { return q; }, euclidean_norm(q.span()), 0.0};
        return prepare_cutoff(with_offset(std::move(G)), p.profile, p.R, alpha, eigs, "constant");
    }
    if (p.family == "tanh") {
        auto tw = detail::tanh_weights(n, p, n);
        const double L_G = detail::tanh_lipschitz(tw, eigs, alpha);
        RawMap G = detail::tanh_raw(std::move(tw), n);
        G.L_G = L_G;
        return prepare_cutoff(with_offset(std::move(G)), p.profile, p.R, alpha, eigs, "tanh");
    }
    if (p.family == "decoupled") {
        auto tw = detail::tanh_weights(n, p, m);
        const double L_G = detail::tanh_lipschitz(tw, eigs, alpha);
        RawMap G = detail::tanh_raw(std::move(tw), m);
        G.L_G = L_G;
        return prepare_slow_cutoff(with_offset(std::move(G)), p.profile, p.R, alpha, eigs, m, "decoupled");
    }
    throw std::invalid_argument("unknown nonlinearity family '" + p.family + "'");
}

/// F_eps(u) = E F_0(M u). Certificates transfer through the comparison
/// operators: C_F |E|, L_F |E| |M|_{alpha}, R |E|_{alpha}.
inline NonlinearitySpec transport(const NonlinearitySpec& F0, const ComparisonPair& pair, const EigenData& eigs0,
                                  const EigenData& eigs_eps) {
    const bool identity = pair.E() == Matrix::identity(pair.size()) && pair.M() == pair.E();
    const ComparisonNorms norms = comparison_norms(pair, eigs0, eigs_eps, F0.alpha);
    NonlinearitySpec F = F0;
    F.eigs = eigs_eps;
    F.C_F = F0.C_F * norms.E_base;
    F.L_F = F0.L_F * norms.E_base * norms.M_alpha;
    if (F0.support == SupportShape::ball) F.R = F0.R * norms.E_alpha;
    if (identity) {
        F.eval_fn = F0.eval_fn;
    } else {
        F.eval_fn = [inner = F0, pair](const StateVector& u) {
            return comparison_apply(pair, Direction::E, inner(comparison_apply(pair, Direction::M, u)));
        };
    }
    return F;
}

/// Deterministic samples drawn uniformly from alpha-norm balls of radii
/// R/4, R/2, R, 2R (cycled).
class BallSampler {
public:
    BallSampler(const EigenData& eigs, double alpha, double R, std::uint64_t seed)
        : weights_(eigs.powers(alpha)), R_(R), rng_(seed) {}

    StateVector next() {
        static constexpr double fractions[4] = {0.25, 0.5, 1.0, 2.0};
        const double radius = R_ * fractions[count_++ % 4];
        return sample(radius);
    }

    StateVector sample(double radius) {
        const std::size_t n = weights_.size();
        StateVector v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = normal_(rng_) / weights_[i];
        const double norm = weighted_norm(v.span(), weights_);
        const double r = radius * std::pow(uniform_(rng_), 1.0 / static_cast<double>(n));
        if (norm > 0.0) v *= r / norm;
        return v;
    }

    /// Random direction with alpha-norm `size`.
    StateVector direction(double size) {
        const std::size_t n = weights_.size();
        StateVector v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = normal_(rng_) / weights_[i];
        const double norm = weighted_norm(v.span(), weights_);
        if (norm > 0.0) v *= size / norm;
        return v;
    }

    double uniform() { return uniform_(rng_); }

private:
    Vector weights_;
    double R_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
    std::size_t count_ = 0;
};

struct ConstantEstimate {
    double C_empirical = 0.0;
    double L_empirical = 0.0;
    double C_certified = 0.0;
    double L_certified = 0.0;

    double C_margin() const { return C_certified - C_empirical; }
    double L_margin() const { return L_certified - L_empirical; }
};

/// Empirical lower bounds of sup |F| and of the Lipschitz constant, from
/// seeded samples. Lipschitz pairs are half independent, half close pairs
/// (separation 1e-3 of the sample radius).
inline ConstantEstimate estimate_constants(const NonlinearitySpec& F, std::size_t sample_count, std::uint64_t seed) {
    if (sample_count < 2) throw std::invalid_argument("estimate_constants: sample_count >= 2 required");
    const double R = std::isfinite(F.R) ? F.R : 1.0;
    BallSampler sampler(F.eigs, F.alpha, R, seed);
    ConstantEstimate est;
    est.C_certified = F.C_F;
    est.L_certified = F.L_F;
    StateVector prev;
    for (std::size_t k = 0; k < sample_count; ++k) {
        const StateVector u = sampler.next();
        const StateVector fu = F(u);
        est.C_empirical = std::max(est.C_empirical, euclidean_norm(fu.span()));
        StateVector v;
        if (k % 2 == 0 || prev.size() == 0) {
            v = u + sampler.direction(1e-3 * std::max(frac_norm(u, F.alpha, F.eigs), R * 1e-3));
        } else {
            v = prev;
        }
        const double du = frac_norm(u - v, F.alpha, F.eigs);
        if (du > 0.0) {
            const double q = euclidean_norm((fu - F(v)).span()) / du;
            est.L_empirical = std::max(est.L_empirical, q);
        }
        prev = u;
    }
    if (est.C_empirical > est.C_certified + 1e-9)
        throw CertificateViolation("sampled |F| = " + std::to_string(est.C_empirical) + " exceeds C_F = " +
                                   std::to_string(est.C_certified) + " for family " + F.family);
    if (est.L_empirical > est.L_certified + 1e-9)
        throw CertificateViolation("sampled Lipschitz quotient " + std::to_string(est.L_empirical) +
                                   " exceeds L_F = " + std::to_string(est.L_certified) + " for family " + F.family);
    return est;
}

struct RhoEstimate {
    double empirical = 0.0;
    std::optional<double> analytic;

    double value() const { return analytic ? std::max(empirical, *analytic) : empirical; }
};

/// Sampled sup over u_0 of |F_eps(E u_0) - E F_0(u_0)|.
inline RhoEstimate rho_distance(const NonlinearitySpec& F_eps, const NonlinearitySpec& F_0, const ComparisonPair& pair,
                                std::size_t sample_count, std::uint64_t seed,
                                std::optional<double> analytic = std::nullopt) {
    if (F_eps.alpha != F_0.alpha) throw std::invalid_argument("rho_distance: specs certified for different alpha");
    const double R = std::isfinite(F_0.R) ? F_0.R : 1.0;
    BallSampler sampler(F_0.eigs, F_0.alpha, R, seed);
    RhoEstimate out;
    out.analytic = analytic;
    for (std::size_t k = 0; k < sample_count; ++k) {
        const StateVector u0 = sampler.next();
        const StateVector a = F_eps(comparison_apply(pair, Direction::E, u0));
        const StateVector b = comparison_apply(pair, Direction::E, F_0(u0));
        out.empirical = std::max(out.empirical, euclidean_norm((a - b).span()));
    }
    return out;
}

}  // namespace manifold_gap
