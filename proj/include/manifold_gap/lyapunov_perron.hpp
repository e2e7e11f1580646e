#pragma once

// Lyapunov-Perron construction of the manifold graph p-bar -> Phi(p-bar):
// backward slow flow, exponential (Duhamel) quadrature of the Q-mode
// integral, Jacobi fixed-point sweeps over a coordinate grid, and dynamical
// diagnostics (invariance residual, attraction rate, graph Lipschitz).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "manifold_gap/errors.hpp"
#include "manifold_gap/estimates.hpp"
#include "manifold_gap/linalg.hpp"
#include "manifold_gap/nonlinearity.hpp"
#include "manifold_gap/parallel.hpp"
#include "manifold_gap/spectral_core.hpp"

namespace manifold_gap {

/// One evolution problem u' + A u = F(u) with its slow/fast splitting and
/// the coordinates j on the slow subspace.
struct ManifoldProblem {
    EigenData eigs;
    SpectralSplit split;
    ComparisonPair pair;
    CoordinateMap coords;
    NonlinearitySpec F;
    double alpha = 0.5;

    static ManifoldProblem create(EigenData eigs, std::size_t m, ComparisonPair pair, NonlinearitySpec F) {
        ManifoldProblem p;
        p.alpha = F.alpha;
        p.split = SpectralSplit(eigs, m);
        p.pair = std::move(pair);
        p.coords = CoordinateMap(p.split, p.pair);
        p.eigs = std::move(eigs);
        p.F = std::move(F);
        return p;
    }

    std::size_t n() const { return eigs.size(); }
    std::size_t m() const { return split.m(); }
    std::size_t q() const { return eigs.size() - split.m(); }
};

struct SolverConfig {
    double dt = 0.01;
    /// Backward horizon; 0 selects it from tail_tol.
    double T_trunc = 0.0;
    /// Half-width of the coordinate grid; 0 means 1.25 R.
    double grid_extent = 0.0;
    /// Grid spacing; 0 means R / 16.
    double grid_h = 0.0;
    double fp_tol = 1e-8;
    std::size_t fp_max_iter = 200;
    double tail_tol = 1e-8;
};

/// Certified bound on the discarded part of the Q-mode integral beyond -T.
inline double certified_tail(double C_F, double lambda_m1, double T) {
    return C_F * std::exp(-lambda_m1 * T) / lambda_m1;
}

/// T = max(1, log(C_F / (lambda_{m+1} tail_tol)) / lambda_{m+1}), rounded up to a multiple of dt.
inline double auto_horizon(double C_F, double lambda_m1, double tail_tol, double dt) {
    double T = 1.0;
    if (C_F > 0.0) T = std::max(1.0, std::log(C_F / (lambda_m1 * tail_tol)) / lambda_m1);
    return std::ceil(T / dt - 1e-9) * dt;
}

/// SolverConfig with every automatic field resolved for `problem`.
inline SolverConfig resolve_config(const SolverConfig& cfg, const ManifoldProblem& problem) {
    if (!(cfg.dt > 0.0)) throw std::invalid_argument("SolverConfig: dt must be positive");
    if (!(cfg.fp_tol > 0.0)) throw std::invalid_argument("SolverConfig: fp_tol must be positive");
    if (!(cfg.tail_tol > 0.0)) throw std::invalid_argument("SolverConfig: tail_tol must be positive");
    SolverConfig out = cfg;
    if (out.T_trunc <= 0.0) out.T_trunc = auto_horizon(problem.F.C_F, problem.split.lambda_m1(), cfg.tail_tol, cfg.dt);
    const double steps = out.T_trunc / out.dt;
    if (std::abs(steps - std::round(steps)) > 1e-6)
        throw std::invalid_argument("SolverConfig: T_trunc must be a multiple of dt");
    const double R = std::isfinite(problem.F.R) ? problem.F.R : 1.0;
    if (out.grid_extent <= 0.0) out.grid_extent = 1.25 * R;
    if (out.grid_h <= 0.0) out.grid_h = R / 16.0;
    return out;
}

/// Regular lattice over [-extent, extent]^m.
struct GridSpec {
    std::size_t m = 1;
    double extent = 1.0;
    double h = 1.0;
    std::size_t per_axis = 1;

    static GridSpec create(std::size_t m, double extent, double h) {
        if (m < 1 || m > 3) throw std::invalid_argument("GridSpec: grids support 1 <= m <= 3");
        if (!(extent > 0.0) || !(h > 0.0)) throw std::invalid_argument("GridSpec: extent and h must be positive");
        GridSpec g;
        g.m = m;
        g.h = h;
        const auto half = static_cast<std::size_t>(std::ceil(extent / h - 1e-9));
        g.per_axis = 2 * half + 1;
        g.extent = h * static_cast<double>(half);
        return g;
    }

    std::size_t node_count() const {
        std::size_t c = 1;
        for (std::size_t k = 0; k < m; ++k) c *= per_axis;
        return c;
    }

    double axis(std::size_t k) const { return -extent + h * static_cast<double>(k); }

    /// Multi-index of node `idx`, last axis fastest.
    std::vector<std::size_t> multi_index(std::size_t idx) const {
        std::vector<std::size_t> mi(m);
        for (std::size_t k = m; k-- > 0;) {
            mi[k] = idx % per_axis;
            idx /= per_axis;
        }
        return mi;
    }

    std::size_t flat_index(std::span<const std::size_t> mi) const {
        std::size_t idx = 0;
        for (std::size_t k = 0; k < m; ++k) idx = idx * per_axis + mi[k];
        return idx;
    }

    Vector node(std::size_t idx) const {
        const auto mi = multi_index(idx);
        Vector p(m);
        for (std::size_t k = 0; k < m; ++k) p[k] = axis(mi[k]);
        return p;
    }
};

/// Phi on the coordinate grid: per node, the N - m Q-mode coefficients.
struct ManifoldGraph {
    GridSpec grid;
    std::size_t q_modes = 0;
    std::vector<double> values;
    double support_radius = 0.0;
    double alpha = 0.5;
    EigenData eigs;
    std::size_t m = 1;
    /// Sup-norm change of each fixed-point sweep.
    std::vector<double> history;

    static ManifoldGraph zeros(const GridSpec& grid, const ManifoldProblem& problem, double support_radius) {
        ManifoldGraph g;
        g.grid = grid;
        g.m = problem.m();
        g.q_modes = problem.q();
        g.values.assign(grid.node_count() * g.q_modes, 0.0);
        g.support_radius = support_radius;
        g.alpha = problem.alpha;
        g.eigs = problem.eigs;
        return g;
    }

    std::span<const double> node_values(std::size_t idx) const { return {values.data() + idx * q_modes, q_modes}; }
    std::span<double> node_values(std::size_t idx) { return {values.data() + idx * q_modes, q_modes}; }

    /// |p-bar|_alpha with lambda_i^alpha weights on the slow modes.
    double coord_norm(std::span<const double> p) const {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double x = p[i] * std::pow(eigs[i], alpha);
            s += x * x;
        }
        return std::sqrt(s);
    }

    /// alpha-norm of a Q-mode vector.
    double q_norm(std::span<const double> v) const {
        double s = 0.0;
        for (std::size_t i = 0; i < q_modes; ++i) {
            const double x = v[i] * std::pow(eigs[m + i], alpha);
            s += x * x;
        }
        return std::sqrt(s);
    }

    bool in_support(std::span<const double> p) const { return coord_norm(p) <= support_radius; }
};

/// Multilinear interpolation; zero outside the support ball and off the grid.
inline Vector evaluate_graph(const ManifoldGraph& phi, std::span<const double> p) {
    Vector out(phi.q_modes, 0.0);
    if (p.size() != phi.m) throw std::invalid_argument("evaluate_graph: expected m coordinates");
    if (!phi.in_support(p)) return out;
    const GridSpec& g = phi.grid;
    std::vector<std::size_t> base(g.m);
    std::vector<double> frac(g.m);
    for (std::size_t k = 0; k < g.m; ++k) {
        const double x = (p[k] + g.extent) / g.h;
        if (!(x >= 0.0) || x > static_cast<double>(g.per_axis - 1)) return out;
        auto i = static_cast<std::size_t>(std::floor(x));
        if (i >= g.per_axis - 1) i = g.per_axis - 2;
        base[k] = i;
        frac[k] = x - static_cast<double>(i);
    }
    std::vector<std::size_t> mi(g.m);
    for (std::size_t corner = 0; corner < (std::size_t{1} << g.m); ++corner) {
        double w = 1.0;
        for (std::size_t k = 0; k < g.m; ++k) {
            const bool up = (corner >> k) & 1u;
            mi[k] = base[k] + (up ? 1 : 0);
            w *= up ? frac[k] : 1.0 - frac[k];
        }
        if (w == 0.0) continue;
        const auto vals = phi.node_values(g.flat_index(mi));
        for (std::size_t i = 0; i < phi.q_modes; ++i) out[i] += w * vals[i];
    }
    return out;
}

/// Max alpha-norm difference quotient over pairs of nodes that differ by at
/// most one step along every axis.
inline double graph_lipschitz(const ManifoldGraph& phi) {
    const GridSpec& g = phi.grid;
    const std::size_t nodes = g.node_count();
    std::size_t offsets = 1;
    for (std::size_t k = 0; k < g.m; ++k) offsets *= 3;
    double L = 0.0;
    Vector diff(phi.q_modes), dp(g.m);
    std::vector<std::size_t> mj(g.m);
    for (std::size_t a = 0; a < nodes; ++a) {
        const auto mi = g.multi_index(a);
        for (std::size_t o = 0; o < offsets; ++o) {
            std::size_t code = o;
            bool valid = true, forward = false, decided = false;
            for (std::size_t k = 0; k < g.m; ++k) {
                const int step = static_cast<int>(code % 3) - 1;
                code /= 3;
                if (!decided && step != 0) {
                    forward = step > 0;
                    decided = true;
                }
                const long idx = static_cast<long>(mi[k]) + step;
                if (idx < 0 || idx >= static_cast<long>(g.per_axis)) valid = false;
                mj[k] = static_cast<std::size_t>(std::max(idx, 0L));
                dp[k] = step * g.h;
            }
            // Each unordered pair once.
            if (!valid || !decided || !forward) continue;
            const auto va = phi.node_values(a), vb = phi.node_values(g.flat_index(mj));
            for (std::size_t i = 0; i < phi.q_modes; ++i) diff[i] = va[i] - vb[i];
            L = std::max(L, phi.q_norm(diff) / phi.coord_norm(dp));
        }
    }
    return L;
}

/// Backward slow trajectory: times s_k = -k dt, slow eigen-coefficients p(s_k).
struct Trajectory {
    std::vector<double> times;
    std::vector<Vector> states;
};

namespace detail {

struct BackwardPass {
    Trajectory trajectory;
    /// Q part of F(p + Phi(j p)) at every sample, row-major K+1 x q.
    std::vector<double> q_forcing;
};

inline StateVector lift(const ManifoldProblem& problem, const ManifoldGraph& phi, std::span<const double> slow) {
    StateVector u(problem.n());
    for (std::size_t i = 0; i < problem.m(); ++i) u[i] = slow[i];
    const Vector coords = problem.coords.coords_from_slow(slow);
    const Vector q = evaluate_graph(phi, coords);
    for (std::size_t i = 0; i < problem.q(); ++i) u[problem.m() + i] = q[i];
    return u;
}

inline double slow_alpha_norm(const ManifoldProblem& problem, std::span<const double> slow) {
    double s = 0.0;
    for (std::size_t i = 0; i < problem.m(); ++i) {
        const double x = slow[i] * std::pow(problem.eigs[i], problem.alpha);
        s += x * x;
    }
    return std::sqrt(s);
}

inline BackwardPass backward_pass(const ManifoldProblem& problem, const ManifoldGraph& phi,
                                  std::span<const double> p_bar0, const SolverConfig& cfg, bool record_forcing) {
    const std::size_t m = problem.m(), q = problem.q();
    const auto K = static_cast<std::size_t>(std::llround(cfg.T_trunc / cfg.dt));
    const double dt = cfg.dt;
    BackwardPass out;
    out.trajectory.times.resize(K + 1);
    out.trajectory.states.resize(K + 1);
    if (record_forcing) out.q_forcing.assign((K + 1) * q, 0.0);

    Vector p = problem.coords.slow_from_coords(p_bar0);
    const double lm = problem.split.lambda_m();
    const double bound0 = slow_alpha_norm(problem, p) + problem.F.C_F / std::pow(lm, 1.0 - problem.alpha);

    // dp/ds = -Lambda_P p + P F(p + Phi(j p)); stores the full F value.
    StateVector f_full;
    auto rhs = [&](const Vector& x, bool keep) {
        const StateVector u = lift(problem, phi, x);
        StateVector f = problem.F(u);
        Vector d(m);
        for (std::size_t i = 0; i < m; ++i) d[i] = -problem.eigs[i] * x[i] + f[i];
        if (keep) f_full = std::move(f);
        return d;
    };
    auto store = [&](std::size_t k) {
        if (!record_forcing) return;
        for (std::size_t i = 0; i < q; ++i) out.q_forcing[k * q + i] = f_full[m + i];
    };

    Vector tmp(m);
    for (std::size_t k = 0;; ++k) {
        const double s = -static_cast<double>(k) * dt;
        out.trajectory.times[k] = s;
        out.trajectory.states[k] = p;
        const double norm = slow_alpha_norm(problem, p);
        if (!std::isfinite(norm) || norm > 10.0 * bound0 * std::exp(-lm * s) + 1e-300)
            throw BlowupError("backward slow flow left 10x the a-priori bound at s = " + std::to_string(s) +
                              "; reduce dt");
        const Vector k1 = rhs(p, true);
        store(k);
        if (k == K) break;
        for (std::size_t i = 0; i < m; ++i) tmp[i] = p[i] - 0.5 * dt * k1[i];
        const Vector k2 = rhs(tmp, false);
        for (std::size_t i = 0; i < m; ++i) tmp[i] = p[i] - 0.5 * dt * k2[i];
        const Vector k3 = rhs(tmp, false);
        for (std::size_t i = 0; i < m; ++i) tmp[i] = p[i] - dt * k3[i];
        const Vector k4 = rhs(tmp, false);
        for (std::size_t i = 0; i < m; ++i) p[i] -= dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    return out;
}

/// Exact integrals of e^{-lambda r} and e^{-lambda r} r/h over r in [0, h],
/// divided by h, as functions of x = lambda h.
inline std::pair<double, double> duhamel_factors(double x) {
    if (std::abs(x) < 1e-3) {
        const double g1 = 1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0 + x * x * x * x / 120.0;
        const double g2 = 0.5 - x / 3.0 + x * x / 8.0 - x * x * x / 30.0 + x * x * x * x / 144.0;
        return {g1, g2};
    }
    const double e = std::exp(-x);
    return {(1.0 - e) / x, (1.0 - e * (1.0 + x)) / (x * x)};
}

}  // namespace detail

inline Trajectory slow_flow_backward(const ManifoldProblem& problem, const ManifoldGraph& phi,
                                     std::span<const double> p_bar0, const SolverConfig& cfg) {
    return detail::backward_pass(problem, phi, p_bar0, resolve_config(cfg, problem), false).trajectory;
}

/// (T Phi)(p-bar): int_{-T}^0 e^{lambda_i s} [Q F(p(s) + Phi(j p(s)))]_i ds per Q-mode,
/// with F linear between samples and integrated exactly against the exponential.
inline Vector apply_T(const ManifoldProblem& problem, const ManifoldGraph& phi, std::span<const double> p_bar0,
                      const SolverConfig& cfg_in) {
    const SolverConfig cfg = resolve_config(cfg_in, problem);
    const double lm1 = problem.split.lambda_m1();
    const double tail = certified_tail(problem.F.C_F, lm1, cfg.T_trunc);
    if (tail > cfg.tail_tol)
        throw TailBudgetError("certified truncation tail " + std::to_string(tail) + " exceeds tail_tol " +
                              std::to_string(cfg.tail_tol) + " at T_trunc = " + std::to_string(cfg.T_trunc));
    const std::size_t m = problem.m(), q = problem.q();
    Vector out(q, 0.0);
    if (problem.F.is_zero) return out;
    const auto pass = detail::backward_pass(problem, phi, p_bar0, cfg, true);
    const std::size_t K = pass.trajectory.times.size() - 1;
    const double h = cfg.dt;
    for (std::size_t i = 0; i < q; ++i) {
        const double lambda = problem.eigs[m + i];
        const auto [g1, g2] = detail::duhamel_factors(lambda * h);
        const double wa = h * g2, wb = h * (g1 - g2);
        const double decay = std::exp(-lambda * h);
        double scale = 1.0;  // e^{lambda s_k}
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            // Step [s_{k+1}, s_k]: f_a at s_{k+1}, f_b at s_k.
            const double fb = pass.q_forcing[k * q + i];
            const double fa = pass.q_forcing[(k + 1) * q + i];
            acc += scale * (wa * fa + wb * fb);
            scale *= decay;
            if (scale < 1e-300) break;
        }
        out[i] = acc;
    }
    return out;
}

/// Jacobi sweeps Phi_{k+1}(node) = (T Phi_k)(node) from Phi_0 = 0 until the
/// sup-node alpha-norm change drops below fp_tol.
inline ManifoldGraph fixed_point(const ManifoldProblem& problem, const SolverConfig& cfg_in) {
    const SolverConfig cfg = resolve_config(cfg_in, problem);
    const double L = problem.F.L_F, a = problem.alpha;
    const double lm = problem.split.lambda_m(), lm1 = problem.split.lambda_m1();
    const double c1 = std::pow(lm, 1.0 - a) - 12.0 * L / (1.0 - a);
    const double c2 = (lm1 - lm) - 6.0 * L * (std::pow(lm1, a) + std::pow(lm, a));
    if (c1 < 0.0 || c2 < 0.0)
        throw GapConditionError("gap conditions fail for m = " + std::to_string(problem.m()) + " with L_F = " +
                                std::to_string(L) + " (margins " + std::to_string(c1) + ", " + std::to_string(c2) +
                                ")");
    const double tail = certified_tail(problem.F.C_F, lm1, cfg.T_trunc);
    if (tail > cfg.tail_tol)
        throw TailBudgetError("certified truncation tail " + std::to_string(tail) + " exceeds tail_tol " +
                              std::to_string(cfg.tail_tol));

    const GridSpec grid = GridSpec::create(problem.m(), cfg.grid_extent, cfg.grid_h);
    const double R = std::isfinite(problem.F.R) ? problem.F.R : cfg.grid_extent;
    ManifoldGraph current = ManifoldGraph::zeros(grid, problem, R);
    std::vector<std::size_t> active;
    for (std::size_t idx = 0; idx < grid.node_count(); ++idx)
        if (current.in_support(grid.node(idx))) active.push_back(idx);

    std::size_t rising = 0;
    for (std::size_t iter = 0; iter < cfg.fp_max_iter; ++iter) {
        ManifoldGraph next = current;
        std::vector<double> change(active.size(), 0.0);
        parallel_for(active.size(), [&](std::size_t k) {
            const std::size_t idx = active[k];
            const Vector value = apply_T(problem, current, grid.node(idx), cfg);
            auto slot = next.node_values(idx);
            Vector diff(value.size());
            for (std::size_t i = 0; i < value.size(); ++i) {
                diff[i] = value[i] - slot[i];
                slot[i] = value[i];
            }
            change[k] = current.q_norm(diff);
        });
        const double sup = change.empty() ? 0.0 : *std::max_element(change.begin(), change.end());
        const double prev = current.history.empty() ? std::numeric_limits<double>::infinity() : current.history.back();
        next.history = current.history;
        next.history.push_back(sup);
        current = std::move(next);
        if (sup < cfg.fp_tol) return current;
        rising = sup >= prev ? rising + 1 : 0;
        if (rising >= 3)
            throw NoContractionError("fixed-point changes failed to decrease for 3 consecutive sweeps (last " +
                                     std::to_string(sup) + ")");
    }
    throw NoContractionError("fixed point did not reach fp_tol = " + std::to_string(cfg.fp_tol) + " within " +
                             std::to_string(cfg.fp_max_iter) + " sweeps");
}

/// Successive ratios of the sweep changes.
inline std::vector<double> contraction_ratios(const ManifoldGraph& phi) {
    std::vector<double> r;
    for (std::size_t k = 1; k < phi.history.size(); ++k)
        if (phi.history[k - 1] > 0.0) r.push_back(phi.history[k] / phi.history[k - 1]);
    return r;
}

inline double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// j^{-1}(p-bar) + Phi(p-bar).
inline StateVector manifold_point(const ManifoldProblem& problem, const ManifoldGraph& phi, std::span<const double> p_bar) {
    StateVector u = problem.coords.from_coords(p_bar);
    const Vector q = evaluate_graph(phi, p_bar);
    for (std::size_t i = 0; i < problem.q(); ++i) u[problem.m() + i] = q[i];
    return u;
}

/// |Q u - Phi(j(P u))|_alpha.
inline double distance_to_graph(const ManifoldProblem& problem, const ManifoldGraph& phi, const StateVector& u) {
    const std::size_t m = problem.m();
    const Vector coords = problem.coords.coords_from_slow(std::span<const double>(u.coeffs()).subspan(0, m));
    const Vector g = evaluate_graph(phi, coords);
    Vector d(problem.q());
    for (std::size_t i = 0; i < problem.q(); ++i) d[i] = u[m + i] - g[i];
    return phi.q_norm(d);
}

namespace detail {

/// Forward RK4 of u' = -A u + F(u), sampled every dt; the internal step keeps
/// step * lambda_N <= 0.25. Calls sample(t, u) at t = 0, dt, 2 dt, ...
template <typename Sample>
void integrate_forward(const ManifoldProblem& problem, StateVector u, double horizon, double dt, Sample&& sample) {
    const std::size_t n = problem.n();
    const double lmax = problem.eigs[n - 1];
    const auto sub = static_cast<std::size_t>(std::max(1.0, std::ceil(dt * lmax / 0.25)));
    const double step = dt / static_cast<double>(sub);
    const auto samples = static_cast<std::size_t>(std::llround(horizon / dt));
    const double a = problem.alpha, l1 = problem.eigs[0];
    const double limit = 10.0 * (frac_norm(u, a, problem.eigs) +
                                 problem.F.C_F * (std::pow(l1, a - 1.0) / (1.0 - a) + std::pow(l1, a - 1.0)));
    auto rhs = [&](const StateVector& x) {
        StateVector d = problem.F(x);
        for (std::size_t i = 0; i < n; ++i) d[i] -= problem.eigs[i] * x[i];
        return d;
    };
    sample(0.0, u);
    for (std::size_t k = 1; k <= samples; ++k) {
        for (std::size_t s = 0; s < sub; ++s) {
            const StateVector k1 = rhs(u);
            const StateVector k2 = rhs(u + 0.5 * step * k1);
            const StateVector k3 = rhs(u + 0.5 * step * k2);
            const StateVector k4 = rhs(u + step * k3);
            u += (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        const double norm = frac_norm(u, a, problem.eigs);
        if (!std::isfinite(norm) || norm > limit + 1e-12)
            throw BlowupError("forward trajectory left 10x the a-priori bound at t = " +
                              std::to_string(static_cast<double>(k) * dt));
        sample(static_cast<double>(k) * dt, u);
    }
}

}  // namespace detail

/// Sup over sampled times of the distance from a forward trajectory to the graph.
inline double invariance_residual(const ManifoldProblem& problem, const ManifoldGraph& phi,
                                  const StateVector& u0_on_manifold, double horizon, double dt) {
    double worst = 0.0;
    detail::integrate_forward(problem, u0_on_manifold, horizon, dt, [&](double, const StateVector& u) {
        worst = std::max(worst, distance_to_graph(problem, phi, u));
    });
    return worst;
}

struct AttractionFit {
    double rate = std::numeric_limits<double>::quiet_NaN();
    std::size_t points = 0;
};

/// Least-squares slope of log(distance to graph) against t over the samples
/// where the distance exceeds 1e-10; NaN when fewer than three remain.
inline AttractionFit attraction_rate(const ManifoldProblem& problem, const ManifoldGraph& phi,
                                     const StateVector& u0_off, double horizon, double dt) {
    std::vector<double> ts, ls;
    detail::integrate_forward(problem, u0_off, horizon, dt, [&](double t, const StateVector& u) {
        const double d = distance_to_graph(problem, phi, u);
        if (d > 1e-10) {
            ts.push_back(t);
            ls.push_back(std::log(d));
        }
    });
    AttractionFit fit;
    fit.points = ts.size();
    if (ts.size() < 3) return fit;
    const double n = static_cast<double>(ts.size());
    const double mt = std::accumulate(ts.begin(), ts.end(), 0.0) / n;
    const double ml = std::accumulate(ls.begin(), ls.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < ts.size(); ++k) {
        sxy += (ts[k] - mt) * (ls[k] - ml);
        sxx += (ts[k] - mt) * (ts[k] - mt);
    }
    fit.rate = sxy / sxx;
    return fit;
}

/// Error budget terms for the invariance check.
struct InvarianceBudget {
    double fp_tol = 0.0;
    double tail = 0.0;
    double quadrature = 0.0;
    double interpolation = 0.0;

    double total() const { return 10.0 * (fp_tol + tail + quadrature + interpolation); }
};

/// Quadrature term: sup over sampled nodes of |T_dt Phi - T_{dt/2} Phi|;
/// interpolation term: h^2 max|second difference / h^2| / 8 along each axis.
inline InvarianceBudget invariance_budget(const ManifoldProblem& problem, const ManifoldGraph& phi,
                                          const SolverConfig& cfg_in, std::size_t node_stride = 4) {
    const SolverConfig cfg = resolve_config(cfg_in, problem);
    InvarianceBudget b;
    b.fp_tol = cfg.fp_tol;
    b.tail = certified_tail(problem.F.C_F, problem.split.lambda_m1(), cfg.T_trunc);
    SolverConfig half = cfg;
    half.dt = cfg.dt / 2.0;
    const GridSpec& g = phi.grid;
    std::vector<std::size_t> picks;
    for (std::size_t idx = 0; idx < g.node_count(); idx += std::max<std::size_t>(node_stride, 1))
        if (phi.in_support(g.node(idx))) picks.push_back(idx);
    std::vector<double> quad(picks.size(), 0.0);
    parallel_for(picks.size(), [&](std::size_t k) {
        const Vector p = g.node(picks[k]);
        const Vector a = apply_T(problem, phi, p, cfg);
        const Vector c = apply_T(problem, phi, p, half);
        Vector d(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - c[i];
        quad[k] = phi.q_norm(d);
    });
    for (double x : quad) b.quadrature = std::max(b.quadrature, x);

    Vector second(phi.q_modes);
    for (std::size_t idx = 0; idx < g.node_count(); ++idx) {
        auto mi = g.multi_index(idx);
        for (std::size_t k = 0; k < g.m; ++k) {
            if (mi[k] == 0 || mi[k] + 1 >= g.per_axis) continue;
            auto lo = mi, hi = mi;
            --lo[k];
            ++hi[k];
            const auto v0 = phi.node_values(g.flat_index(lo)), v1 = phi.node_values(idx),
                       v2 = phi.node_values(g.flat_index(hi));
            for (std::size_t i = 0; i < phi.q_modes; ++i) second[i] = v0[i] - 2.0 * v1[i] + v2[i];
            b.interpolation = std::max(b.interpolation, phi.q_norm(second) / 8.0);
        }
    }
    return b;
}

}  // namespace manifold_gap
