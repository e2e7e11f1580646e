#pragma once

// Perturbation families, eps-sweeps of the manifold distance against
// B = tau |log tau| + rho, rate fits and report persistence.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "manifold_gap/errors.hpp"
#include "manifold_gap/estimates.hpp"
#include "manifold_gap/io.hpp"
#include "manifold_gap/lyapunov_perron.hpp"
#include "manifold_gap/nonlinearity.hpp"
#include "manifold_gap/spectral_core.hpp"

namespace manifold_gap {

inline constexpr const char* kSchemaVersion = "manifold-gap/1";

/// Base spectra: lambda_i = i^2, or lambda_i = i for i <= slow and i + gap - 1 beyond.
inline EigenData quadratic_spectrum(std::size_t n) {
    Vector ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = static_cast<double>((i + 1) * (i + 1));
    return EigenData::create(std::move(ev));
}

inline EigenData linear_gapped_spectrum(std::size_t n, std::size_t slow, double gap) {
    if (!(gap >= 1.0)) throw std::invalid_argument("linear-gapped spectrum: gap >= 1 required");
    Vector ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = static_cast<double>(i + 1) + (i >= slow ? gap - 1.0 : 0.0);
    return EigenData::create(std::move(ev));
}

/// Product of Givens rotations of angle theta on the given 1-based mode pairs.
inline Matrix givens_product(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& pairs, double theta) {
    Matrix B = Matrix::identity(n);
    const double c = std::cos(theta), s = std::sin(theta);
    for (const auto& [a, b] : pairs) {
        const std::size_t i = a - 1, j = b - 1;
        // B <- B G, with G the rotation in the (i, j) plane.
        for (std::size_t r = 0; r < n; ++r) {
            const double x = B(r, i), y = B(r, j);
            B(r, i) = c * x + s * y;
            B(r, j) = -s * x + c * y;
        }
    }
    return B;
}

struct FamilyParams {
    std::string kind = "eigen_shift";  // none | eigen_shift | rotation | forcing_shift | combined
    /// Per-mode shift direction delta_i; a single entry is broadcast.
    Vector delta{1.0};
    std::vector<std::pair<std::size_t, std::size_t>> pairs{{1, 2}, {2, 3}};
    /// |q| of the forcing offset.
    double forcing = 0.01;
};

/// The perturbed problem at one value of eps.
struct ProblemInstance {
    double eps = 0.0;
    EigenData eigs;
    ComparisonPair pair;
    NonlinearitySpec F;
    std::optional<double> analytic_tau;
    std::optional<double> analytic_rho;
};

struct PerturbationFamily {
    std::string name;
    EigenData eigs0;
    NonlinearitySpec F0;
    double alpha = 0.5;
    std::size_t m = 1;
    std::function<ProblemInstance(double)> generator;
};

/// Offset direction of the forcing shift: q_i proportional to 2^{-(i-1)}, |q| = forcing.
inline StateVector forcing_direction(std::size_t n, double forcing) {
    StateVector q(n);
    for (std::size_t i = 0; i < n; ++i) q[i] = std::pow(0.5, static_cast<double>(i));
    q *= forcing / euclidean_norm(q.span());
    return q;
}

/// Smallest m admissible for the family's own nonlinearity at that m.
inline std::optional<std::size_t> choose_m(const NonlinearityParams& np, const EigenData& eigs0, double alpha,
                                           std::size_t max_m = 3) {
    for (std::size_t m = 1; m < eigs0.size() && m <= max_m; ++m) {
        const NonlinearitySpec F = make_nonlinearity(np, eigs0, alpha, m);
        if (gap_row(eigs0, eigs0, F.L_F, alpha, m).admissible) return m;
    }
    return std::nullopt;
}

inline PerturbationFamily make_family(const FamilyParams& fp, const EigenData& eigs0, const NonlinearityParams& np,
                                      double alpha, std::size_t m) {
    static const std::vector<std::string> kinds{"none", "eigen_shift", "rotation", "forcing_shift", "combined"};
    if (std::find(kinds.begin(), kinds.end(), fp.kind) == kinds.end())
        throw std::invalid_argument("unknown perturbation family '" + fp.kind + "'");
    const std::size_t n = eigs0.size();
    if (m < 1 || m >= n) throw std::invalid_argument("make_family: need 1 <= m < N");
    const bool shift = fp.kind == "eigen_shift" || fp.kind == "combined";
    const bool rotate = fp.kind == "rotation" || fp.kind == "combined";
    const bool force = fp.kind == "forcing_shift" || fp.kind == "combined";
    Vector delta(n, 0.0);
    if (shift) {
        if (fp.delta.size() != 1 && fp.delta.size() != n)
            throw std::invalid_argument("eigen_shift: delta must have 1 or N entries");
        for (std::size_t i = 0; i < n; ++i) delta[i] = fp.delta.size() == 1 ? fp.delta[0] : fp.delta[i];
    }
    if (rotate) {
        if (fp.pairs.empty()) throw std::invalid_argument("rotation: at least one mode pair required");
        for (const auto& [a, b] : fp.pairs)
            if (a < 1 || b < 1 || a > n || b > n || a == b)
                throw std::invalid_argument("rotation: mode pairs must be distinct indices in 1..N");
    }

    PerturbationFamily fam;
    fam.name = fp.kind;
    fam.eigs0 = eigs0;
    fam.alpha = alpha;
    fam.m = m;
    fam.F0 = make_nonlinearity(np, eigs0, alpha, m);
    const StateVector q = forcing_direction(n, fp.forcing);

    fam.generator = [=, F0 = fam.F0](double eps) {
        if (eps < 0.0) throw std::invalid_argument("generator: eps must be nonnegative");
        ProblemInstance inst;
        inst.eps = eps;
        if (eps == 0.0) {
            inst.eigs = eigs0;
            inst.pair = ComparisonPair::identity(n);
            inst.F = F0;
            inst.analytic_tau = 0.0;
            inst.analytic_rho = 0.0;
            return inst;
        }
        Vector ev = eigs0.eigenvalues();
        for (std::size_t i = 0; i < n; ++i) ev[i] += eps * delta[i];
        for (std::size_t i = 1; i < n; ++i)
            if (ev[i] < ev[i - 1]) throw std::invalid_argument("eigen_shift: shifted eigenvalues lose their order");
        if (!(ev[m - 1] < ev[m]))
            throw GapConditionError("perturbation closes the spectral gap at m = " + std::to_string(m));
        Matrix basis = rotate ? givens_product(n, fp.pairs, eps) : Matrix::identity(n);
        inst.eigs = EigenData::create(std::move(ev), std::move(basis));
        inst.pair = ComparisonPair::from_ambient(Matrix::identity(n), eigs0, inst.eigs);
        const ComparisonNorms norms = comparison_norms(inst.pair, eigs0, inst.eigs, alpha);
        if (norms.max() > 2.0)
            throw std::invalid_argument("perturbation at eps = " + std::to_string(eps) +
                                        " violates |E|, |M| <= 2 (largest norm " + std::to_string(norms.max()) + ")");
        const StateVector offset = q * eps;
        const NonlinearitySpec inner = force ? make_nonlinearity(np, eigs0, alpha, m, &offset) : F0;
        inst.F = transport(inner, inst.pair, eigs0, inst.eigs);
        if (fp.kind == "eigen_shift") {
            double tau = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double le = inst.eigs[i], l0 = eigs0[i];
                tau = std::max(tau, std::pow(le, alpha) * std::abs(le - l0) / (le * l0));
            }
            inst.analytic_tau = tau;
        }
        if (fp.kind == "forcing_shift") inst.analytic_tau = 0.0;
        // F_eps(E u) - E F_0(u) = E theta(u) eps q with E orthogonal.
        inst.analytic_rho = force ? eps * fp.forcing : 0.0;
        return inst;
    };
    return fam;
}

/// B = tau max(|log tau|, 1) + rho, or rho when tau = 0.
inline double rate_bound(double tau, double rho) {
    if (tau == 0.0) return rho;
    return tau * std::max(std::abs(std::log(tau)), 1.0) + rho;
}

struct SweepRecord {
    double eps = 0.0;
    double tau = 0.0;
    double rho = 0.0;
    std::size_t m = 0;
    double dist = 0.0;
    double bound = 0.0;
    double ratio = 0.0;
    Vector argmax;
    double L_F = 0.0;
    std::size_t iterations = 0;
    double median_contraction = 0.0;
    double graph_lipschitz = 0.0;

    friend bool operator==(const SweepRecord&, const SweepRecord&) = default;
};

struct SweepReport {
    std::string schema = kSchemaVersion;
    std::string family;
    double alpha = 0.5;
    std::vector<SweepRecord> records;
    std::optional<double> slope_eps;
    std::optional<double> slope_bound;
    std::uint64_t seed = 0;
    Json config = Json::object();

    friend bool operator==(const SweepReport&, const SweepReport&) = default;
};

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;
};

inline LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() < 2 || x.size() != y.size()) throw InsufficientDataError("least squares needs at least two points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) mx += x[k], my += y[k];
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) sxy += (x[k] - mx) * (y[k] - my), sxx += (x[k] - mx) * (x[k] - mx);
    if (sxx == 0.0) throw InsufficientDataError("least squares needs distinct abscissae");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ss = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) ss += std::pow(y[k] - f.intercept - f.slope * x[k], 2);
    f.residual = std::sqrt(ss / n);
    return f;
}

struct RateFit {
    LineFit eps;
    std::optional<LineFit> bound;
};

/// log d against log eps, and log d against log B where B > 0.
inline RateFit fit_rate(const SweepReport& report) {
    std::vector<double> le, lb, ld, ldb;
    for (const auto& r : report.records) {
        if (!(r.eps > 0.0 && r.dist > 0.0)) continue;
        le.push_back(std::log(r.eps));
        ld.push_back(std::log(r.dist));
        if (r.bound > 0.0) {
            lb.push_back(std::log(r.bound));
            ldb.push_back(std::log(r.dist));
        }
    }
    if (le.size() < 3)
        throw InsufficientDataError("fit_rate needs at least 3 records with eps > 0 and d > 0 (have " +
                                    std::to_string(le.size()) + ")");
    RateFit fit;
    fit.eps = least_squares(le, ld);
    if (lb.size() >= 3) fit.bound = least_squares(lb, ldb);
    return fit;
}

struct SweepOptions {
    /// Certified L_F above this is refused; 0 disables the cap.
    double L_F_budget = 0.0;
    std::size_t rho_samples = 2000;
    std::uint64_t seed = 0;
    Json config = Json::object();
};

struct BuiltManifold {
    ProblemInstance instance;
    ManifoldProblem problem;
    ManifoldGraph graph;
};

/// Grid shared by every eps: extent 1.25 R_0 and spacing R_0 / 16 unless set.
inline SolverConfig shared_grid_config(const SolverConfig& cfg, const NonlinearitySpec& F0) {
    SolverConfig out = cfg;
    const double R = std::isfinite(F0.R) ? F0.R : 1.0;
    if (out.grid_extent <= 0.0) out.grid_extent = 1.25 * R;
    if (out.grid_h <= 0.0) out.grid_h = R / 16.0;
    return out;
}

inline BuiltManifold build_instance(const PerturbationFamily& family, double eps, const SolverConfig& cfg,
                                    double L_F_budget = 0.0) {
    BuiltManifold b;
    b.instance = family.generator(eps);
    const double L = std::max(family.F0.L_F, b.instance.F.L_F);
    if (L_F_budget > 0.0 && L > L_F_budget)
        throw GapConditionError("certified L_F = " + std::to_string(L) + " exceeds the budget " +
                                std::to_string(L_F_budget) + " at eps = " + std::to_string(eps));
    const GapRow row = gap_row(family.eigs0, b.instance.eigs, L, family.alpha, family.m);
    if (!row.admissible)
        throw GapConditionError("gap conditions fail at eps = " + std::to_string(eps) + " for m = " +
                                std::to_string(family.m) + " with L_F = " + std::to_string(L));
    b.problem = ManifoldProblem::create(b.instance.eigs, family.m, b.instance.pair, b.instance.F);
    b.graph = fixed_point(b.problem, shared_grid_config(cfg, family.F0));
    return b;
}

/// max over nodes of |Phi_eps(p) - E Phi_0(p)|_{X_eps^alpha}, with the arg-max node.
inline std::pair<double, Vector> manifold_distance(const BuiltManifold& eps_run, const BuiltManifold& base) {
    const ManifoldGraph& ge = eps_run.graph;
    const ManifoldGraph& g0 = base.graph;
    const std::size_t n = eps_run.problem.n(), m = eps_run.problem.m();
    double worst = 0.0;
    std::size_t arg = 0;
    for (std::size_t idx = 0; idx < ge.grid.node_count(); ++idx) {
        StateVector phi0(n), phie(n);
        const auto v0 = g0.node_values(idx), ve = ge.node_values(idx);
        for (std::size_t i = 0; i < n - m; ++i) phi0[m + i] = v0[i], phie[m + i] = ve[i];
        const StateVector diff = phie - comparison_apply(eps_run.problem.pair, Direction::E, phi0);
        const double d = frac_norm(diff, eps_run.problem.alpha, eps_run.problem.eigs);
        if (d > worst) worst = d, arg = idx;
    }
    return {worst, ge.grid.node(arg)};
}

inline SweepReport run_sweep(const PerturbationFamily& family, std::vector<double> eps_list, const SolverConfig& cfg,
                             const SweepOptions& opt = {}) {
    std::sort(eps_list.begin(), eps_list.end(), std::greater<>());
    SweepReport rep;
    rep.family = family.name;
    rep.alpha = family.alpha;
    rep.seed = opt.seed;
    rep.config = opt.config;
    const BuiltManifold base = build_instance(family, 0.0, cfg, opt.L_F_budget);
    for (double eps : eps_list) {
        const BuiltManifold run = eps == 0.0 ? base : build_instance(family, eps, cfg, opt.L_F_budget);
        SweepRecord r;
        r.eps = eps;
        r.m = family.m;
        r.L_F = run.instance.F.L_F;
        r.tau = eps == 0.0 ? 0.0 : tau_of(run.instance.eigs, family.eigs0, run.instance.pair, family.alpha);
        if (eps == 0.0) {
            r.rho = 0.0;
        } else {
            r.rho = rho_distance(run.instance.F, family.F0, run.instance.pair, opt.rho_samples, opt.seed,
                                 run.instance.analytic_rho)
                        .value();
        }
        std::tie(r.dist, r.argmax) = manifold_distance(run, base);
        r.bound = rate_bound(r.tau, r.rho);
        if (r.bound > 0.0) r.ratio = r.dist / r.bound;
        else r.ratio = r.dist == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        r.iterations = run.graph.history.size();
        const double med = median(contraction_ratios(run.graph));
        r.median_contraction = std::isfinite(med) ? med : 0.0;
        r.graph_lipschitz = graph_lipschitz(run.graph);
        rep.records.push_back(std::move(r));
    }
    try {
        const RateFit fit = fit_rate(rep);
        rep.slope_eps = fit.eps.slope;
        if (fit.bound) rep.slope_bound = fit.bound->slope;
    } catch (const InsufficientDataError&) {
    }
    return rep;
}

inline Json report_to_json(const SweepReport& r) {
    Json j;
    j["schema"] = r.schema;
    j["family"] = r.family;
    j["alpha"] = r.alpha;
    j["seed"] = r.seed;
    j["slope_eps"] = r.slope_eps ? Json(*r.slope_eps) : Json(nullptr);
    j["slope_bound"] = r.slope_bound ? Json(*r.slope_bound) : Json(nullptr);
    j["config"] = r.config;
    Json recs = Json::array();
    for (const auto& x : r.records)
        recs.push_back({{"eps", x.eps},
                        {"tau", x.tau},
                        {"rho", x.rho},
                        {"m", x.m},
                        {"dist", x.dist},
                        {"bound", x.bound},
                        {"ratio", x.ratio},
                        {"argmax", x.argmax},
                        {"L_F", x.L_F},
                        {"iterations", x.iterations},
                        {"median_contraction", x.median_contraction},
                        {"graph_lipschitz", x.graph_lipschitz}});
    j["records"] = recs;
    return j;
}

inline SweepReport report_from_json(const Json& j) {
    const std::string version = j.value("schema", std::string("<missing>"));
    if (version != kSchemaVersion)
        throw SchemaError("report schema version '" + version + "' does not match expected '" + kSchemaVersion + "'");
    SweepReport r;
    r.schema = version;
    r.family = j.at("family").get<std::string>();
    r.alpha = j.at("alpha").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    if (!j.at("slope_eps").is_null()) r.slope_eps = j.at("slope_eps").get<double>();
    if (!j.at("slope_bound").is_null()) r.slope_bound = j.at("slope_bound").get<double>();
    r.config = j.at("config");
    for (const auto& x : j.at("records")) {
        SweepRecord s;
        s.eps = x.at("eps").get<double>();
        s.tau = x.at("tau").get<double>();
        s.rho = x.at("rho").get<double>();
        s.m = x.at("m").get<std::size_t>();
        s.dist = x.at("dist").get<double>();
        s.bound = x.at("bound").get<double>();
        s.ratio = x.at("ratio").is_null() ? std::numeric_limits<double>::infinity() : x.at("ratio").get<double>();
        s.argmax = x.at("argmax").get<Vector>();
        s.L_F = x.at("L_F").get<double>();
        s.iterations = x.at("iterations").get<std::size_t>();
        s.median_contraction = x.at("median_contraction").get<double>();
        s.graph_lipschitz = x.at("graph_lipschitz").get<double>();
        r.records.push_back(std::move(s));
    }
    return r;
}

inline std::string report_to_csv(const SweepReport& r) {
    std::string out = "eps,tau,rho,dist,bound,ratio\n";
    for (const auto& x : r.records)
        out += format_double(x.eps) + "," + format_double(x.tau) + "," + format_double(x.rho) + "," +
               format_double(x.dist) + "," + format_double(x.bound) + "," + format_double(x.ratio) + "\n";
    return out;
}

/// Companion CSV path: the JSON path with its extension replaced by .csv.
inline std::string csv_path_for(const std::string& json_path) {
    const auto slash = json_path.find_last_of('/');
    const auto dot = json_path.find_last_of('.');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return json_path + ".csv";
    return json_path.substr(0, dot) + ".csv";
}

inline void write_report(const SweepReport& r, const std::string& path) {
    write_text(path, report_to_json(r).dump(2) + "\n");
    write_text(csv_path_for(path), report_to_csv(r));
}

inline SweepReport read_report(const std::string& path) {
    Json j;
    try {
        j = Json::parse(read_text(path));
    } catch (const Json::parse_error& e) {
        throw SchemaError("'" + path + "' is not valid JSON: " + e.what());
    }
    return report_from_json(j);
}

}  // namespace manifold_gap
