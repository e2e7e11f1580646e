#pragma once

// Command-line front end: run configuration, schema validation and the
// gap-check / build / sweep / verify subcommands. Exit codes: 0 success,
// 1 mathematical failure, 2 usage or configuration error.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "manifold_gap/errors.hpp"
#include "manifold_gap/estimates.hpp"
#include "manifold_gap/harness.hpp"
#include "manifold_gap/io.hpp"
#include "manifold_gap/lyapunov_perron.hpp"
#include "manifold_gap/nonlinearity.hpp"
#include "manifold_gap/schema_text.hpp"
#include "manifold_gap/spectral_core.hpp"

namespace manifold_gap {

// ---------------------------------------------------------------- schema ---

/// Validator for the JSON-schema subset used by the run configuration:
/// type, properties, additionalProperties, required, enum, items, minItems,
/// maxItems, minLength, minimum, maximum, exclusiveMinimum, exclusiveMaximum.
class SchemaValidator {
public:
    explicit SchemaValidator(Json schema) : schema_(std::move(schema)) {}

    std::vector<std::string> errors(const Json& doc) const {
        std::vector<std::string> out;
        check(doc, schema_, "$", out);
        return out;
    }

private:
    static bool has_type(const Json& v, const std::string& t) {
        if (t == "object") return v.is_object();
        if (t == "array") return v.is_array();
        if (t == "string") return v.is_string();
        if (t == "boolean") return v.is_boolean();
        if (t == "integer") return v.is_number_integer();
        if (t == "number") return v.is_number();
        if (t == "null") return v.is_null();
        return false;
    }

    static void check(const Json& v, const Json& s, const std::string& path, std::vector<std::string>& out) {
        if (s.contains("type")) {
            const std::string t = s["type"].get<std::string>();
            if (!has_type(v, t)) {
                out.push_back(path + ": expected " + t + ", got " + v.type_name());
                return;
            }
        }
        if (s.contains("enum")) {
            bool found = false;
            for (const auto& e : s["enum"]) found = found || e == v;
            if (!found) out.push_back(path + ": " + v.dump() + " is not one of " + s["enum"].dump());
        }
        if (v.is_number()) {
            const double x = v.get<double>();
            if (s.contains("minimum") && x < s["minimum"].get<double>())
                out.push_back(path + ": " + v.dump() + " is below the minimum " + s["minimum"].dump());
            if (s.contains("maximum") && x > s["maximum"].get<double>())
                out.push_back(path + ": " + v.dump() + " is above the maximum " + s["maximum"].dump());
            if (s.contains("exclusiveMinimum") && x <= s["exclusiveMinimum"].get<double>())
                out.push_back(path + ": " + v.dump() + " must be greater than " + s["exclusiveMinimum"].dump());
            if (s.contains("exclusiveMaximum") && x >= s["exclusiveMaximum"].get<double>())
                out.push_back(path + ": " + v.dump() + " must be less than " + s["exclusiveMaximum"].dump());
        }
        if (v.is_string() && s.contains("minLength") && v.get<std::string>().size() < s["minLength"].get<std::size_t>())
            out.push_back(path + ": string shorter than " + s["minLength"].dump());
        if (v.is_array()) {
            if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>())
                out.push_back(path + ": expected at least " + s["minItems"].dump() + " items");
            if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>())
                out.push_back(path + ": expected at most " + s["maxItems"].dump() + " items");
            if (s.contains("items"))
                for (std::size_t k = 0; k < v.size(); ++k)
                    check(v[k], s["items"], path + "[" + std::to_string(k) + "]", out);
        }
        if (v.is_object()) {
            if (s.contains("required"))
                for (const auto& key : s["required"])
                    if (!v.contains(key.get<std::string>()))
                        out.push_back(path + ": missing required key \"" + key.get<std::string>() + "\"");
            const Json props = s.value("properties", Json::object());
            const bool closed = s.contains("additionalProperties") && s["additionalProperties"] == false;
            for (const auto& [key, child] : v.items()) {
                if (props.contains(key)) check(child, props[key], path + "." + key, out);
                else if (closed) out.push_back(path + ": unknown key \"" + key + "\"");
            }
        }
    }

    Json schema_;
};

inline const SchemaValidator& run_config_validator() {
    static const SchemaValidator v(Json::parse(kRunConfigSchemaText));
    return v;
}

// ---------------------------------------------------------------- config ---

struct SpectrumConfig {
    std::string kind = "quadratic";
    std::size_t n = 64;
    std::size_t slow = 1;
    double gap = 100.0;
    Vector eigenvalues;
};

struct VerifyConfig {
    std::vector<double> eps{1e-1, 1e-2, 1e-3};
    std::vector<std::string> families{"eigen_shift", "rotation", "combined"};
    std::size_t samples = 1000;
};

struct RunConfig {
    SpectrumConfig spectrum;
    double alpha = 0.5;
    std::optional<std::size_t> m;
    /// Overrides the nonlinearity's certified L_F in gap-check.
    std::optional<double> L_F;
    NonlinearityParams nonlinearity;
    FamilyParams family;
    std::vector<double> eps{1e-1, 3e-2, 1e-2, 3e-3, 1e-3};
    double build_eps = 0.0;
    SolverConfig solver;
    double L_F_budget = 0.0;
    std::size_t rho_samples = 2000;
    VerifyConfig verify;
    std::uint64_t seed = 0;
    std::optional<std::string> output;
    /// The validated document, echoed into artifacts.
    Json document = Json::object();
};

inline RunConfig config_from_json(const Json& j) {
    const auto errs = run_config_validator().errors(j);
    if (!errs.empty()) {
        std::string msg = "configuration does not match schemas/run_config.schema.json:";
        for (const auto& e : errs) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    RunConfig c;
    c.document = j;
    if (j.contains("spectrum")) {
        const Json& s = j["spectrum"];
        c.spectrum.kind = s["kind"].get<std::string>();
        c.spectrum.n = s.value("n", c.spectrum.n);
        c.spectrum.slow = s.value("slow", c.spectrum.slow);
        c.spectrum.gap = s.value("gap", c.spectrum.gap);
        if (s.contains("eigenvalues")) c.spectrum.eigenvalues = s["eigenvalues"].get<Vector>();
        if (c.spectrum.kind == "explicit" && c.spectrum.eigenvalues.empty())
            throw ConfigError("$.spectrum.eigenvalues: required when kind is \"explicit\"");
        if (c.spectrum.kind != "explicit" && s.contains("eigenvalues"))
            throw ConfigError("$.spectrum.eigenvalues: only allowed when kind is \"explicit\"");
        if (c.spectrum.kind == "linear-gapped" && c.spectrum.slow >= c.spectrum.n)
            throw ConfigError("$.spectrum.slow: must be less than n");
    }
    c.alpha = j.value("alpha", c.alpha);
    if (j.contains("m")) c.m = j["m"].get<std::size_t>();
    if (j.contains("L_F")) c.L_F = j["L_F"].get<double>();
    if (j.contains("nonlinearity")) {
        const Json& s = j["nonlinearity"];
        auto& p = c.nonlinearity;
        p.family = s.value("family", p.family);
        p.C = s.value("C", p.C);
        p.decay = s.value("decay", p.decay);
        p.coupling = s.value("coupling", p.coupling);
        p.R = s.value("R", p.R);
        if (s.contains("cutoff")) {
            p.profile.inner = s["cutoff"].value("inner", p.profile.inner);
            p.profile.degree = s["cutoff"].value("degree", p.profile.degree);
        }
    }
    if (j.contains("family")) {
        const Json& s = j["family"];
        auto& f = c.family;
        f.kind = s.value("kind", f.kind);
        if (s.contains("delta")) f.delta = s["delta"].get<Vector>();
        if (s.contains("pairs")) {
            f.pairs.clear();
            for (const auto& pr : s["pairs"]) f.pairs.emplace_back(pr[0].get<std::size_t>(), pr[1].get<std::size_t>());
        }
        f.forcing = s.value("forcing", f.forcing);
    }
    if (j.contains("eps")) c.eps = j["eps"].get<std::vector<double>>();
    c.build_eps = j.value("build_eps", c.build_eps);
    if (j.contains("solver")) {
        const Json& s = j["solver"];
        auto& v = c.solver;
        v.dt = s.value("dt", v.dt);
        v.T_trunc = s.value("T_trunc", v.T_trunc);
        v.grid_extent = s.value("grid_extent", v.grid_extent);
        v.grid_h = s.value("grid_h", v.grid_h);
        v.fp_tol = s.value("fp_tol", v.fp_tol);
        v.fp_max_iter = s.value("fp_max_iter", v.fp_max_iter);
        v.tail_tol = s.value("tail_tol", v.tail_tol);
    }
    if (j.contains("sweep")) {
        c.L_F_budget = j["sweep"].value("L_F_budget", c.L_F_budget);
        c.rho_samples = j["sweep"].value("rho_samples", c.rho_samples);
    }
    if (j.contains("verify")) {
        const Json& s = j["verify"];
        if (s.contains("eps")) c.verify.eps = s["eps"].get<std::vector<double>>();
        if (s.contains("families")) c.verify.families = s["families"].get<std::vector<std::string>>();
        c.verify.samples = s.value("samples", c.verify.samples);
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("output")) c.output = j["output"].get<std::string>();
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::string text;
    try {
        text = read_text(path);
    } catch (const std::runtime_error& e) {
        throw ConfigError(e.what());
    }
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

inline EigenData make_spectrum(const SpectrumConfig& s) {
    if (s.kind == "quadratic") return quadratic_spectrum(s.n);
    if (s.kind == "linear-gapped") return linear_gapped_spectrum(s.n, s.slow, s.gap);
    return EigenData::create(s.eigenvalues);
}

/// L_F of the configured nonlinearity at slow dimension m (or the override).
inline double config_L_F(const RunConfig& c, const EigenData& eigs0, std::size_t m) {
    if (c.L_F) return *c.L_F;
    return make_nonlinearity(c.nonlinearity, eigs0, c.alpha, m).L_F;
}

/// Gap scan with each row's own L_F (families whose constants depend on m).
inline GapReport config_gap_report(const RunConfig& c, const EigenData& eigs0) {
    GapReport rep;
    rep.alpha = c.alpha;
    std::vector<double> lfs;
    for (std::size_t m = 1; m < eigs0.size(); ++m) {
        const double L = config_L_F(c, eigs0, m);
        lfs.push_back(L);
        rep.rows.push_back(gap_row(eigs0, eigs0, L, c.alpha, m));
        if (rep.rows.back().admissible) rep.admissible.push_back(m);
    }
    if (!rep.admissible.empty()) rep.chosen = rep.admissible.front();
    rep.L_F = rep.chosen ? lfs[*rep.chosen - 1] : lfs.front();
    return rep;
}

inline std::size_t resolve_m(const RunConfig& c, const EigenData& eigs0) {
    if (c.m) {
        if (*c.m >= eigs0.size()) throw ConfigError("$.m: must be less than the number of modes");
        return *c.m;
    }
    const GapReport rep = config_gap_report(c, eigs0);
    if (!rep.chosen) throw GapConditionError("no slow dimension m satisfies the gap conditions");
    if (*rep.chosen > 3)
        throw GapConditionError("smallest admissible m = " + std::to_string(*rep.chosen) +
                                " exceeds the grid limit of 3 coordinates");
    return *rep.chosen;
}

// ------------------------------------------------------------ lemma suite ---

inline const std::vector<std::string>& lemma_ids() {
    static const std::vector<std::string> ids{"3.1", "3.2", "3.4", "3.7", "3.9", "3.10", "5.1", "5.2", "5.3", "5.4"};
    return ids;
}

/// Folds `part` into `acc`: worst ratio and identity error take the max,
/// counts add up.
inline void merge_report(LemmaCheckReport& acc, const LemmaCheckReport& part) {
    acc.worst_ratio = std::max(acc.worst_ratio, part.worst_ratio);
    if (!std::isfinite(part.worst_ratio)) acc.worst_ratio = part.worst_ratio;
    acc.violations += part.violations;
    acc.samples += part.samples;
    acc.max_identity_error = std::max(acc.max_identity_error, part.max_identity_error);
}

/// Points off both spectra for the resolvent identity: samples of the slow
/// rectangle and the fast sector plus a few interior points.
inline std::vector<Complex> resolvent_probe_points(const EigenData& eigs0, std::size_t m) {
    std::vector<Complex> pts{{0.0, 0.0}, {0.5, 0.5}, {2.0, 0.0}, {0.0, 10.0}, {-0.5 * (eigs0[0] + eigs0[1]), 0.3}};
    for (const Complex& z : Contour::slow_rectangle(eigs0, m).sample_points(8)) pts.push_back(z);
    for (const Complex& z : Contour::fast_sector(eigs0, m).sample_points(16, 1e4)) pts.push_back(z);
    return pts;
}

/// Runs the selected lemma verifiers over the operator families of
/// `vc.families` at every eps of `vc.eps`; one merged report per lemma.
inline std::vector<LemmaCheckReport> run_lemma_suite(const EigenData& eigs0, double alpha, std::size_t m,
                                                     const FamilyParams& base, const VerifyConfig& vc,
                                                     std::uint64_t seed, const std::vector<std::string>& lemmas) {
    std::set<std::string> want(lemmas.begin(), lemmas.end());
    std::map<std::string, LemmaCheckReport> acc;
    auto add = [&](const LemmaCheckReport& r) {
        auto [it, fresh] = acc.try_emplace(r.lemma, LemmaCheckReport{r.lemma, ""});
        merge_report(it->second, r);
    };
    const std::vector<double> t_pos = log_grid(1e-3, 10.0, 9);
    const std::vector<double> t_neg = linear_grid(-3.0, 0.0, 13);

    if (want.count("3.1")) add(verify_semigroup_bounds(eigs0, alpha, log_grid(1e-3, 10.0, 100)));

    NonlinearityParams zero;
    zero.family = "zero";
    for (const auto& kind : vc.families) {
        FamilyParams fp = base;
        fp.kind = kind;
        const PerturbationFamily fam = make_family(fp, eigs0, zero, alpha, m);
        std::vector<std::pair<double, EigenData>> runs;
        std::uint64_t sub = 0;
        for (double eps : vc.eps) {
            const ProblemInstance inst = fam.generator(eps);
            runs.emplace_back(eps, inst.eigs);
            const double tau = tau_of(inst.eigs, eigs0, inst.pair, alpha);
            const ContourConstants cc = contour_constants(inst.eigs, eigs0, m);
            if (want.count("3.1")) add(verify_semigroup_bounds(inst.eigs, alpha, log_grid(1e-3, 10.0, 100)));
            if (want.count("3.4")) {
                const auto pts = resolvent_probe_points(eigs0, m);
                add(verify_resolvent_identity(inst.eigs, eigs0, inst.pair, alpha, tau, pts));
            }
            if (want.count("3.7")) add(verify_projection_distance(inst.eigs, eigs0, inst.pair, m, alpha, tau, cc));
            if (want.count("3.9"))
                add(verify_semigroup_distance(inst.eigs, eigs0, inst.pair, alpha, tau, t_pos, SemigroupPart::full, m, cc));
            if (want.count("5.1"))
                add(verify_semigroup_distance(inst.eigs, eigs0, inst.pair, alpha, tau, t_neg, SemigroupPart::P, m, cc));
            if (want.count("5.3"))
                add(verify_semigroup_distance(inst.eigs, eigs0, inst.pair, alpha, tau, t_pos, SemigroupPart::Q, m, cc));
            if ((want.count("3.10") || want.count("5.2")) && tau > 0.0 && tau < 1.0) {
                const double gap = eigs0[m] - eigs0[m - 1];
                for (const auto& [a, lambda] : {std::pair{1.0, eigs0[m - 1]}, std::pair{gap, eigs0[m]}}) {
                    for (const auto& r : verify_integral_bounds(tau, alpha, alpha, a, lambda))
                        if (want.count(r.lemma)) add(r);
                }
            }
            if (want.count("5.4"))
                add(verify_coordinate_comparison(inst.eigs, eigs0, inst.pair, m, alpha, tau, cc, vc.samples,
                                                 seed + 7919 * ++sub));
        }
        if (want.count("3.2")) add(verify_eigenvalue_convergence(eigs0, runs, m));
    }

    std::ostringstream grid;
    grid << "families {";
    for (std::size_t k = 0; k < vc.families.size(); ++k) grid << (k ? ", " : "") << vc.families[k];
    grid << "}, eps {";
    for (std::size_t k = 0; k < vc.eps.size(); ++k) grid << (k ? ", " : "") << vc.eps[k];
    grid << "}";
    std::vector<LemmaCheckReport> out;
    for (const auto& id : lemma_ids()) {
        if (!want.count(id)) continue;
        auto it = acc.find(id);
        LemmaCheckReport r = it != acc.end() ? it->second : LemmaCheckReport{id, ""};
        r.grid = grid.str();
        out.push_back(r);
    }
    return out;
}

// -------------------------------------------------------------- commands ---

namespace detail {

inline std::string fmt(const char* format, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, x);
    return buf;
}

inline std::string output_dir(const RunConfig& c) {
    if (!c.output) throw ConfigError("no output directory: set \"output\" in the config or pass --out");
    const std::filesystem::path p(*c.output);
    if (!std::filesystem::is_directory(p)) throw ConfigError("output directory '" + *c.output + "' does not exist");
    return *c.output;
}

inline std::string join(const std::string& dir, const std::string& file) {
    return (std::filesystem::path(dir) / file).string();
}

}  // namespace detail

inline int cmd_gap_check(const RunConfig& c, std::ostream& out) {
    const EigenData eigs0 = make_spectrum(c.spectrum);
    const GapReport rep = config_gap_report(c, eigs0);
    std::optional<std::string> dir;
    if (c.output) dir = detail::output_dir(c);
    out << "  m        L_F    (2.13)    (2.14)    (4.3a)    (4.3b)  separation\n";
    for (std::size_t m : rep.admissible) {
        const GapRow& r = rep.row(m);
        out << detail::fmt("%3.0f", static_cast<double>(m)) << detail::fmt(" %10.4g", config_L_F(c, eigs0, m))
            << detail::fmt(" %9.3g", r.margin_2_13) << detail::fmt(" %9.3g", r.margin_2_14)
            << detail::fmt(" %9.3g", r.margin_4_3a) << detail::fmt(" %9.3g", r.margin_4_3b)
            << detail::fmt(" %11.3g", r.margin_separation) << "\n";
    }
    if (rep.chosen) out << "chosen m = " << *rep.chosen << "\n";
    else out << "no admissible m\n";
    if (dir) write_text(detail::join(*dir, "gap_check.json"), gap_report_to_json(rep).dump(2) + "\n");
    return rep.chosen ? 0 : 1;
}

inline int cmd_build(const RunConfig& c, std::ostream& out) {
    const std::string dir = detail::output_dir(c);
    const EigenData eigs0 = make_spectrum(c.spectrum);
    const std::size_t m = resolve_m(c, eigs0);
    const PerturbationFamily fam = make_family(c.family, eigs0, c.nonlinearity, c.alpha, m);
    const BuiltManifold b = build_instance(fam, c.build_eps, c.solver, c.L_F_budget);
    const ManifoldGraph& g = b.graph;

    out << "m = " << m << ", nodes = " << g.grid.node_count() << ", L_F = " << detail::fmt("%.6g", b.instance.F.L_F)
        << ", eps = " << detail::fmt("%.6g", c.build_eps) << "\n";
    out << "iter   sup change      ratio\n";
    std::string log = "iteration,sup_change\n";
    for (std::size_t k = 0; k < g.history.size(); ++k) {
        out << detail::fmt("%4.0f", static_cast<double>(k + 1)) << detail::fmt(" %12.4e", g.history[k]);
        if (k > 0 && g.history[k - 1] > 0.0) out << detail::fmt(" %10.4f", g.history[k] / g.history[k - 1]);
        out << "\n";
        log += std::to_string(k + 1) + "," + format_double(g.history[k]) + "\n";
    }
    const double lip = graph_lipschitz(g);
    out << "graph Lipschitz = " << detail::fmt("%.6g", lip) << "\n";

    Json doc;
    doc["schema"] = kSchemaVersion;
    doc["graph"] = graph_to_json(g);
    doc["graph_lipschitz"] = lip;
    doc["spectrum"] = spectral_to_json(b.instance.eigs, &b.instance.pair, &eigs0);
    doc["seed"] = c.seed;
    doc["config"] = c.document;
    write_text(detail::join(dir, "graph.json"), doc.dump(2) + "\n");
    write_text(detail::join(dir, "graph.csv"), graph_to_csv(g));
    write_text(detail::join(dir, "history.csv"), log);
    return 0;
}

inline int cmd_sweep(const RunConfig& c, std::ostream& out) {
    const std::string dir = detail::output_dir(c);
    const EigenData eigs0 = make_spectrum(c.spectrum);
    const std::size_t m = resolve_m(c, eigs0);
    const PerturbationFamily fam = make_family(c.family, eigs0, c.nonlinearity, c.alpha, m);
    SweepOptions opt;
    opt.L_F_budget = c.L_F_budget;
    opt.rho_samples = c.rho_samples;
    opt.seed = c.seed;
    opt.config = c.document;
    const SweepReport rep = run_sweep(fam, c.eps, c.solver, opt);

    out << "family " << rep.family << ", m = " << m << "\n";
    out << "         eps          tau          rho            d            B      d / B\n";
    for (const auto& r : rep.records)
        out << detail::fmt("%12.4e", r.eps) << detail::fmt(" %12.4e", r.tau) << detail::fmt(" %12.4e", r.rho)
            << detail::fmt(" %12.4e", r.dist) << detail::fmt(" %12.4e", r.bound) << detail::fmt(" %10.4g", r.ratio)
            << "\n";
    out << "slope log d / log eps: " << (rep.slope_eps ? detail::fmt("%.4f", *rep.slope_eps) : std::string("n/a"))
        << "\n";
    out << "slope log d / log B:   " << (rep.slope_bound ? detail::fmt("%.4f", *rep.slope_bound) : std::string("n/a"))
        << "\n";
    write_report(rep, detail::join(dir, "sweep.json"));
    return 0;
}

inline int cmd_verify(const RunConfig& c, const std::string& selector, std::ostream& out) {
    std::vector<std::string> lemmas;
    if (selector == "all") {
        lemmas = lemma_ids();
    } else {
        const auto& ids = lemma_ids();
        if (std::find(ids.begin(), ids.end(), selector) == ids.end())
            throw ConfigError("unknown lemma selector '" + selector + "'");
        lemmas = {selector};
    }
    std::optional<std::string> dir;
    if (c.output) dir = detail::output_dir(c);
    const EigenData eigs0 = make_spectrum(c.spectrum);
    const std::size_t m = c.m ? *c.m : resolve_m(c, eigs0);
    const auto reports = run_lemma_suite(eigs0, c.alpha, m, c.family, c.verify, c.seed, lemmas);

    out << "lemma   worst ratio  violations   samples\n";
    bool ok = true;
    Json arr = Json::array();
    for (const auto& r : reports) {
        char id[16];
        std::snprintf(id, sizeof id, "%-6s", r.lemma.c_str());
        out << id << detail::fmt(" %12.4g", r.worst_ratio) << detail::fmt(" %11.0f", static_cast<double>(r.violations))
            << detail::fmt(" %9.0f", static_cast<double>(r.samples)) << "\n";
        ok = ok && r.passed();
        arr.push_back(lemma_report_to_json(r));
    }
    if (dir) write_text(detail::join(*dir, "verify.json"), Json{{"schema", kSchemaVersion}, {"reports", arr}}.dump(2) + "\n");
    return ok ? 0 : 1;
}

/// Parses arguments and dispatches; returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Inertial manifolds under perturbation: gap checks, Lyapunov-Perron builds, eps-sweeps, lemma checks"};
    app.require_subcommand(1);
    std::string config_path, out_dir, lemma = "all";
    std::optional<std::uint64_t> seed;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "Run configuration (JSON)")->required();
        sub->add_option("--out", out_dir, "Output directory (overrides \"output\")");
        sub->add_option("--seed", seed, "Seed (overrides \"seed\")");
    };
    CLI::App* gap = app.add_subcommand("gap-check", "Admissible slow dimensions");
    CLI::App* build = app.add_subcommand("build", "Build one manifold graph");
    CLI::App* sweep = app.add_subcommand("sweep", "Distance of manifolds across eps");
    CLI::App* verify = app.add_subcommand("verify", "Lemma-level inequality checks");
    for (CLI::App* sub : {gap, build, sweep, verify}) add_common(sub);
    verify->add_option("--lemma", lemma, "Lemma id (3.1 3.2 3.4 3.7 3.9 3.10 5.1 5.2 5.3 5.4) or all");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, out, err);
        return rc == 0 ? 0 : 2;
    }

    try {
        RunConfig c = load_config(config_path);
        if (!out_dir.empty()) c.output = out_dir;
        if (seed) c.seed = *seed;
        if (gap->parsed()) return cmd_gap_check(c, out);
        if (build->parsed()) return cmd_build(c, out);
        if (sweep->parsed()) return cmd_sweep(c, out);
        return cmd_verify(c, lemma, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.is_mathematical() ? 1 : 2;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace manifold_gap
