#pragma once

// JSON and CSV forms of the library's value types.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "manifold_gap/errors.hpp"
#include "manifold_gap/estimates.hpp"
#include "manifold_gap/lyapunov_perron.hpp"
#include "manifold_gap/spectral_core.hpp"

namespace manifold_gap {

using Json = nlohmann::json;

inline Json matrix_to_json(const Matrix& a) {
    Json rows = Json::array();
    for (std::size_t r = 0; r < a.rows(); ++r) rows.push_back(Vector(a.row(r).begin(), a.row(r).end()));
    return rows;
}

inline Matrix matrix_from_json(const Json& j, const std::string& what) {
    if (!j.is_array()) throw SchemaError(what + ": expected an array of rows");
    const std::size_t n = j.size();
    Matrix a(n, n);
    for (std::size_t r = 0; r < n; ++r) {
        if (!j[r].is_array() || j[r].size() != n) throw SchemaError(what + ": expected a square matrix");
        for (std::size_t c = 0; c < n; ++c) a(r, c) = j[r][c].get<double>();
    }
    return a;
}

/// {"eigenvalues": [...], "basis": [[...]], "E": [[...]]}; basis and E are
/// omitted when they are the identity. E is written in the ambient frame.
inline Json spectral_to_json(const EigenData& eigs, const ComparisonPair* pair = nullptr,
                             const EigenData* eigs0 = nullptr) {
    Json j;
    j["eigenvalues"] = eigs.eigenvalues();
    if (!(eigs.basis() == Matrix::identity(eigs.size()))) j["basis"] = matrix_to_json(eigs.basis());
    if (pair && eigs0) {
        const Matrix E = pair->ambient_E(*eigs0, eigs);
        if ((E - Matrix::identity(E.rows())).max_abs() > 0.0) j["E"] = matrix_to_json(E);
    }
    return j;
}

inline EigenData eigen_data_from_json(const Json& j) {
    if (!j.contains("eigenvalues")) throw SchemaError("spectral document: missing \"eigenvalues\"");
    Vector ev = j.at("eigenvalues").get<Vector>();
    Matrix basis;
    if (j.contains("basis")) basis = matrix_from_json(j.at("basis"), "basis");
    return EigenData::create(std::move(ev), std::move(basis));
}

/// Comparison pair of a spectral document against the base operator.
inline ComparisonPair comparison_from_json(const Json& j, const EigenData& eigs0, const EigenData& eigs_eps) {
    if (!j.contains("E")) return ComparisonPair::from_ambient(Matrix::identity(eigs0.size()), eigs0, eigs_eps);
    return ComparisonPair::from_ambient(matrix_from_json(j.at("E"), "E"), eigs0, eigs_eps);
}

inline Json graph_to_json(const ManifoldGraph& g) {
    Json j;
    j["m"] = g.m;
    j["alpha"] = g.alpha;
    j["R"] = g.support_radius;
    j["grid"] = {{"extent", g.grid.extent}, {"h", g.grid.h}, {"per_axis", g.grid.per_axis}};
    j["q_modes"] = g.q_modes;
    j["values"] = g.values;
    j["history"] = g.history;
    return j;
}

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// One row per node: coordinates, |Phi|_alpha and the first `leading` Q-modes.
inline std::string graph_to_csv(const ManifoldGraph& g, std::size_t leading = 4) {
    std::ostringstream out;
    const std::size_t lead = std::min(leading, g.q_modes);
    for (std::size_t k = 0; k < g.m; ++k) out << "p" << k + 1 << ",";
    out << "phi_norm";
    for (std::size_t i = 0; i < lead; ++i) out << ",q" << g.m + i + 1;
    out << "\n";
    for (std::size_t idx = 0; idx < g.grid.node_count(); ++idx) {
        const Vector p = g.grid.node(idx);
        for (double x : p) out << format_double(x) << ",";
        const auto v = g.node_values(idx);
        out << format_double(g.q_norm(v));
        for (std::size_t i = 0; i < lead; ++i) out << "," << format_double(v[i]);
        out << "\n";
    }
    return out.str();
}

inline Json gap_report_to_json(const GapReport& r) {
    Json j;
    j["L_F"] = r.L_F;
    j["alpha"] = r.alpha;
    j["admissible"] = r.admissible;
    j["chosen"] = r.chosen ? Json(*r.chosen) : Json(nullptr);
    Json rows = Json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"m", row.m},
                        {"margin_2_13", row.margin_2_13},
                        {"margin_2_14", row.margin_2_14},
                        {"margin_4_3a", row.margin_4_3a},
                        {"margin_4_3b", row.margin_4_3b},
                        {"margin_separation", row.margin_separation},
                        {"admissible", row.admissible}});
    j["rows"] = rows;
    return j;
}

inline Json lemma_report_to_json(const LemmaCheckReport& r) {
    return {{"lemma", r.lemma},
            {"grid", r.grid},
            {"worst_ratio", std::isfinite(r.worst_ratio) ? Json(r.worst_ratio) : Json("inf")},
            {"violations", r.violations},
            {"samples", r.samples},
            {"max_identity_error", r.max_identity_error}};
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f << text;
    if (!f) throw std::runtime_error("failed writing '" + path + "'");
}

inline std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for reading");
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

}  // namespace manifold_gap
