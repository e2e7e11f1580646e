#pragma once

// Finite spectral model of a self-adjoint positive operator A: diagonal action
// in an orthonormal eigenbasis, fractional-power norms, semigroup, resolvent,
// spectral projections, comparison operators and contour quadrature.
//
// Every state is stored as coefficients in the eigenbasis of the operator that
// owns its space. Cross-space maps (E, M) are matrices between coefficient
// frames; `ComparisonPair::from_ambient` converts an ambient-frame E.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "manifold_gap/errors.hpp"
#include "manifold_gap/linalg.hpp"

namespace manifold_gap {

class StateVector {
public:
    StateVector() = default;
    explicit StateVector(std::size_t n) : c_(n, 0.0) {}
    explicit StateVector(Vector coeffs) : c_(std::move(coeffs)) {}
    StateVector(std::initializer_list<double> init) : c_(init) {}

    static StateVector unit(std::size_t n, std::size_t i) {
        StateVector v(n);
        v.c_.at(i) = 1.0;
        return v;
    }

    std::size_t size() const noexcept { return c_.size(); }
    double& operator[](std::size_t i) { return c_[i]; }
    double operator[](std::size_t i) const { return c_[i]; }
    const Vector& coeffs() const noexcept { return c_; }
    Vector& coeffs() noexcept { return c_; }
    std::span<const double> span() const noexcept { return c_; }
    operator std::span<const double>() const noexcept { return c_; }

    bool all_finite() const {
        return std::all_of(c_.begin(), c_.end(), [](double x) { return std::isfinite(x); });
    }

    StateVector& operator+=(const StateVector& o) {
        check(o);
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
        return *this;
    }
    StateVector& operator-=(const StateVector& o) {
        check(o);
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
        return *this;
    }
    StateVector& operator*=(double s) {
        for (auto& x : c_) x *= s;
        return *this;
    }
    friend StateVector operator+(StateVector a, const StateVector& b) { return a += b; }
    friend StateVector operator-(StateVector a, const StateVector& b) { return a -= b; }
    friend StateVector operator*(StateVector a, double s) { return a *= s; }
    friend StateVector operator*(double s, StateVector a) { return a *= s; }
    friend bool operator==(const StateVector&, const StateVector&) = default;

private:
    void check(const StateVector& o) const {
        if (o.size() != size()) throw std::invalid_argument("state vectors have different mode counts");
    }
    Vector c_;
};

/// Eigenvalues (nondecreasing, >= 1) and an orthonormal eigenbasis whose
/// columns are expressed in a fixed ambient frame. Cheap to copy.
class EigenData {
public:
    EigenData() = default;

    /// An empty basis means the identity.
    static EigenData create(Vector eigenvalues, Matrix basis = {}) {
        const std::size_t n = eigenvalues.size();
        if (n == 0) throw std::invalid_argument("EigenData: no eigenvalues");
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(eigenvalues[i]) || eigenvalues[i] <= 0.0)
                throw std::invalid_argument("EigenData: eigenvalues must be positive and finite");
            if (i > 0 && eigenvalues[i] < eigenvalues[i - 1])
                throw std::invalid_argument("EigenData: eigenvalues must be nondecreasing");
        }
        if (eigenvalues.front() < 1.0)
            throw std::invalid_argument("EigenData: lambda_1 >= 1 required (shift the operator by cI first)");
        if (basis.empty()) {
            basis = Matrix::identity(n);
        } else {
            if (basis.rows() != n || basis.cols() != n)
                throw std::invalid_argument("EigenData: basis must be N x N");
            const Matrix gram = basis.transpose() * basis;
            if ((gram - Matrix::identity(n)).max_abs() > 1e-12)
                throw std::invalid_argument("EigenData: basis columns are not orthonormal to 1e-12");
        }
        auto impl = std::make_shared<Impl>();
        impl->eigenvalues = std::move(eigenvalues);
        impl->basis = std::move(basis);
        EigenData out;
        out.impl_ = std::move(impl);
        return out;
    }

    std::size_t size() const { return impl_ ? impl_->eigenvalues.size() : 0; }
    double operator[](std::size_t i) const { return impl_->eigenvalues[i]; }
    const Vector& eigenvalues() const { return impl_->eigenvalues; }
    const Matrix& basis() const { return impl_->basis; }

    /// (lambda_i)^alpha for every mode.
    Vector powers(double alpha) const {
        Vector w(size());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::pow(impl_->eigenvalues[i], alpha);
        return w;
    }

    friend bool operator==(const EigenData& a, const EigenData& b) {
        if (a.impl_ == b.impl_) return true;
        if (!a.impl_ || !b.impl_) return false;
        return a.impl_->eigenvalues == b.impl_->eigenvalues && a.impl_->basis == b.impl_->basis;
    }

private:
    struct Impl {
        Vector eigenvalues;
        Matrix basis;
    };
    std::shared_ptr<const Impl> impl_;
};

struct SpaceContext {
    double alpha = 0.5;
    std::size_t n_modes = 64;
    std::size_t m = 1;

    static SpaceContext create(double alpha, std::size_t n_modes, std::size_t m) {
        if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("SpaceContext: alpha must be in [0, 1)");
        if (m < 1 || m >= n_modes) throw std::invalid_argument("SpaceContext: need 1 <= m < N");
        return {alpha, n_modes, m};
    }
};

enum class Part { full, P, Q };

/// Slow/fast splitting after the first m modes.
class SpectralSplit {
public:
    SpectralSplit() = default;
    SpectralSplit(EigenData eigs, std::size_t m) : eigs_(std::move(eigs)), m_(m) {
        if (m_ < 1 || m_ > eigs_.size()) throw std::invalid_argument("SpectralSplit: need 1 <= m <= N");
        if (m_ < eigs_.size() && !(eigs_[m_ - 1] < eigs_[m_]))
            throw std::invalid_argument("SpectralSplit: lambda_m < lambda_{m+1} required");
    }

    const EigenData& eigs() const { return eigs_; }
    std::size_t m() const { return m_; }
    std::size_t n_modes() const { return eigs_.size(); }
    std::size_t q_modes() const { return eigs_.size() - m_; }
    double lambda_m() const { return eigs_[m_ - 1]; }
    double lambda_m1() const { return eigs_[m_]; }

    bool selects(Part part, std::size_t i) const {
        switch (part) {
            case Part::full: return true;
            case Part::P: return i < m_;
            case Part::Q: return i >= m_;
        }
        return false;
    }

private:
    EigenData eigs_;
    std::size_t m_ = 0;
};

inline double weighted_norm(std::span<const double> v, std::span<const double> weights) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = v[i] * weights[i];
        s += x * x;
    }
    return std::sqrt(s);
}

/// (sum_i v_i^2 lambda_i^{2 alpha})^{1/2}
inline double frac_norm(std::span<const double> v, double alpha, const EigenData& eigs) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("frac_norm: alpha must be in [0, 1]");
    if (v.size() != eigs.size()) throw std::invalid_argument("frac_norm: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = v[i] * std::pow(eigs[i], alpha);
        s += x * x;
    }
    return std::sqrt(s);
}

inline double frac_norm(const StateVector& v, double alpha, const EigenData& eigs) {
    return frac_norm(v.span(), alpha, eigs);
}

/// Mode-wise scaling by exp(-lambda_i t) on the selected mode range; other
/// modes are zeroed. Negative times are allowed only for the P part.
inline StateVector semigroup_apply(const EigenData& eigs, double t, const StateVector& v, Part part,
                                   const SpectralSplit& split) {
    if (t < 0.0 && part != Part::P)
        throw std::invalid_argument("semigroup_apply: t < 0 is only defined on the P part");
    if (v.size() != eigs.size()) throw std::invalid_argument("semigroup_apply: size mismatch");
    StateVector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        if (split.selects(part, i)) out[i] = std::exp(-eigs[i] * t) * v[i];
    return out;
}

/// (lambda - A)^{-1} v, mode-wise.
inline std::vector<Complex> resolvent_apply(const EigenData& eigs, Complex lambda, std::span<const double> v) {
    if (v.size() != eigs.size()) throw std::invalid_argument("resolvent_apply: size mismatch");
    std::vector<Complex> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Complex d = lambda - eigs[i];
        if (std::abs(d) < 1e-12) throw PoleError("resolvent_apply: lambda coincides with eigenvalue " + std::to_string(i + 1));
        out[i] = v[i] / d;
    }
    return out;
}

inline double spectrum_distance(Complex lambda, const EigenData& eigs) {
    double d = std::numeric_limits<double>::infinity();
    for (double l : eigs.eigenvalues()) d = std::min(d, std::abs(lambda - l));
    return d;
}

inline StateVector project(const SpectralSplit& split, const StateVector& v, Part which) {
    if (v.size() != split.n_modes()) throw std::invalid_argument("project: size mismatch");
    StateVector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        if (split.selects(which, i)) out[i] = v[i];
    return out;
}

/// Projector onto the selected modes as a coefficient-frame matrix.
inline Matrix projector_matrix(const SpectralSplit& split, Part which) {
    Matrix out(split.n_modes(), split.n_modes());
    for (std::size_t i = 0; i < split.n_modes(); ++i)
        if (split.selects(which, i)) out(i, i) = 1.0;
    return out;
}

/// Comparison operators E : X_0 -> X_eps and M : X_eps -> X_0 between
/// coefficient frames, with M E = I.
class ComparisonPair {
public:
    ComparisonPair() = default;

    static ComparisonPair identity(std::size_t n) {
        ComparisonPair p;
        p.E_ = Matrix::identity(n);
        p.M_ = Matrix::identity(n);
        return p;
    }

    /// For orthogonal E the left inverse is the transpose.
    static ComparisonPair orthogonal(Matrix E) {
        if (E.rows() != E.cols()) throw std::invalid_argument("ComparisonPair: E must be square");
        const std::size_t n = E.rows();
        if ((E.transpose() * E - Matrix::identity(n)).max_abs() > 1e-12)
            throw std::invalid_argument("ComparisonPair::orthogonal: E is not orthogonal");
        ComparisonPair p;
        p.M_ = E.transpose();
        p.E_ = std::move(E);
        return p;
    }

    /// General injective E; M is the least-squares left inverse (E^T E)^{-1} E^T.
    static ComparisonPair from_extension(Matrix E) {
        if (E.rows() != E.cols()) throw std::invalid_argument("ComparisonPair: E must be square");
        const std::size_t n = E.rows();
        const Matrix Et = E.transpose();
        Matrix gram = Et * E;
        // Gauss-Jordan with partial pivoting on [gram | E^T].
        Matrix rhs = Et;
        for (std::size_t c = 0; c < n; ++c) {
            std::size_t piv = c;
            for (std::size_t r = c + 1; r < n; ++r)
                if (std::abs(gram(r, c)) > std::abs(gram(piv, c))) piv = r;
            if (std::abs(gram(piv, c)) < 1e-14) throw DegenerateBasisError("ComparisonPair: E is not injective");
            for (std::size_t k = 0; k < n; ++k) {
                std::swap(gram(c, k), gram(piv, k));
                std::swap(rhs(c, k), rhs(piv, k));
            }
            const double d = gram(c, c);
            for (std::size_t k = 0; k < n; ++k) {
                gram(c, k) /= d;
                rhs(c, k) /= d;
            }
            for (std::size_t r = 0; r < n; ++r) {
                if (r == c) continue;
                const double f = gram(r, c);
                if (f == 0.0) continue;
                for (std::size_t k = 0; k < n; ++k) {
                    gram(r, k) -= f * gram(c, k);
                    rhs(r, k) -= f * rhs(c, k);
                }
            }
        }
        ComparisonPair p;
        p.E_ = std::move(E);
        p.M_ = std::move(rhs);
        return p;
    }

    /// Coefficient-frame pair from an ambient-frame E: B_eps^T E_amb B_0.
    static ComparisonPair from_ambient(const Matrix& E_ambient, const EigenData& eigs0, const EigenData& eigs_eps) {
        Matrix coef = eigs_eps.basis().transpose() * E_ambient * eigs0.basis();
        if ((coef.transpose() * coef - Matrix::identity(coef.rows())).max_abs() <= 1e-12)
            return orthogonal(std::move(coef));
        return from_extension(std::move(coef));
    }

    const Matrix& E() const { return E_; }
    const Matrix& M() const { return M_; }
    std::size_t size() const { return E_.rows(); }

    /// Ambient-frame E for serialization: B_eps E B_0^T.
    Matrix ambient_E(const EigenData& eigs0, const EigenData& eigs_eps) const {
        return eigs_eps.basis() * E_ * eigs0.basis().transpose();
    }

    friend bool operator==(const ComparisonPair&, const ComparisonPair&) = default;

private:
    Matrix E_;
    Matrix M_;
};

enum class Direction { E, M };

inline StateVector comparison_apply(const ComparisonPair& pair, Direction dir, const StateVector& v) {
    const Matrix& T = dir == Direction::E ? pair.E() : pair.M();
    return StateVector(T.apply(v.span()));
}

/// Operator norms of E and M in the base and alpha-weighted metrics.
struct ComparisonNorms {
    double E_base = 0.0;
    double M_base = 0.0;
    double E_alpha = 0.0;
    double M_alpha = 0.0;

    double max() const { return std::max({E_base, M_base, E_alpha, M_alpha}); }
};

inline ComparisonNorms comparison_norms(const ComparisonPair& pair, const EigenData& eigs0,
                                        const EigenData& eigs_eps, double alpha) {
    const Vector w0 = eigs0.powers(alpha), we = eigs_eps.powers(alpha);
    Vector inv_w0(w0.size()), inv_we(we.size());
    for (std::size_t i = 0; i < w0.size(); ++i) inv_w0[i] = 1.0 / w0[i], inv_we[i] = 1.0 / we[i];
    ComparisonNorms n;
    n.E_base = operator_norm(pair.E());
    n.M_base = operator_norm(pair.M());
    n.E_alpha = operator_norm(pair.E().scale_rows(we).scale_cols(inv_w0));
    n.M_alpha = operator_norm(pair.M().scale_rows(w0).scale_cols(inv_we));
    return n;
}

/// Coordinates on P_m^eps X_eps in the basis psi_k = P_m^eps E phi_k^0.
///
/// In coefficient frames psi_k is the leading m x m block of E's column k, so
/// the map reduces to solving with that block.
class CoordinateMap {
public:
    CoordinateMap() = default;

    CoordinateMap(const SpectralSplit& split_eps, const ComparisonPair& pair) : m_(split_eps.m()), n_(split_eps.n_modes()) {
        psi_ = Matrix(m_, m_);
        for (std::size_t r = 0; r < m_; ++r)
            for (std::size_t c = 0; c < m_; ++c) psi_(r, c) = pair.E()(r, c);
        const auto sv = singular_values(psi_);
        const double smin = sv.back();
        gram_condition_ = smin > 0.0 ? (sv.front() / smin) * (sv.front() / smin) : std::numeric_limits<double>::infinity();
        if (!(gram_condition_ <= 1e8))
            throw DegenerateBasisError("coordinate basis psi_k = P_m E phi_k is degenerate (Gram condition " +
                                       std::to_string(gram_condition_) + " > 1e8)");
        inverse_ = invert(psi_);
        identity_ = (psi_ - Matrix::identity(m_)).max_abs() == 0.0;
    }

    std::size_t m() const { return m_; }
    double gram_condition() const { return gram_condition_; }
    const Matrix& psi() const { return psi_; }

    /// Slow eigen-coefficients (length m) -> coordinates p-bar.
    Vector coords_from_slow(std::span<const double> slow) const {
        if (identity_) return Vector(slow.begin(), slow.end());
        return inverse_.apply(slow);
    }

    /// Coordinates p-bar -> slow eigen-coefficients (length m).
    Vector slow_from_coords(std::span<const double> p) const {
        if (identity_) return Vector(p.begin(), p.end());
        return psi_.apply(p);
    }

    /// j_eps(v) for v in the range of P_m^eps.
    Vector coord_map(const StateVector& v) const {
        if (v.size() != n_) throw std::invalid_argument("coord_map: size mismatch");
        return coords_from_slow(std::span<const double>(v.coeffs()).subspan(0, m_));
    }

    /// j_eps^{-1}(p-bar) as a full state.
    StateVector from_coords(std::span<const double> p) const {
        if (p.size() != m_) throw std::invalid_argument("from_coords: expected m coordinates");
        StateVector out(n_);
        const Vector slow = slow_from_coords(p);
        for (std::size_t i = 0; i < m_; ++i) out[i] = slow[i];
        return out;
    }

private:
    static Matrix invert(const Matrix& a) {
        const std::size_t n = a.rows();
        Matrix work = a, inv = Matrix::identity(n);
        for (std::size_t c = 0; c < n; ++c) {
            std::size_t piv = c;
            for (std::size_t r = c + 1; r < n; ++r)
                if (std::abs(work(r, c)) > std::abs(work(piv, c))) piv = r;
            for (std::size_t k = 0; k < n; ++k) {
                std::swap(work(c, k), work(piv, k));
                std::swap(inv(c, k), inv(piv, k));
            }
            const double d = work(c, c);
            for (std::size_t k = 0; k < n; ++k) work(c, k) /= d, inv(c, k) /= d;
            for (std::size_t r = 0; r < n; ++r) {
                if (r == c) continue;
                const double f = work(r, c);
                for (std::size_t k = 0; k < n; ++k) work(r, k) -= f * work(c, k), inv(r, k) -= f * inv(c, k);
            }
        }
        return inv;
    }

    std::size_t m_ = 0;
    std::size_t n_ = 0;
    Matrix psi_;
    Matrix inverse_;
    double gram_condition_ = 1.0;
    bool identity_ = true;
};

/// A closed rectangle or the boundary of the sector
/// {lambda : |arg(lambda - b)| <= pi - phi} in the spectral plane of -A.
struct Contour {
    enum class Kind { rectangle, sector };

    Kind kind = Kind::rectangle;
    // rectangle
    double re_min = 0.0, re_max = 0.0, im_half = 1.0;
    // sector
    double vertex = 0.0, phi = std::numbers::pi / 4.0;
    std::size_t quadrature_nodes = 256;

    static Contour rectangle(double re_min, double re_max, double im_half, std::size_t nodes = 256) {
        if (!(re_min < re_max) || !(im_half > 0.0)) throw std::invalid_argument("Contour: degenerate rectangle");
        if (nodes == 0) throw std::invalid_argument("Contour: quadrature_nodes must be positive");
        Contour c;
        c.kind = Kind::rectangle;
        c.re_min = re_min;
        c.re_max = re_max;
        c.im_half = im_half;
        c.quadrature_nodes = nodes;
        return c;
    }

    /// Re in [-lambda_m - 1, -lambda_1 + 1], |Im| <= 1 around the first m
    /// eigenvalues of -A_0.
    static Contour slow_rectangle(const EigenData& eigs0, std::size_t m, std::size_t nodes = 256) {
        return rectangle(-eigs0[m - 1] - 1.0, -eigs0[0] + 1.0, 1.0, nodes);
    }

    static Contour sector(double vertex, double phi = std::numbers::pi / 4.0, std::size_t nodes = 256) {
        if (!(phi > 0.0 && phi < std::numbers::pi / 2.0)) throw std::invalid_argument("Contour: phi must be in (0, pi/2)");
        Contour c;
        c.kind = Kind::sector;
        c.vertex = vertex;
        c.phi = phi;
        c.quadrature_nodes = nodes;
        return c;
    }

    /// Sector with vertex b = -lambda_{m+1} + 1 around the fast spectrum.
    static Contour fast_sector(const EigenData& eigs0, std::size_t m, std::size_t nodes = 256) {
        return sector(-eigs0[m] + 1.0, std::numbers::pi / 4.0, nodes);
    }

    /// Perimeter of a rectangle; infinite for a sector.
    double length() const {
        if (kind == Kind::sector) return std::numeric_limits<double>::infinity();
        return 2.0 * (re_max - re_min) + 4.0 * im_half;
    }

    /// Whether the point -lambda lies inside (rectangle) or in the left wedge (sector).
    bool encloses_negative(double lambda) const {
        const double x = -lambda;
        if (kind == Kind::rectangle) return x > re_min && x < re_max;
        return x < vertex;
    }

    /// Distance from the contour to the points {-lambda_i}.
    double distance_to_spectrum(const EigenData& eigs) const {
        double d = std::numeric_limits<double>::infinity();
        for (double l : eigs.eigenvalues()) {
            const double x = -l;
            if (kind == Kind::rectangle) {
                const double dx = x < re_min ? re_min - x : (x > re_max ? x - re_max : 0.0);
                const double inside = std::min(x - re_min, re_max - x);
                d = std::min(d, dx > 0.0 ? std::hypot(dx, 0.0) : std::min(inside, im_half));
            } else {
                // Rays b + r e^{+-i(pi - phi)}, r >= 0.
                const double rel = x - vertex;
                if (rel >= 0.0) {
                    d = std::min(d, rel);
                } else {
                    // Projection onto the ray direction (-cos phi, sin phi).
                    const double along = -rel * std::cos(phi);
                    d = std::min(d, along > 0.0 ? -rel * std::sin(phi) : -rel);
                }
            }
        }
        return d;
    }

    /// Points for sup-sampling of functions along the contour. Sector rays are
    /// sampled on a geometric grid of radii up to `r_max`.
    std::vector<Complex> sample_points(std::size_t per_segment = 2048, double r_max = 1e6) const {
        std::vector<Complex> pts;
        if (kind == Kind::rectangle) {
            const Complex corners[4] = {{re_max, -im_half}, {re_max, im_half}, {re_min, im_half}, {re_min, -im_half}};
            for (int s = 0; s < 4; ++s) {
                const Complex a = corners[s], b = corners[(s + 1) % 4];
                for (std::size_t k = 0; k < per_segment; ++k)
                    pts.push_back(a + (b - a) * (static_cast<double>(k) / static_cast<double>(per_segment)));
            }
        } else {
            const Complex up = std::polar(1.0, std::numbers::pi - phi);
            const Complex down = std::conj(up);
            pts.push_back({vertex, 0.0});
            const double r_min = 1e-6;
            for (std::size_t k = 0; k <= per_segment; ++k) {
                const double r = r_min * std::pow(r_max / r_min, static_cast<double>(k) / static_cast<double>(per_segment));
                pts.push_back(vertex + r * up);
                pts.push_back(vertex + r * down);
            }
        }
        return pts;
    }
};

namespace detail {

inline void require_clear_of_spectrum(const Contour& contour, const EigenData& eigs) {
    const double d = contour.distance_to_spectrum(eigs);
    if (d < 1e-6)
        throw ContourTooCloseError("contour passes within " + std::to_string(d) + " of the spectrum of -A");
}

}  // namespace detail

/// (1 / 2 pi i) \oint (A + lambda I)^{-1} d lambda over a rectangle, by
/// Gauss-Legendre quadrature on each side, returned in the operator's
/// eigen-coordinate frame.
inline Matrix contour_projection(const EigenData& eigs, const Contour& contour) {
    if (contour.kind != Contour::Kind::rectangle)
        throw std::invalid_argument("contour_projection: the resolvent integral needs a closed (rectangle) contour");
    detail::require_clear_of_spectrum(contour, eigs);
    const auto rule = gauss_legendre(contour.quadrature_nodes);
    // Counterclockwise corners.
    const Complex corners[4] = {{contour.re_max, -contour.im_half},
                                {contour.re_max, contour.im_half},
                                {contour.re_min, contour.im_half},
                                {contour.re_min, -contour.im_half}};
    const std::size_t n = eigs.size();
    std::vector<Complex> acc(n, Complex{});
    for (int s = 0; s < 4; ++s) {
        const Complex a = corners[s], b = corners[(s + 1) % 4];
        const Complex mid = 0.5 * (a + b), half = 0.5 * (b - a);
        for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
            const Complex z = mid + half * rule.nodes[k];
            const Complex w = half * rule.weights[k];
            for (std::size_t i = 0; i < n; ++i) acc[i] += w / (z + eigs[i]);
        }
    }
    const Complex scale = 1.0 / Complex(0.0, 2.0 * std::numbers::pi);
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) out(i, i) = (acc[i] * scale).real();
    return out;
}

/// (1 / 2 pi i) \int_Gamma (lambda I + A)^{-1} e^{lambda t} d lambda along a
/// sector boundary, oriented with increasing imaginary part. The rays are
/// truncated where the remaining |e^{lambda t}| tail is below 1e-12.
/// Returns the diagonal (per-mode) values.
inline Vector contour_semigroup(const EigenData& eigs, const Contour& contour, double t) {
    if (contour.kind != Contour::Kind::sector) throw std::invalid_argument("contour_semigroup: sector contour required");
    if (!(t > 0.0)) throw std::invalid_argument("contour_semigroup: t > 0 required");
    detail::require_clear_of_spectrum(contour, eigs);
    const double cphi = std::cos(contour.phi);
    const double dist = contour.distance_to_spectrum(eigs);
    // e^{(b - r cos phi) t} / (cos phi t dist) < 1e-12
    const double r_max = std::max(1.0, (contour.vertex * t + std::log(1e12 / (cphi * t * std::min(dist, 1.0)))) / (cphi * t));
    const Complex up = std::polar(1.0, std::numbers::pi - contour.phi);
    const Complex down = std::conj(up);
    const auto rule = gauss_legendre(std::min<std::size_t>(contour.quadrature_nodes, 64));

    // Geometric panels in r: fine near the vertex, coarse far out.
    std::vector<double> edges{0.0};
    double h = std::min(0.05, 0.05 / t);
    while (edges.back() < r_max) {
        edges.push_back(std::min(r_max, edges.back() + h));
        h *= 1.15;
    }

    const std::size_t n = eigs.size();
    std::vector<Complex> acc(n, Complex{});
    for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
        const double mid = 0.5 * (edges[p] + edges[p + 1]), half = 0.5 * (edges[p + 1] - edges[p]);
        for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
            const double r = mid + half * rule.nodes[k];
            const double w = half * rule.weights[k];
            // Upper ray traversed outward (d lambda = up dr), lower ray inward (d lambda = -down dr).
            const Complex zu = contour.vertex + r * up, zd = contour.vertex + r * down;
            const Complex eu = std::exp(zu * t) * up * w, ed = -std::exp(zd * t) * down * w;
            for (std::size_t i = 0; i < n; ++i) acc[i] += eu / (zu + eigs[i]) + ed / (zd + eigs[i]);
        }
    }
    const Complex scale = 1.0 / Complex(0.0, 2.0 * std::numbers::pi);
    Vector out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = (acc[i] * scale).real();
    return out;
}

/// Coefficient-frame matrix expressed in the ambient frame: B T B^T.
inline Matrix to_ambient(const EigenData& eigs, const Matrix& coefficient_matrix) {
    return eigs.basis() * coefficient_matrix * eigs.basis().transpose();
}

}  // namespace manifold_gap
