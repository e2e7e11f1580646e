#pragma once

// Small dense linear algebra used by the spectral model: a row-major matrix
// template, one-sided Jacobi singular values and Gauss-Legendre rules.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace manifold_gap {

using Complex = std::complex<double>;
using Vector = std::vector<double>;

template <typename T>
class DenseMatrix {
public:
    using value_type = T;

    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix out(n, n);
        for (std::size_t i = 0; i < n; ++i) out(i, i) = T{1};
        return out;
    }

    static DenseMatrix diagonal(std::span<const T> diag) {
        DenseMatrix out(diag.size(), diag.size());
        for (std::size_t i = 0; i < diag.size(); ++i) out(i, i) = diag[i];
        return out;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    const std::vector<T>& data() const noexcept { return data_; }

    std::vector<T> column(std::size_t c) const {
        std::vector<T> out(rows_);
        for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
        return out;
    }

    DenseMatrix transpose() const {
        DenseMatrix out(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
        return out;
    }

    DenseMatrix& operator+=(const DenseMatrix& o) {
        check_same_shape(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    DenseMatrix& operator-=(const DenseMatrix& o) {
        check_same_shape(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    DenseMatrix& operator*=(T s) {
        for (auto& x : data_) x *= s;
        return *this;
    }

    friend DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
    friend DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
    friend DenseMatrix operator*(DenseMatrix a, T s) { return a *= s; }
    friend DenseMatrix operator*(T s, DenseMatrix a) { return a *= s; }

    friend DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b) {
        if (a.cols_ != b.rows_) throw std::invalid_argument("matrix product: inner dimensions differ");
        DenseMatrix out(a.rows_, b.cols_);
        for (std::size_t i = 0; i < a.rows_; ++i) {
            for (std::size_t k = 0; k < a.cols_; ++k) {
                const T aik = a(i, k);
                if (aik == T{}) continue;
                const T* brow = b.data_.data() + k * b.cols_;
                T* orow = out.data_.data() + i * out.cols_;
                for (std::size_t j = 0; j < b.cols_; ++j) orow[j] += aik * brow[j];
            }
        }
        return out;
    }

    std::vector<T> apply(std::span<const T> v) const {
        if (v.size() != cols_) throw std::invalid_argument("matrix-vector product: size mismatch");
        std::vector<T> out(rows_, T{});
        for (std::size_t r = 0; r < rows_; ++r) {
            T acc{};
            const T* rp = data_.data() + r * cols_;
            for (std::size_t c = 0; c < cols_; ++c) acc += rp[c] * v[c];
            out[r] = acc;
        }
        return out;
    }

    /// Scales row r by d[r].
    DenseMatrix scale_rows(std::span<const T> d) const {
        DenseMatrix out = *this;
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) out(r, c) *= d[r];
        return out;
    }

    /// Scales column c by d[c].
    DenseMatrix scale_cols(std::span<const T> d) const {
        DenseMatrix out = *this;
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) out(r, c) *= d[c];
        return out;
    }

    double max_abs() const {
        double m = 0.0;
        for (const auto& x : data_) m = std::max(m, static_cast<double>(std::abs(x)));
        return m;
    }

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    void check_same_shape(const DenseMatrix& o) const {
        if (rows_ != o.rows_ || cols_ != o.cols_) throw std::invalid_argument("matrix shapes differ");
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using Matrix = DenseMatrix<double>;
using ComplexMatrix = DenseMatrix<Complex>;

inline ComplexMatrix to_complex(const Matrix& a) {
    ComplexMatrix out(a.rows(), a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = a(r, c);
    return out;
}

/// Real 2n x 2m embedding [[Re, -Im], [Im, Re]]; its singular values are
/// those of the complex matrix, each repeated twice.
inline Matrix real_embedding(const ComplexMatrix& a) {
    const std::size_t n = a.rows(), m = a.cols();
    Matrix out(2 * n, 2 * m);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < m; ++c) {
            const Complex z = a(r, c);
            out(r, c) = z.real();
            out(r, c + m) = -z.imag();
            out(r + n, c) = z.imag();
            out(r + n, c + m) = z.real();
        }
    }
    return out;
}

/// Singular values by one-sided (Hestenes) Jacobi, sorted descending.
///
/// Columns are rotated pairwise until every pair is orthogonal to `tol`
/// relative to the product of their norms; the column norms are then the
/// singular values.
inline std::vector<double> singular_values(const Matrix& a, double tol = 1e-12, int max_sweeps = 80) {
    Matrix work = a.rows() >= a.cols() ? a : a.transpose();
    const std::size_t rows = work.rows(), cols = work.cols();
    // Column-major copy for cache-friendly column rotations.
    std::vector<std::vector<double>> col(cols, std::vector<double>(rows));
    for (std::size_t c = 0; c < cols; ++c)
        for (std::size_t r = 0; r < rows; ++r) col[c][r] = work(r, c);

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < cols; ++p) {
            for (std::size_t q = p + 1; q < cols; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                const double* cp = col[p].data();
                const double* cq = col[q].data();
                for (std::size_t r = 0; r < rows; ++r) {
                    alpha += cp[r] * cp[r];
                    beta += cq[r] * cq[r];
                    gamma += cp[r] * cq[r];
                }
                if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                double* wp = col[p].data();
                double* wq = col[q].data();
                for (std::size_t r = 0; r < rows; ++r) {
                    const double x = wp[r], y = wq[r];
                    wp[r] = c * x - s * y;
                    wq[r] = s * x + c * y;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sv(cols);
    for (std::size_t c = 0; c < cols; ++c) {
        double s = 0.0;
        for (double x : col[c]) s += x * x;
        sv[c] = std::sqrt(s);
    }
    std::sort(sv.begin(), sv.end(), std::greater<>());
    return sv;
}

inline double operator_norm(const Matrix& a) {
    if (a.empty()) return 0.0;
    return singular_values(a).front();
}

inline double operator_norm(const ComplexMatrix& a) {
    if (a.empty()) return 0.0;
    return singular_values(real_embedding(a)).front();
}

/// Number of singular values above `threshold`.
inline std::size_t numerical_rank(const Matrix& a, double threshold = 1e-6) {
    const auto sv = singular_values(a);
    return static_cast<std::size_t>(std::count_if(sv.begin(), sv.end(), [&](double s) { return s > threshold; }));
}

inline std::size_t numerical_rank(const ComplexMatrix& a, double threshold = 1e-6) {
    return numerical_rank(real_embedding(a), threshold) / 2;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double euclidean_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussLegendreRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

inline GaussLegendreRule gauss_legendre(std::size_t n) {
    if (n == 0) throw std::invalid_argument("gauss_legendre: need at least one node");
    GaussLegendreRule rule{std::vector<double>(n), std::vector<double>(n)};
    const std::size_t half = (n + 1) / 2;
    for (std::size_t i = 0; i < half; ++i) {
        double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (std::size_t k = 2; k <= n; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
                p0 = p1;
                p1 = pk;
            }
            dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        {
            double p0 = 1.0, p1 = x;
            for (std::size_t k = 2; k <= n; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
                p0 = p1;
                p1 = pk;
            }
            dp = n == 1 ? 1.0 : static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        rule.weights[i] = w;
        rule.weights[n - 1 - i] = w;
    }
    return rule;
}

}  // namespace manifold_gap
