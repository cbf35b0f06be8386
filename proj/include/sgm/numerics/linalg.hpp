// SPDX-License-Identifier: Apache-2.0
//
// Small dense linear algebra: row-major Matrix, Cholesky, triangular solves,
// largest eigenvalue by shifted power iteration, and a cyclic Jacobi
// eigensolver used as the reference for symmetric spectra.
#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <vector>

#include "sgm/error.hpp"

namespace sgm {

using Vector = std::vector<double>;

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw Error(ErrorCode::SizeMismatch, "matrix data does not match shape");
    }
    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw Error(ErrorCode::SizeMismatch, "ragged matrix literal");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
    static Matrix diagonal(std::span<const double> diag) {
        Matrix m(diag.size(), diag.size());
        for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
        return m;
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    [[nodiscard]] std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    [[nodiscard]] std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    [[nodiscard]] std::span<double> data() noexcept { return data_; }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }

    [[nodiscard]] Matrix transpose() const {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Vector helpers
// ---------------------------------------------------------------------------

inline double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

inline Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw Error(ErrorCode::SizeMismatch, "matmul shape mismatch");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

inline Vector operator*(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) throw Error(ErrorCode::SizeMismatch, "matvec shape mismatch");
    Vector y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
    return y;
}

inline Matrix operator+(Matrix a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error(ErrorCode::SizeMismatch, "add shape mismatch");
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += bd[i];
    return a;
}

inline Matrix operator-(Matrix a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error(ErrorCode::SizeMismatch, "sub shape mismatch");
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < ad.size(); ++i) ad[i] -= bd[i];
    return a;
}

inline Matrix operator*(double s, Matrix a) {
    for (double& v : a.data()) v *= s;
    return a;
}

inline double frobenius_norm(const Matrix& m) { return norm(m.data()); }

/// Largest absolute row sum, an upper bound on every |eigenvalue|.
inline double inf_norm(const Matrix& m) {
    double best = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double s = 0.0;
        for (double v : m.row(i)) s += std::abs(v);
        best = std::max(best, s);
    }
    return best;
}

inline double max_asymmetry(const Matrix& m) {
    double worst = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = i + 1; j < m.cols(); ++j) worst = std::max(worst, std::abs(m(i, j) - m(j, i)));
    return worst;
}

// ---------------------------------------------------------------------------
// Cholesky and solves
// ---------------------------------------------------------------------------

/// Lower-triangular L with L Lᵀ = m. Throws NotSPD when a pivot is not positive.
inline Matrix cholesky(const Matrix& m) {
    if (m.rows() != m.cols()) throw Error(ErrorCode::SizeMismatch, "cholesky needs a square matrix");
    const std::size_t n = m.rows();
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double diag = m(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
        if (!(diag > 0.0)) throw Error(ErrorCode::NotSPD, "non-positive pivot at column " + std::to_string(j));
        const double ljj = std::sqrt(diag);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = m(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }
    return l;
}

/// Solves L y = b in place (forward substitution).
inline void solve_lower_inplace(const Matrix& l, std::span<double> b) {
    const std::size_t n = l.rows();
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * b[k];
        b[i] = s / l(i, i);
    }
}

/// Solves Lᵀ x = y in place (back substitution).
inline void solve_upper_transposed_inplace(const Matrix& l, std::span<double> y) {
    const std::size_t n = l.rows();
    for (std::size_t ii = n; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * y[k];
        y[ii] = s / l(ii, ii);
    }
}

/// Solves (L Lᵀ) x = b in place.
inline void cholesky_solve_inplace(const Matrix& l, std::span<double> b) {
    solve_lower_inplace(l, b);
    solve_upper_transposed_inplace(l, b);
}

inline Matrix cholesky_inverse(const Matrix& l) {
    const std::size_t n = l.rows();
    Matrix inv(n, n);
    Vector col(n);
    for (std::size_t j = 0; j < n; ++j) {
        std::fill(col.begin(), col.end(), 0.0);
        col[j] = 1.0;
        cholesky_solve_inplace(l, col);
        for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
    }
    // Symmetrize away rounding.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) inv(i, j) = inv(j, i) = 0.5 * (inv(i, j) + inv(j, i));
    return inv;
}

inline double cholesky_log_det(const Matrix& l) {
    double s = 0.0;
    for (std::size_t i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
    return 2.0 * s;
}

// ---------------------------------------------------------------------------
// Symmetric eigenvalues
// ---------------------------------------------------------------------------

struct EigenEstimate {
    double value = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
    Vector vector;
};

/// Largest eigenvalue of a symmetric matrix by power iteration on m + cI with
/// c = ‖m‖∞, which makes the spectrum nonnegative so the dominant eigenvalue
/// of the shifted matrix is λ_max(m) + c. A non-converged run still returns
/// its best estimate with `converged == false`.
inline EigenEstimate lambda_max_symmetric(const Matrix& m, double tol = 1e-12, std::size_t max_iter = 100000,
                                          std::span<const double> start = {}) {
    if (m.rows() != m.cols()) throw Error(ErrorCode::SizeMismatch, "lambda_max needs a square matrix");
    if (!(tol > 0.0)) throw Error(ErrorCode::InvalidParams, "tolerance must be positive");
    const std::size_t n = m.rows();
    EigenEstimate est;
    if (n == 0) return est;
    const double shift = inf_norm(m);
    if (shift == 0.0) {
        est.converged = true;
        est.vector.assign(n, 0.0);
        est.vector[0] = 1.0;
        return est;
    }
    Vector v(n), w(n);
    if (start.size() == n && norm(start) > 0.0) {
        std::copy(start.begin(), start.end(), v.begin());
    } else {
        // Deterministic start with generic components so no eigenvector is missed by symmetry.
        for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 0.1 * static_cast<double>(i) + 1e-3 * static_cast<double>(i * i);
    }
    double nv = norm(v);
    for (double& x : v) x /= nv;

    double prev = -1.0;
    for (std::size_t it = 1; it <= max_iter; ++it) {
        for (std::size_t i = 0; i < n; ++i) w[i] = dot(m.row(i), v) + shift * v[i];
        const double rq = dot(v, w);  // Rayleigh quotient of the shifted matrix
        nv = norm(w);
        for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nv;
        est.iterations = it;
        // Residual test: ‖(M+cI)v - ρv‖ bounds the eigenvalue error for symmetric M.
        if (it > 1 && std::abs(rq - prev) <= 0.25 * tol) {
            double res = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double r = dot(m.row(i), v) + shift * v[i] - rq * v[i];
                res += r * r;
            }
            if (std::sqrt(res) <= std::max(tol, 1e-15 * shift) || std::abs(rq - prev) <= 1e-15 * shift) {
                est.value = rq - shift;
                est.converged = true;
                est.vector = v;
                return est;
            }
        }
        prev = rq;
    }
    Vector mv = m * std::span<const double>(v);
    est.value = dot(v, mv);
    est.vector = v;
    return est;
}

struct SymmetricEigen {
    Vector values;  ///< ascending
    Matrix vectors; ///< column i is the eigenvector of values[i]
};

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
inline SymmetricEigen jacobi_eigen(Matrix a, double tol = 1e-14, std::size_t max_sweeps = 100) {
    if (a.rows() != a.cols()) throw Error(ErrorCode::SizeMismatch, "jacobi needs a square matrix");
    const std::size_t n = a.rows();
    Matrix q = Matrix::identity(n);
    const double scale = std::max(1e-300, frobenius_norm(a));
    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        if (std::sqrt(off) <= tol * scale) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t r = p + 1; r < n; ++r) {
                if (a(p, r) == 0.0) continue;
                const double theta = (a(r, r) - a(p, p)) / (2.0 * a(p, r));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akr = a(k, r);
                    a(k, p) = c * akp - s * akr;
                    a(k, r) = s * akp + c * akr;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), ark = a(r, k);
                    a(p, k) = c * apk - s * ark;
                    a(r, k) = s * apk + c * ark;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double qkp = q(k, p), qkr = q(k, r);
                    q(k, p) = c * qkp - s * qkr;
                    q(k, r) = s * qkp + c * qkr;
                }
            }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });
    SymmetricEigen out{Vector(n), Matrix(n, n)};
    for (std::size_t c = 0; c < n; ++c) {
        out.values[c] = a(order[c], order[c]);
        for (std::size_t k = 0; k < n; ++k) out.vectors(k, c) = q(k, order[c]);
    }
    return out;
}

/// All eigenvalues of a symmetric matrix, ascending.
inline Vector jacobi_eigenvalues(const Matrix& a) { return jacobi_eigen(a).values; }

}  // namespace sgm
