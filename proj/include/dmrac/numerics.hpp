#pragma once

// Small dense linear algebra: the handful of operations the controller,
// topology checks and Lyapunov machinery need. Sizes here are tiny (ℓn ≤ a
// few dozen), so everything is plain O(n^3) row-major code.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dmrac/errors.hpp"

namespace dmrac {

class Vec {
public:
    Vec() = default;
    explicit Vec(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
    Vec(std::initializer_list<double> values) : data_(values) {}
    explicit Vec(std::vector<double> values) : data_(std::move(values)) {}

    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    [[nodiscard]] double* data() noexcept { return data_.data(); }
    [[nodiscard]] const double* data() const noexcept { return data_.data(); }
    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }
    [[nodiscard]] std::span<double> span() noexcept { return data_; }
    [[nodiscard]] std::span<const double> span() const noexcept { return data_; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return data_; }

    [[nodiscard]] Vec segment(std::size_t offset, std::size_t length) const {
        if (offset + length > size()) {
            throw Error(ErrorKind::DimensionMismatch, "segment out of range");
        }
        return Vec(std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(offset),
                                       data_.begin() + static_cast<std::ptrdiff_t>(offset + length)));
    }

    void set_segment(std::size_t offset, const Vec& v) {
        if (offset + v.size() > size()) {
            throw Error(ErrorKind::DimensionMismatch, "set_segment out of range");
        }
        std::copy(v.begin(), v.end(), data_.begin() + static_cast<std::ptrdiff_t>(offset));
    }

    void append(const Vec& v) { data_.insert(data_.end(), v.begin(), v.end()); }

    Vec& operator+=(const Vec& o) {
        check_same(o);
        for (std::size_t i = 0; i < size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Vec& operator-=(const Vec& o) {
        check_same(o);
        for (std::size_t i = 0; i < size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Vec& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    [[nodiscard]] double dot(const Vec& o) const {
        check_same(o);
        double acc = 0.0;
        for (std::size_t i = 0; i < size(); ++i) acc += data_[i] * o.data_[i];
        return acc;
    }
    [[nodiscard]] double norm2() const { return std::sqrt(dot(*this)); }
    [[nodiscard]] double norm_inf() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }
    [[nodiscard]] bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Vec&, const Vec&) = default;

private:
    void check_same(const Vec& o) const {
        if (o.size() != size()) {
            throw Error(ErrorKind::DimensionMismatch,
                        "vector sizes " + std::to_string(size()) + " vs " + std::to_string(o.size()));
        }
    }

    std::vector<double> data_;
};

inline Vec operator+(Vec a, const Vec& b) { return a += b; }
inline Vec operator-(Vec a, const Vec& b) { return a -= b; }
inline Vec operator*(Vec a, double s) { return a *= s; }
inline Vec operator*(double s, Vec a) { return a *= s; }
inline Vec operator-(Vec a) { return a *= -1.0; }

/// Dense row-major matrix.
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Mat(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw Error(ErrorKind::DimensionMismatch, "ragged matrix literal");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }
    Mat(std::size_t rows, std::size_t cols, std::vector<double> row_major)
        : rows_(rows), cols_(cols), data_(std::move(row_major)) {
        if (data_.size() != rows_ * cols_) {
            throw Error(ErrorKind::DimensionMismatch, "entry count does not match shape");
        }
    }

    [[nodiscard]] static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
    [[nodiscard]] static Mat diagonal(const Vec& d) {
        Mat m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }
    [[nodiscard]] static Mat column(const Vec& v) { return Mat(v.size(), 1, v.values()); }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] bool is_square() const noexcept { return rows_ == cols_; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return data_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    [[nodiscard]] Mat transpose() const {
        Mat t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    [[nodiscard]] Vec row(std::size_t r) const {
        return Vec(std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(r * cols_),
                                       data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols_)));
    }
    [[nodiscard]] Vec col(std::size_t c) const {
        Vec v(rows_);
        for (std::size_t r = 0; r < rows_; ++r) v[r] = (*this)(r, c);
        return v;
    }
    [[nodiscard]] Vec diag() const {
        Vec v(std::min(rows_, cols_));
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = (*this)(i, i);
        return v;
    }

    [[nodiscard]] Mat block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
        if (r0 + nr > rows_ || c0 + nc > cols_) throw Error(ErrorKind::DimensionMismatch, "block out of range");
        Mat b(nr, nc);
        for (std::size_t r = 0; r < nr; ++r)
            for (std::size_t c = 0; c < nc; ++c) b(r, c) = (*this)(r0 + r, c0 + c);
        return b;
    }
    void set_block(std::size_t r0, std::size_t c0, const Mat& b) {
        if (r0 + b.rows() > rows_ || c0 + b.cols() > cols_) {
            throw Error(ErrorKind::DimensionMismatch, "set_block out of range");
        }
        for (std::size_t r = 0; r < b.rows(); ++r)
            for (std::size_t c = 0; c < b.cols(); ++c) (*this)(r0 + r, c0 + c) = b(r, c);
    }

    Mat& operator+=(const Mat& o) {
        check_same(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Mat& operator-=(const Mat& o) {
        check_same(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Mat& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    [[nodiscard]] double frobenius_norm() const {
        double acc = 0.0;
        for (double v : data_) acc += v * v;
        return std::sqrt(acc);
    }
    [[nodiscard]] double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }
    [[nodiscard]] double trace() const {
        double t = 0.0;
        for (std::size_t i = 0; i < std::min(rows_, cols_); ++i) t += (*this)(i, i);
        return t;
    }
    [[nodiscard]] bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }
    [[nodiscard]] bool is_symmetric(double tol) const {
        if (!is_square()) return false;
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = r + 1; c < cols_; ++c)
                if (std::abs((*this)(r, c) - (*this)(c, r)) > tol) return false;
        return true;
    }

    friend bool operator==(const Mat&, const Mat&) = default;

private:
    void check_same(const Mat& o) const {
        if (o.rows_ != rows_ || o.cols_ != cols_) {
            throw Error(ErrorKind::DimensionMismatch, "matrix shapes differ");
        }
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Mat operator+(Mat a, const Mat& b) { return a += b; }
inline Mat operator-(Mat a, const Mat& b) { return a -= b; }
inline Mat operator*(Mat a, double s) { return a *= s; }
inline Mat operator*(double s, Mat a) { return a *= s; }

inline Mat operator*(const Mat& a, const Mat& b) {
    if (a.cols() != b.rows()) {
        throw Error(ErrorKind::DimensionMismatch, "matmul inner dimensions " + std::to_string(a.cols()) +
                                                      " vs " + std::to_string(b.rows()));
    }
    Mat c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

inline Vec operator*(const Mat& a, const Vec& x) {
    if (a.cols() != x.size()) {
        throw Error(ErrorKind::DimensionMismatch, "matvec dimensions " + std::to_string(a.cols()) + " vs " +
                                                      std::to_string(x.size()));
    }
    Vec y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * x[j];
        y[i] = acc;
    }
    return y;
}

/// Tolerance for "symmetric" inputs to cholesky/eigenvalue routines.
inline constexpr double kSymmetryTolerance = 1e-10;

[[nodiscard]] inline Mat kron(const Mat& a, const Mat& b) {
    Mat k(a.rows() * b.rows(), a.cols() * b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) {
            const double s = a(i, j);
            for (std::size_t r = 0; r < b.rows(); ++r)
                for (std::size_t c = 0; c < b.cols(); ++c) k(i * b.rows() + r, j * b.cols() + c) = s * b(r, c);
        }
    return k;
}

/// Gaussian elimination with partial pivoting. Throws SingularMatrix when a
/// pivot drops below 1e-12 times the largest initial entry magnitude.
[[nodiscard]] inline Vec solve_linear(const Mat& a, const Vec& b) {
    if (!a.is_square() || b.size() != a.rows()) {
        throw Error(ErrorKind::DimensionMismatch, "solve_linear needs square a and matching b");
    }
    const std::size_t n = a.rows();
    Mat m = a;
    Vec x = b;
    const double threshold = 1e-12 * a.max_abs();
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t r = k + 1; r < n; ++r)
            if (std::abs(m(r, k)) > std::abs(m(piv, k))) piv = r;
        if (std::abs(m(piv, k)) < threshold || m(piv, k) == 0.0) {
            throw Error(ErrorKind::SingularMatrix, "pivot " + std::to_string(k) + " below threshold");
        }
        if (piv != k) {
            for (std::size_t c = 0; c < n; ++c) std::swap(m(k, c), m(piv, c));
            std::swap(x[k], x[piv]);
        }
        for (std::size_t r = k + 1; r < n; ++r) {
            const double f = m(r, k) / m(k, k);
            if (f == 0.0) continue;
            for (std::size_t c = k; c < n; ++c) m(r, c) -= f * m(k, c);
            x[r] -= f * x[k];
        }
    }
    for (std::size_t k = n; k-- > 0;) {
        double acc = x[k];
        for (std::size_t c = k + 1; c < n; ++c) acc -= m(k, c) * x[c];
        x[k] = acc / m(k, k);
    }
    return x;
}

/// Column-by-column solve of a·X = b.
[[nodiscard]] inline Mat solve_linear(const Mat& a, const Mat& b) {
    if (b.rows() != a.rows()) throw Error(ErrorKind::DimensionMismatch, "solve_linear rhs rows");
    Mat x(a.cols(), b.cols());
    for (std::size_t c = 0; c < b.cols(); ++c) {
        const Vec col = solve_linear(a, b.col(c));
        for (std::size_t r = 0; r < col.size(); ++r) x(r, c) = col[r];
    }
    return x;
}

[[nodiscard]] inline Mat cholesky(const Mat& a) {
    if (!a.is_square()) throw Error(ErrorKind::DimensionMismatch, "cholesky needs a square matrix");
    if (!a.is_symmetric(kSymmetryTolerance)) throw Error(ErrorKind::NotSymmetric, "cholesky input");
    const std::size_t n = a.rows();
    Mat l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > 0.0)) {
            throw Error(ErrorKind::NotPositiveDefinite, "pivot " + std::to_string(j) + " is not positive");
        }
        l(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return l;
}

[[nodiscard]] inline bool is_positive_definite(const Mat& a) {
    try {
        (void)cholesky(a);
        return true;
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::NotPositiveDefinite) return false;
        throw;
    }
}

/// Eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi sweeps.
[[nodiscard]] inline Vec symmetric_eigenvalues(const Mat& a) {
    if (!a.is_square()) throw Error(ErrorKind::DimensionMismatch, "eigenvalues need a square matrix");
    if (!a.is_symmetric(kSymmetryTolerance)) throw Error(ErrorKind::NotSymmetric, "eigenvalue input");
    const std::size_t n = a.rows();
    Mat m = a;
    auto off_norm = [&] {
        double acc = 0.0;
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < n; ++c)
                if (r != c) acc += m(r, c) * m(r, c);
        return std::sqrt(acc);
    };
    const double stop = 1e-12 * a.frobenius_norm();
    constexpr int kMaxSweeps = 100;
    for (int sweep = 0; sweep < kMaxSweeps && off_norm() > stop; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = m(p, q);
                if (apq == 0.0) continue;
                const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                // A' = Jᵀ A J with the rotation in the (p, q) plane.
                for (std::size_t k = 0; k < n; ++k) {
                    const double mkp = m(k, p);
                    const double mkq = m(k, q);
                    m(k, p) = c * mkp - s * mkq;
                    m(k, q) = s * mkp + c * mkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double mpk = m(p, k);
                    const double mqk = m(q, k);
                    m(p, k) = c * mpk - s * mqk;
                    m(q, k) = s * mpk + c * mqk;
                }
            }
        }
    }
    Vec eig = m.diag();
    std::sort(eig.begin(), eig.end());
    return eig;
}

/// Frobenius norm of a_mᵀP + P·a_m + q_tilde.
[[nodiscard]] inline double lyapunov_residual(const Mat& a_m, const Mat& p, const Mat& q_tilde) {
    return (a_m.transpose() * p + p * a_m + q_tilde).frobenius_norm();
}

/// Solves a_mᵀP + P·a_m = −q_tilde by vectorization:
/// (I ⊗ a_mᵀ + a_mᵀ ⊗ I) vec(P) = −vec(q_tilde), vec stacking columns.
[[nodiscard]] inline Mat solve_lyapunov(const Mat& a_m, const Mat& q_tilde) {
    if (!a_m.is_square() || !q_tilde.is_square() || a_m.rows() != q_tilde.rows()) {
        throw Error(ErrorKind::DimensionMismatch, "solve_lyapunov needs matching square matrices");
    }
    const std::size_t n = a_m.rows();
    const Mat at = a_m.transpose();
    const Mat eye = Mat::identity(n);
    const Mat k = kron(eye, at) + kron(at, eye);
    Vec rhs(n * n);
    for (std::size_t c = 0; c < n; ++c)
        for (std::size_t r = 0; r < n; ++r) rhs[c * n + r] = -q_tilde(r, c);
    const Vec sol = solve_linear(k, rhs);
    Mat p(n, n);
    for (std::size_t c = 0; c < n; ++c)
        for (std::size_t r = 0; r < n; ++r) p(r, c) = sol[c * n + r];
    return 0.5 * (p + p.transpose());
}

}  // namespace dmrac
