#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace pricer {

/// Dense row-major matrix of doubles. Just enough linear algebra for the
/// networks and the IRLS solver; not a general-purpose library.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    std::span<double> row_span(std::size_t i) { return {row(i), cols}; }
    std::span<const double> row_span(std::size_t i) const { return {row(i), cols}; }

    void fill(double v) { data.assign(data.size(), v); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const Matrix& m) { return all_finite(std::span<const double>(m.data)); }

/// C = A * B^T with A (m x k), B (n x k). The dot products run four
/// accumulators so the compiler can vectorize without reassociating on its
/// own; the summation order is fixed and therefore reproducible.
inline Matrix matmul_nt(const Matrix& A, const Matrix& B) {
    if (A.cols != B.cols) throw std::invalid_argument("matmul_nt: inner dimensions differ");
    Matrix C(A.rows, B.rows);
    const std::size_t k = A.cols;
    for (std::size_t i = 0; i < A.rows; ++i) {
        const double* a = A.row(i);
        double* c = C.row(i);
        for (std::size_t o = 0; o < B.rows; ++o) {
            const double* b = B.row(o);
            double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
            std::size_t j = 0;
            for (; j + 4 <= k; j += 4) {
                s0 += a[j] * b[j];
                s1 += a[j + 1] * b[j + 1];
                s2 += a[j + 2] * b[j + 2];
                s3 += a[j + 3] * b[j + 3];
            }
            for (; j < k; ++j) s0 += a[j] * b[j];
            c[o] = (s0 + s1) + (s2 + s3);
        }
    }
    return C;
}

/// C = A * B with A (m x k), B (k x n). axpy formulation, unit stride.
inline Matrix matmul_nn(const Matrix& A, const Matrix& B) {
    if (A.cols != B.rows) throw std::invalid_argument("matmul_nn: inner dimensions differ");
    Matrix C(A.rows, B.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
        const double* a = A.row(i);
        double* c = C.row(i);
        for (std::size_t p = 0; p < A.cols; ++p) {
            const double ap = a[p];
            const double* b = B.row(p);
            for (std::size_t j = 0; j < B.cols; ++j) c[j] += ap * b[j];
        }
    }
    return C;
}

/// C = A^T * B with A (m x k), B (m x n) -> (k x n). axpy over rows of A.
inline Matrix matmul_tn(const Matrix& A, const Matrix& B) {
    if (A.rows != B.rows) throw std::invalid_argument("matmul_tn: row counts differ");
    Matrix C(A.cols, B.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
        const double* a = A.row(i);
        const double* b = B.row(i);
        for (std::size_t p = 0; p < A.cols; ++p) {
            const double ap = a[p];
            double* c = C.row(p);
            for (std::size_t j = 0; j < B.cols; ++j) c[j] += ap * b[j];
        }
    }
    return C;
}

/// Solve A x = b by Gaussian elimination with partial pivoting. A is copied.
/// Throws on (numerically) singular systems.
inline std::vector<double> solve_linear(Matrix A, std::vector<double> b) {
    if (A.rows != A.cols || A.rows != b.size())
        throw std::invalid_argument("solve_linear: shape mismatch");
    const std::size_t n = A.rows;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        double best = std::abs(A(col, col));
        for (std::size_t r = col + 1; r < n; ++r) {
            const double v = std::abs(A(r, col));
            if (v > best) {
                best = v;
                piv = r;
            }
        }
        if (best < 1e-12) throw std::runtime_error("solve_linear: singular matrix");
        if (piv != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(A(piv, j), A(col, j));
            std::swap(b[piv], b[col]);
        }
        const double inv = 1.0 / A(col, col);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = A(r, col) * inv;
            if (f == 0.0) continue;
            for (std::size_t j = col; j < n; ++j) A(r, j) -= f * A(col, j);
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= A(i, j) * x[j];
        x[i] = s / A(i, i);
    }
    return x;
}

}  // namespace pricer
