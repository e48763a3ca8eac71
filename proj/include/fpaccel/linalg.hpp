#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fpaccel/tensor.hpp"

namespace fpaccel {

// LU factorization with partial pivoting, stored in-place (unit lower + upper
// in one square matrix, plus the pivot row permutation). Factor once, solve
// many right-hand sides; the transposed solve reuses the same factors.
class LuFactorization {
public:
    LuFactorization() = default;

    explicit LuFactorization(const Tensor& m) {
        if (m.rank() != 2 || m.rows() != m.cols())
            throw config_error("lu_factor: matrix must be square, got " + m.shape_str());
        n_ = m.rows();
        lu_ = m;
        piv_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) piv_[i] = i;
        double* a = lu_.data();
        for (std::size_t k = 0; k < n_; ++k) {
            std::size_t p = k;
            double best = std::fabs(a[k * n_ + k]);
            for (std::size_t i = k + 1; i < n_; ++i) {
                double v = std::fabs(a[i * n_ + k]);
                if (v > best) {
                    best = v;
                    p = i;
                }
            }
            if (best == 0.0)
                throw numeric_error("lu_factor: singular pivot at column " + std::to_string(k));
            if (p != k) {
                for (std::size_t j = 0; j < n_; ++j) std::swap(a[p * n_ + j], a[k * n_ + j]);
                std::swap(piv_[p], piv_[k]);
            }
            double pivot = a[k * n_ + k];
            for (std::size_t i = k + 1; i < n_; ++i) {
                double f = a[i * n_ + k] / pivot;
                a[i * n_ + k] = f;
                if (f == 0.0) continue;
                const double* rk = a + k * n_;
                double* ri = a + i * n_;
                for (std::size_t j = k + 1; j < n_; ++j) ri[j] -= f * rk[j];
            }
        }
    }

    std::size_t size() const { return n_; }

    // solve M u = v
    Tensor solve(const Tensor& v) const {
        check_rhs(v);
        Tensor x({n_});
        const double* a = lu_.data();
        for (std::size_t i = 0; i < n_; ++i) x[i] = v[piv_[i]];
        for (std::size_t i = 1; i < n_; ++i) {
            const double* ri = a + i * n_;
            double s = x[i];
            for (std::size_t j = 0; j < i; ++j) s -= ri[j] * x[j];
            x[i] = s;
        }
        for (std::size_t ii = n_; ii-- > 0;) {
            const double* ri = a + ii * n_;
            double s = x[ii];
            for (std::size_t j = ii + 1; j < n_; ++j) s -= ri[j] * x[j];
            x[ii] = s / ri[ii];
        }
        return x;
    }

    // solve M^T u = v with the same factors: M = P^T L U, so M^T = U^T L^T P.
    Tensor solve_transposed(const Tensor& v) const {
        check_rhs(v);
        Tensor y({n_});
        const double* a = lu_.data();
        for (std::size_t i = 0; i < n_; ++i) y[i] = v[i];
        // U^T z = v (forward, U^T is lower triangular)
        for (std::size_t i = 0; i < n_; ++i) {
            double s = y[i];
            for (std::size_t j = 0; j < i; ++j) s -= a[j * n_ + i] * y[j];
            y[i] = s / a[i * n_ + i];
        }
        // L^T w = z (backward, unit diagonal)
        for (std::size_t ii = n_; ii-- > 0;) {
            double s = y[ii];
            for (std::size_t j = ii + 1; j < n_; ++j) s -= a[j * n_ + ii] * y[j];
            y[ii] = s;
        }
        // undo the row permutation: x[piv[i]] = w[i]
        Tensor x({n_});
        for (std::size_t i = 0; i < n_; ++i) x[piv_[i]] = y[i];
        return x;
    }

private:
    void check_rhs(const Tensor& v) const {
        if (v.rank() != 1 || v.size() != n_)
            throw config_error("lu solve: rhs length " + v.shape_str() + " does not match " +
                               std::to_string(n_));
    }

    std::size_t n_ = 0;
    Tensor lu_;
    std::vector<std::size_t> piv_;
};

inline LuFactorization lu_factor(const Tensor& m) { return LuFactorization(m); }

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// Eigenvalues ascending; columns of vectors are the matching eigenvectors.
struct SymEig {
    std::vector<double> values;
    Tensor vectors;  // n x n, column k is the eigenvector of values[k]
};

inline SymEig sym_eig(const Tensor& m) {
    if (m.rank() != 2 || m.rows() != m.cols())
        throw config_error("sym_eig: matrix must be square, got " + m.shape_str());
    std::size_t n = m.rows();
    Tensor a = m;
    Tensor v({n, n});
    for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;

    auto off_norm = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += a.at(i, j) * a.at(i, j);
        return std::sqrt(2.0 * s);
    };

    const int max_sweeps = 64;
    for (int sweep = 0; sweep < max_sweeps && off_norm() > 1e-13 * (1.0 + norm_inf(a)); ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double apq = a.at(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                double app = a.at(p, p), aqq = a.at(q, q);
                double theta = 0.5 * (aqq - app) / apq;
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    double akp = a.at(k, p), akq = a.at(k, q);
                    a.at(k, p) = c * akp - s * akq;
                    a.at(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double apk = a.at(p, k), aqk = a.at(q, k);
                    a.at(p, k) = c * apk - s * aqk;
                    a.at(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double vkp = v.at(k, p), vkq = v.at(k, q);
                    v.at(k, p) = c * vkp - s * vkq;
                    v.at(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    SymEig out;
    out.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.values[i] = a.at(i, i);
    // sort ascending, permuting eigenvector columns alongside
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return out.values[x] < out.values[y]; });
    std::vector<double> sorted(n);
    Tensor vec({n, n});
    for (std::size_t k = 0; k < n; ++k) {
        sorted[k] = out.values[order[k]];
        for (std::size_t i = 0; i < n; ++i) vec.at(i, k) = v.at(i, order[k]);
    }
    out.values = std::move(sorted);
    out.vectors = std::move(vec);
    return out;
}

// Largest eigenvalue of a symmetric PSD-ish matrix (spectral norm of A^T A
// callers). Jacobi is exact enough and deterministic.
inline double sym_eig_max(const Tensor& m) {
    SymEig e = sym_eig(m);
    return e.values.back();
}

}  // namespace fpaccel
