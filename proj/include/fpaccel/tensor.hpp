#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fpaccel/common.hpp"

namespace fpaccel {

// Dense row-major tensor of 64-bit floats. Rank 1 and 2 cover everything in
// this library; a leading axis acts as the batch dimension where one is used.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(numel_of(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != numel_of(shape_))
            throw config_error("Tensor: data length does not match shape");
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor vector(std::vector<double> v) {
        std::size_t n = v.size();
        return Tensor({n}, std::move(v));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
        return Tensor({rows, cols}, std::move(v));
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rows() const { return shape_.at(0); }
    std::size_t cols() const { return shape_.at(1); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "(";
        for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
        os << ")";
        return os.str();
    }

    static std::size_t numel_of(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// ---- raw (untaped) arithmetic used by the plain solver paths and oracles ----

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw config_error(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                           b.shape_str());
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor r(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor r(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor r(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] * b[i];
    return r;
}

inline Tensor scale(const Tensor& a, double s) {
    Tensor r(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] * s;
    return r;
}

inline void axpy(double alpha, const Tensor& x, Tensor& y) {
    check_same_shape(x, y, "axpy");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline double dot(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(const Tensor& a) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i]));
    return m;
}

// y = M x, M is rows x cols, x has cols entries
inline Tensor matvec(const Tensor& m, const Tensor& x) {
    if (m.rank() != 2 || x.rank() != 1 || m.cols() != x.size())
        throw config_error("matvec: shape mismatch " + m.shape_str() + " * " + x.shape_str());
    Tensor y({m.rows()});
    const double* md = m.data();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double* row = md + r * m.cols();
        double s = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) s += row[c] * x[c];
        y[r] = s;
    }
    return y;
}

// y = M^T x, x has rows entries
inline Tensor matvec_t(const Tensor& m, const Tensor& x) {
    if (m.rank() != 2 || x.rank() != 1 || m.rows() != x.size())
        throw config_error("matvec_t: shape mismatch " + m.shape_str() + "^T * " + x.shape_str());
    Tensor y({m.cols()});
    const double* md = m.data();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double* row = md + r * m.cols();
        double xr = x[r];
        for (std::size_t c = 0; c < m.cols(); ++c) y[c] += row[c] * xr;
    }
    return y;
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
        throw config_error("matmul: shape mismatch " + a.shape_str() + " * " + b.shape_str());
    Tensor c({a.rows(), b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            double aik = a.at(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.data() + k * b.cols();
            double* crow = c.data() + i * b.cols();
            for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

inline Tensor concat(const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1) throw config_error("concat: rank-1 tensors only");
    Tensor r({a.size() + b.size()});
    std::copy(a.data(), a.data() + a.size(), r.data());
    std::copy(b.data(), b.data() + b.size(), r.data() + a.size());
    return r;
}

inline Tensor slice(const Tensor& a, std::size_t offset, std::size_t len) {
    if (a.rank() != 1 || offset + len > a.size())
        throw config_error("slice: out of range");
    Tensor r({len});
    std::copy(a.data() + offset, a.data() + offset + len, r.data());
    return r;
}

inline void require_finite(const Tensor& t, const char* where) {
    if (!t.finite()) throw numeric_error(std::string(where) + ": non-finite value");
}

}  // namespace fpaccel
