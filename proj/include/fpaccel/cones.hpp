#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fpaccel/linalg.hpp"
#include "fpaccel/tensor.hpp"

namespace fpaccel {

// Supported cone segments. `free_` never appears in problem data; it shows up
// in the splitting step's projection cone (dual of the zero cone) and as the
// unconstrained primal block of the homogeneous embedding.
enum class ConeKind { free_, zero, nonneg, soc, psd };

inline const char* cone_kind_name(ConeKind k) {
    switch (k) {
        case ConeKind::free_: return "free";
        case ConeKind::zero: return "zero";
        case ConeKind::nonneg: return "nonneg";
        case ConeKind::soc: return "soc";
        case ConeKind::psd: return "psd";
    }
    return "?";
}

inline ConeKind cone_kind_from_name(const std::string& s) {
    if (s == "free") return ConeKind::free_;
    if (s == "zero") return ConeKind::zero;
    if (s == "nonneg") return ConeKind::nonneg;
    if (s == "soc") return ConeKind::soc;
    if (s == "psd") return ConeKind::psd;
    throw config_error("unknown cone kind: " + s);
}

// PSD segments hold the symmetric vectorization of an s x s matrix:
// row-major upper triangle, off-diagonal entries scaled by sqrt(2), so the
// vector inner product equals the trace inner product of the matrices.
struct ConeSegment {
    ConeKind kind;
    std::size_t dim;   // vector length of the segment
    std::size_t side;  // matrix side, psd only

    static ConeSegment make(ConeKind kind, std::size_t dim) {
        if (dim < 1) throw config_error("cone segment dim must be >= 1");
        ConeSegment seg{kind, dim, 0};
        if (kind == ConeKind::psd) {
            // dim = side (side + 1) / 2
            std::size_t side = static_cast<std::size_t>(
                (std::sqrt(8.0 * static_cast<double>(dim) + 1.0) - 1.0) / 2.0 + 0.5);
            if (side * (side + 1) / 2 != dim)
                throw config_error("psd segment dim " + std::to_string(dim) +
                                   " is not a triangular number");
            seg.side = side;
        }
        return seg;
    }

    static ConeSegment psd_side(std::size_t side) {
        return make(ConeKind::psd, side * (side + 1) / 2);
    }
};

class ConeSpec {
public:
    ConeSpec() = default;
    explicit ConeSpec(std::vector<ConeSegment> segs) : segs_(std::move(segs)) {
        for (const auto& s : segs_) total_ += s.dim;
    }

    const std::vector<ConeSegment>& segments() const { return segs_; }
    std::size_t total_dim() const { return total_; }
    bool empty() const { return segs_.empty(); }

    ConeSpec& append(ConeKind kind, std::size_t dim) {
        segs_.push_back(ConeSegment::make(kind, dim));
        total_ += dim;
        return *this;
    }

    ConeSpec& append(const ConeSegment& seg) {
        segs_.push_back(seg);
        total_ += seg.dim;
        return *this;
    }

    ConeSpec& append_all(const ConeSpec& other) {
        for (const auto& s : other.segments()) append(s);
        return *this;
    }

private:
    std::vector<ConeSegment> segs_;
    std::size_t total_ = 0;
};

// Dual cone: zero <-> free, the rest are self-dual.
inline ConeSpec dual_cone(const ConeSpec& spec) {
    ConeSpec d;
    for (const auto& s : spec.segments()) {
        switch (s.kind) {
            case ConeKind::zero: d.append(ConeKind::free_, s.dim); break;
            case ConeKind::free_: d.append(ConeKind::zero, s.dim); break;
            default: d.append(s); break;
        }
    }
    return d;
}

// ---- symmetric vectorization ----

inline std::size_t psd_side_of(std::size_t dim) { return ConeSegment::make(ConeKind::psd, dim).side; }

inline void svec_from_matrix(const double* mat, std::size_t s, double* out) {
    const double rt2 = std::sqrt(2.0);
    std::size_t k = 0;
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = i; j < s; ++j)
            out[k++] = (i == j) ? mat[i * s + j] : rt2 * mat[i * s + j];
}

inline void svec_to_matrix(const double* v, std::size_t s, double* mat) {
    const double inv_rt2 = 1.0 / std::sqrt(2.0);
    std::size_t k = 0;
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = i; j < s; ++j) {
            double val = (i == j) ? v[k] : inv_rt2 * v[k];
            mat[i * s + j] = val;
            mat[j * s + i] = val;
            ++k;
        }
}

// A' B for square tensors (helper for the PSD derivative rule).
inline Tensor matmul_t_left(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows())
        throw config_error("matmul_t_left: shape mismatch");
    Tensor c({a.cols(), b.cols()});
    for (std::size_t k = 0; k < a.rows(); ++k)
        for (std::size_t i = 0; i < a.cols(); ++i) {
            double f = a.at(k, i);
            if (f == 0.0) continue;
            const double* brow = b.data() + k * b.cols();
            double* crow = c.data() + i * b.cols();
            for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += f * brow[j];
        }
    return c;
}

namespace detail {

// Kink conventions, fixed so training is deterministic:
//  - nonneg / relu-style clamps take subgradient 0 at the boundary;
//  - the SOC branch at ||x|| == |t| uses the outside-cone formula;
//  - PSD divided differences closer than 1e-9 use d/dl max(l,0) at the
//    smaller eigenvalue of the pair (0 below zero, 1 above, 1/2 at zero).
inline double dmax0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? 0.0 : 0.5); }

inline void project_soc(const double* v, std::size_t d, double* out) {
    double t = v[0];
    double rho = 0.0;
    for (std::size_t i = 1; i < d; ++i) rho += v[i] * v[i];
    rho = std::sqrt(rho);
    if (rho == 0.0) {
        out[0] = std::max(t, 0.0);
        for (std::size_t i = 1; i < d; ++i) out[i] = 0.0;
        return;
    }
    if (rho < t) {
        for (std::size_t i = 0; i < d; ++i) out[i] = v[i];
    } else if (rho < -t) {
        for (std::size_t i = 0; i < d; ++i) out[i] = 0.0;
    } else {
        double c = 0.5 * (rho + t);
        out[0] = c;
        double f = c / rho;
        for (std::size_t i = 1; i < d; ++i) out[i] = f * v[i];
    }
}

inline void project_soc_vjp(const double* v, std::size_t d, const double* vbar, double* out) {
    double t = v[0];
    double rho = 0.0;
    for (std::size_t i = 1; i < d; ++i) rho += v[i] * v[i];
    rho = std::sqrt(rho);
    if (rho == 0.0) {
        out[0] = t > 0.0 ? vbar[0] : 0.0;
        for (std::size_t i = 1; i < d; ++i) out[i] = 0.0;
        return;
    }
    if (rho < t) {
        for (std::size_t i = 0; i < d; ++i) out[i] = vbar[i];
    } else if (rho < -t) {
        for (std::size_t i = 0; i < d; ++i) out[i] = 0.0;
    } else {
        // J = [ 1/2, xh'/2 ; xh/2, (t/(2 rho))(I - xh xh') + I/2 ], xh = x/rho.
        // Symmetric, so the VJP applies the same matrix.
        double xdot = 0.0;
        for (std::size_t i = 1; i < d; ++i) xdot += (v[i] / rho) * vbar[i];
        out[0] = 0.5 * vbar[0] + 0.5 * xdot;
        double tr = t / (2.0 * rho);
        for (std::size_t i = 1; i < d; ++i) {
            double xh = v[i] / rho;
            out[i] = 0.5 * xh * vbar[0] + tr * (vbar[i] - xh * xdot) + 0.5 * vbar[i];
        }
    }
}

inline void project_psd(const double* v, std::size_t s, double* out) {
    Tensor m({s, s});
    svec_to_matrix(v, s, m.data());
    SymEig eig = sym_eig(m);
    Tensor p({s, s});
    for (std::size_t k = 0; k < s; ++k) {
        double lk = std::max(eig.values[k], 0.0);
        if (lk == 0.0) continue;
        for (std::size_t i = 0; i < s; ++i) {
            double uik = eig.vectors.at(i, k) * lk;
            for (std::size_t j = 0; j < s; ++j) p.at(i, j) += uik * eig.vectors.at(j, k);
        }
    }
    svec_from_matrix(p.data(), s, out);
}

inline void project_psd_vjp(const double* v, std::size_t s, const double* vbar, double* out) {
    Tensor m({s, s});
    svec_to_matrix(v, s, m.data());
    SymEig eig = sym_eig(m);
    Tensor h({s, s});
    svec_to_matrix(vbar, s, h.data());
    // B = U' H U, scale by divided differences of max(l, 0), map back.
    Tensor hu = matmul(h, eig.vectors);            // H U
    Tensor b = matmul_t_left(eig.vectors, hu);     // U' H U
    for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t j = 0; j < s; ++j) {
            double li = eig.values[i], lj = eig.values[j];
            double g;
            if (std::fabs(li - lj) < 1e-9) {
                g = dmax0(std::min(li, lj));
            } else {
                g = (std::max(li, 0.0) - std::max(lj, 0.0)) / (li - lj);
            }
            b.at(i, j) *= g;
        }
    }
    Tensor ub = matmul(eig.vectors, b);
    Tensor res({s, s});
    // res = (U B) U'
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t k = 0; k < s; ++k) {
            double f = ub.at(i, k);
            for (std::size_t j = 0; j < s; ++j) res.at(i, j) += f * eig.vectors.at(j, k);
        }
    svec_from_matrix(res.data(), s, out);
}

}  // namespace detail

// Euclidean projection onto the product cone, segment by segment.
inline Tensor project(const ConeSpec& spec, const Tensor& v) {
    if (v.rank() != 1 || v.size() != spec.total_dim())
        throw config_error("project: vector length " + v.shape_str() + " does not match cone dim " +
                           std::to_string(spec.total_dim()));
    Tensor out({v.size()});
    std::size_t off = 0;
    for (const auto& seg : spec.segments()) {
        const double* in = v.data() + off;
        double* o = out.data() + off;
        switch (seg.kind) {
            case ConeKind::free_:
                std::copy(in, in + seg.dim, o);
                break;
            case ConeKind::zero:
                std::fill(o, o + seg.dim, 0.0);
                break;
            case ConeKind::nonneg:
                for (std::size_t i = 0; i < seg.dim; ++i) o[i] = std::max(in[i], 0.0);
                break;
            case ConeKind::soc:
                detail::project_soc(in, seg.dim, o);
                break;
            case ConeKind::psd:
                detail::project_psd(in, seg.side, o);
                break;
        }
        off += seg.dim;
    }
    return out;
}

// Vector-Jacobian product of the projection at v applied to vbar_out.
// All segment Jacobians here are symmetric, so this doubles as the JVP.
inline Tensor project_vjp(const ConeSpec& spec, const Tensor& v, const Tensor& vbar_out) {
    if (v.rank() != 1 || v.size() != spec.total_dim() || !v.same_shape(vbar_out))
        throw config_error("project_vjp: dimension mismatch");
    Tensor out({v.size()});
    std::size_t off = 0;
    for (const auto& seg : spec.segments()) {
        const double* in = v.data() + off;
        const double* vb = vbar_out.data() + off;
        double* o = out.data() + off;
        switch (seg.kind) {
            case ConeKind::free_:
                std::copy(vb, vb + seg.dim, o);
                break;
            case ConeKind::zero:
                std::fill(o, o + seg.dim, 0.0);
                break;
            case ConeKind::nonneg:
                for (std::size_t i = 0; i < seg.dim; ++i) o[i] = in[i] > 0.0 ? vb[i] : 0.0;
                break;
            case ConeKind::soc:
                detail::project_soc_vjp(in, seg.dim, vb, o);
                break;
            case ConeKind::psd:
                detail::project_psd_vjp(in, seg.side, vb, o);
                break;
        }
        off += seg.dim;
    }
    return out;
}

}  // namespace fpaccel
