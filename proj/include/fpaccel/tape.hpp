#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fpaccel/cones.hpp"
#include "fpaccel/linalg.hpp"
#include "fpaccel/tensor.hpp"

namespace fpaccel {

// Handle to a node on a tape. Plain index; valid only for the tape that
// produced it.
struct VarRef {
    int id = -1;
    bool valid() const { return id >= 0; }
};

enum class Op {
    leaf,
    add,
    sub,
    mul,
    scale,      // x * c
    add_const,  // x + c
    div_const,  // x / c
    div_by,     // x / s, s a tracked 1-element tensor
    matvec,     // M x
    matvec_t,   // M' x
    matmul,
    concat,
    slice,
    tanh_fn,
    sigmoid_fn,
    relu_fn,
    elu_fn,
    norm2_fn,
    sum_fn,
    lu_solve,   // cached factorization, treated as constant data
    cone_proj,
    shrink_fn,  // soft threshold
};

inline const char* op_name(Op op) {
    switch (op) {
        case Op::leaf: return "leaf";
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::mul: return "mul";
        case Op::scale: return "scale";
        case Op::add_const: return "add_const";
        case Op::div_const: return "div_const";
        case Op::div_by: return "div_by";
        case Op::matvec: return "matvec";
        case Op::matvec_t: return "matvec_t";
        case Op::matmul: return "matmul";
        case Op::concat: return "concat";
        case Op::slice: return "slice";
        case Op::tanh_fn: return "tanh";
        case Op::sigmoid_fn: return "sigmoid";
        case Op::relu_fn: return "relu";
        case Op::elu_fn: return "elu";
        case Op::norm2_fn: return "norm2";
        case Op::sum_fn: return "sum";
        case Op::lu_solve: return "lu_solve";
        case Op::cone_proj: return "cone_proj";
        case Op::shrink_fn: return "shrink";
    }
    return "?";
}

// Gradients of one backward pass, indexed by node id. Nodes the seed does not
// reach have empty tensors.
class Gradients {
public:
    explicit Gradients(std::size_t n) : adj_(n) {}

    bool has(VarRef v) const {
        return v.valid() && static_cast<std::size_t>(v.id) < adj_.size() &&
               adj_[static_cast<std::size_t>(v.id)].size() > 0;
    }

    const Tensor& of(VarRef v) const { return adj_[static_cast<std::size_t>(v.id)]; }

    Tensor& slot(int id) { return adj_[static_cast<std::size_t>(id)]; }

private:
    std::vector<Tensor> adj_;
};

// Reverse-mode tape over dense tensors. Append-only; insertion order is the
// topological order, and backward walks it strictly in reverse, so every
// node's adjoint is fully accumulated before its own rule fires. Single-owner
// while recording; distinct tapes never share state.
class Tape {
public:
    struct Node {
        Op op = Op::leaf;
        int in0 = -1;
        int in1 = -1;
        double c = 0.0;          // scalar payload (scale factor, threshold, ...)
        std::size_t a = 0;       // slice offset
        std::size_t b = 0;       // slice length
        Tensor value;
        std::shared_ptr<const LuFactorization> lu;
        std::shared_ptr<const ConeSpec> cone;
    };

    std::size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }

    const Tensor& value(VarRef v) const { return node(v).value; }

    VarRef leaf(Tensor t) {
        Node n;
        n.op = Op::leaf;
        n.value = std::move(t);
        return push(std::move(n));
    }

    VarRef add(VarRef x, VarRef y) {
        return binary(Op::add, x, y, fpaccel::add(value(x), value(y)));
    }

    VarRef sub(VarRef x, VarRef y) {
        return binary(Op::sub, x, y, fpaccel::sub(value(x), value(y)));
    }

    VarRef mul(VarRef x, VarRef y) {
        return binary(Op::mul, x, y, fpaccel::mul(value(x), value(y)));
    }

    VarRef scale(VarRef x, double c) {
        Node n = unary(Op::scale, x, fpaccel::scale(value(x), c));
        n.c = c;
        return push(std::move(n));
    }

    VarRef add_const(VarRef x, double c) {
        Tensor v = value(x);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += c;
        Node n = unary(Op::add_const, x, std::move(v));
        n.c = c;
        return push(std::move(n));
    }

    VarRef div_const(VarRef x, double c) {
        if (c == 0.0) throw config_error("div_const: division by zero");
        Tensor v = value(x);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] /= c;
        Node n = unary(Op::div_const, x, std::move(v));
        n.c = c;
        return push(std::move(n));
    }

    // x / s with s a tracked scalar (1-element tensor)
    VarRef div_by(VarRef x, VarRef s) {
        if (value(s).size() != 1) throw config_error("div_by: divisor must be a 1-element tensor");
        double sv = value(s)[0];
        Tensor v = value(x);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] /= sv;
        return binary(Op::div_by, x, s, std::move(v));
    }

    VarRef matvec(VarRef m, VarRef x) {
        return binary(Op::matvec, m, x, fpaccel::matvec(value(m), value(x)));
    }

    VarRef matvec_t(VarRef m, VarRef x) {
        return binary(Op::matvec_t, m, x, fpaccel::matvec_t(value(m), value(x)));
    }

    VarRef matmul(VarRef a, VarRef b) {
        return binary(Op::matmul, a, b, fpaccel::matmul(value(a), value(b)));
    }

    VarRef concat(VarRef a, VarRef b) {
        return binary(Op::concat, a, b, fpaccel::concat(value(a), value(b)));
    }

    VarRef slice(VarRef x, std::size_t offset, std::size_t len) {
        Node n = unary(Op::slice, x, fpaccel::slice(value(x), offset, len));
        n.a = offset;
        n.b = len;
        return push(std::move(n));
    }

    VarRef tanh(VarRef x) {
        Tensor v = value(x);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(v[i]);
        return push(unary(Op::tanh_fn, x, std::move(v)));
    }

    VarRef sigmoid(VarRef x) {
        Tensor v = value(x);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 / (1.0 + std::exp(-v[i]));
        return push(unary(Op::sigmoid_fn, x, std::move(v)));
    }

    VarRef relu(VarRef x) {
        Tensor v = value(x);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::max(v[i], 0.0);
        return push(unary(Op::relu_fn, x, std::move(v)));
    }

    VarRef elu(VarRef x) {
        Tensor v = value(x);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = v[i] > 0.0 ? v[i] : std::expm1(v[i]);
        return push(unary(Op::elu_fn, x, std::move(v)));
    }

    VarRef norm2(VarRef x) {
        return push(unary(Op::norm2_fn, x, Tensor::scalar(fpaccel::norm2(value(x)))));
    }

    VarRef sum(VarRef x) {
        double s = 0.0;
        const Tensor& v = value(x);
        for (std::size_t i = 0; i < v.size(); ++i) s += v[i];
        return push(unary(Op::sum_fn, x, Tensor::scalar(s)));
    }

    // u = M^{-1} v through a cached factorization. M is constant data: the
    // backward rule solves the transposed system with the same factors and
    // nothing propagates to M.
    VarRef lu_solve(std::shared_ptr<const LuFactorization> fact, VarRef v) {
        if (!fact) throw config_error("lu_solve: null factorization");
        Node n = unary(Op::lu_solve, v, fact->solve(value(v)));
        n.lu = std::move(fact);
        return push(std::move(n));
    }

    VarRef cone_project(std::shared_ptr<const ConeSpec> spec, VarRef v) {
        if (!spec) throw config_error("cone_project: null cone spec");
        Node n = unary(Op::cone_proj, v, fpaccel::project(*spec, value(v)));
        n.cone = std::move(spec);
        return push(std::move(n));
    }

    // soft threshold S_k(x)_i = sign(x_i) (|x_i| - k)_+
    VarRef shrink(VarRef x, double kappa) {
        if (kappa < 0.0) throw config_error("shrink: threshold must be >= 0");
        Tensor v = value(x);
        for (std::size_t i = 0; i < v.size(); ++i) {
            double m = std::fabs(v[i]) - kappa;
            v[i] = m > 0.0 ? (v[i] > 0.0 ? m : -m) : 0.0;
        }
        Node n = unary(Op::shrink_fn, x, std::move(v));
        n.c = kappa;
        return push(std::move(n));
    }

    // Reverse pass from `seed_node` with adjoint `seed`. Returns adjoints for
    // every reached node; leaves included.
    Gradients backward(VarRef seed_node, const Tensor& seed) const {
        if (nodes_.empty()) throw config_error("backward: tape is empty");
        const Node& sn = node(seed_node);
        if (!sn.value.same_shape(seed))
            throw config_error("backward: seed shape " + seed.shape_str() +
                               " does not match node value " + sn.value.shape_str());
        Gradients g(nodes_.size());
        g.slot(seed_node.id) = seed;
        for (int id = seed_node.id; id >= 0; --id) {
            const Tensor& ybar = g.slot(id);
            if (ybar.size() == 0) continue;  // not reached from the seed
            apply_backward(nodes_[static_cast<std::size_t>(id)], ybar, g);
        }
        return g;
    }

private:
    Node unary(Op op, VarRef x, Tensor value) const {
        Node n;
        n.op = op;
        n.in0 = require(x);
        n.value = std::move(value);
        return n;
    }

    VarRef binary(Op op, VarRef x, VarRef y, Tensor value) {
        Node n;
        n.op = op;
        n.in0 = require(x);
        n.in1 = require(y);
        n.value = std::move(value);
        return push(std::move(n));
    }

    int require(VarRef v) const {
        if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
            throw config_error("tape: invalid VarRef");
        return v.id;
    }

    VarRef push(Node n) {
        if (!n.value.finite())
            throw numeric_error(std::string("tape op '") + op_name(n.op) +
                                "' produced a non-finite value");
        nodes_.push_back(std::move(n));
        return VarRef{static_cast<int>(nodes_.size()) - 1};
    }

    const Node& node(VarRef v) const { return nodes_[static_cast<std::size_t>(require(v))]; }

    void accum_into(Gradients& g, int id, Tensor&& delta) const {
        Tensor& slot = g.slot(id);
        if (slot.size() == 0)
            slot = std::move(delta);
        else
            for (std::size_t i = 0; i < delta.size(); ++i) slot[i] += delta[i];
    }

    void apply_backward(const Node& n, const Tensor& ybar, Gradients& g) const {
        switch (n.op) {
            case Op::leaf:
                break;
            case Op::add:
                accum_into(g, n.in0, Tensor(ybar));
                accum_into(g, n.in1, Tensor(ybar));
                break;
            case Op::sub:
                accum_into(g, n.in0, Tensor(ybar));
                accum_into(g, n.in1, fpaccel::scale(ybar, -1.0));
                break;
            case Op::mul:
                accum_into(g, n.in0, fpaccel::mul(ybar, val(n.in1)));
                accum_into(g, n.in1, fpaccel::mul(ybar, val(n.in0)));
                break;
            case Op::scale:
                accum_into(g, n.in0, fpaccel::scale(ybar, n.c));
                break;
            case Op::add_const:
                accum_into(g, n.in0, Tensor(ybar));
                break;
            case Op::div_const:
                accum_into(g, n.in0, fpaccel::scale(ybar, 1.0 / n.c));
                break;
            case Op::div_by: {
                double s = val(n.in1)[0];
                accum_into(g, n.in0, fpaccel::scale(ybar, 1.0 / s));
                // d/ds (x/s) = -x/s^2 = -value/s
                double acc = 0.0;
                for (std::size_t i = 0; i < ybar.size(); ++i) acc += ybar[i] * n.value[i];
                accum_into(g, n.in1, Tensor::scalar(-acc / s));
                break;
            }
            case Op::matvec: {
                const Tensor& m = val(n.in0);
                const Tensor& x = val(n.in1);
                Tensor mbar({m.rows(), m.cols()});
                for (std::size_t r = 0; r < m.rows(); ++r) {
                    double yb = ybar[r];
                    if (yb == 0.0) continue;
                    double* row = mbar.data() + r * m.cols();
                    for (std::size_t c2 = 0; c2 < m.cols(); ++c2) row[c2] = yb * x[c2];
                }
                accum_into(g, n.in0, std::move(mbar));
                accum_into(g, n.in1, fpaccel::matvec_t(m, ybar));
                break;
            }
            case Op::matvec_t: {
                const Tensor& m = val(n.in0);
                const Tensor& x = val(n.in1);
                Tensor mbar({m.rows(), m.cols()});
                for (std::size_t r = 0; r < m.rows(); ++r) {
                    double xr = x[r];
                    if (xr == 0.0) continue;
                    double* row = mbar.data() + r * m.cols();
                    for (std::size_t c2 = 0; c2 < m.cols(); ++c2) row[c2] = xr * ybar[c2];
                }
                accum_into(g, n.in0, std::move(mbar));
                accum_into(g, n.in1, fpaccel::matvec(m, ybar));
                break;
            }
            case Op::matmul: {
                const Tensor& a = val(n.in0);
                const Tensor& b = val(n.in1);
                // abar = ybar b', bbar = a' ybar
                Tensor abar({a.rows(), a.cols()});
                for (std::size_t i = 0; i < a.rows(); ++i)
                    for (std::size_t j = 0; j < b.cols(); ++j) {
                        double yb = ybar[i * b.cols() + j];
                        if (yb == 0.0) continue;
                        for (std::size_t k = 0; k < a.cols(); ++k)
                            abar.at(i, k) += yb * b.at(k, j);
                    }
                Tensor bbar({b.rows(), b.cols()});
                for (std::size_t i = 0; i < a.rows(); ++i)
                    for (std::size_t k = 0; k < a.cols(); ++k) {
                        double av = a.at(i, k);
                        if (av == 0.0) continue;
                        for (std::size_t j = 0; j < b.cols(); ++j)
                            bbar.at(k, j) += av * ybar[i * b.cols() + j];
                    }
                accum_into(g, n.in0, std::move(abar));
                accum_into(g, n.in1, std::move(bbar));
                break;
            }
            case Op::concat: {
                std::size_t na = val(n.in0).size();
                accum_into(g, n.in0, fpaccel::slice(ybar, 0, na));
                accum_into(g, n.in1, fpaccel::slice(ybar, na, ybar.size() - na));
                break;
            }
            case Op::slice: {
                Tensor xbar(val(n.in0).shape());
                for (std::size_t i = 0; i < n.b; ++i) xbar[n.a + i] = ybar[i];
                accum_into(g, n.in0, std::move(xbar));
                break;
            }
            case Op::tanh_fn: {
                Tensor d(ybar.shape());
                for (std::size_t i = 0; i < d.size(); ++i)
                    d[i] = ybar[i] * (1.0 - n.value[i] * n.value[i]);
                accum_into(g, n.in0, std::move(d));
                break;
            }
            case Op::sigmoid_fn: {
                Tensor d(ybar.shape());
                for (std::size_t i = 0; i < d.size(); ++i)
                    d[i] = ybar[i] * n.value[i] * (1.0 - n.value[i]);
                accum_into(g, n.in0, std::move(d));
                break;
            }
            case Op::relu_fn: {
                const Tensor& x = val(n.in0);
                Tensor d(ybar.shape());
                for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] > 0.0 ? ybar[i] : 0.0;
                accum_into(g, n.in0, std::move(d));
                break;
            }
            case Op::elu_fn: {
                const Tensor& x = val(n.in0);
                Tensor d(ybar.shape());
                for (std::size_t i = 0; i < d.size(); ++i)
                    d[i] = ybar[i] * (x[i] > 0.0 ? 1.0 : n.value[i] + 1.0);
                accum_into(g, n.in0, std::move(d));
                break;
            }
            case Op::norm2_fn: {
                const Tensor& x = val(n.in0);
                double nv = n.value[0];
                Tensor d(x.shape());
                if (nv > 1e-300) {
                    double f = ybar[0] / nv;
                    for (std::size_t i = 0; i < d.size(); ++i) d[i] = f * x[i];
                }
                // at the origin the norm is not differentiable; take 0
                accum_into(g, n.in0, std::move(d));
                break;
            }
            case Op::sum_fn: {
                Tensor d(val(n.in0).shape());
                for (std::size_t i = 0; i < d.size(); ++i) d[i] = ybar[0];
                accum_into(g, n.in0, std::move(d));
                break;
            }
            case Op::lu_solve:
                accum_into(g, n.in0, n.lu->solve_transposed(ybar));
                break;
            case Op::cone_proj:
                accum_into(g, n.in0, fpaccel::project_vjp(*n.cone, val(n.in0), ybar));
                break;
            case Op::shrink_fn: {
                const Tensor& x = val(n.in0);
                Tensor d(ybar.shape());
                for (std::size_t i = 0; i < d.size(); ++i)
                    d[i] = std::fabs(x[i]) > n.c ? ybar[i] : 0.0;
                accum_into(g, n.in0, std::move(d));
                break;
            }
        }
    }

    const Tensor& val(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

    std::vector<Node> nodes_;
};

// Max relative error between the analytic gradient of a scalar-valued closure
// and central finite differences. The closure builds the computation on the
// given tape from one leaf.
inline double grad_check(const std::function<VarRef(Tape&, VarRef)>& op_closure,
                         const Tensor& point, double eps) {
    Tape tape;
    VarRef x = tape.leaf(point);
    VarRef out = op_closure(tape, x);
    if (tape.value(out).size() != 1) throw config_error("grad_check: closure must be scalar-valued");
    Gradients g = tape.backward(out, Tensor::scalar(1.0));
    Tensor analytic =
        g.has(x) ? g.of(x) : Tensor::zeros(point.shape());

    double worst = 0.0;
    for (std::size_t i = 0; i < point.size(); ++i) {
        Tensor hi = point, lo = point;
        hi[i] += eps;
        lo[i] -= eps;
        Tape th, tl;
        double fh = th.value(op_closure(th, th.leaf(hi)))[0];
        double fl = tl.value(op_closure(tl, tl.leaf(lo)))[0];
        double fd = (fh - fl) / (2.0 * eps);
        double err = std::fabs(analytic[i] - fd) / std::max(1.0, std::fabs(fd));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace fpaccel
