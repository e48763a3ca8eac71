#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "fpaccel/cones.hpp"
#include "fpaccel/io.hpp"
#include "fpaccel/runner.hpp"
#include "fpaccel/tape.hpp"
#include "fpaccel/tensor.hpp"

namespace fpaccel {

// Diagonal row/column scalings plus a scalar: data is stored equilibrated as
// A_hat = D A E, b_hat = sigma D b, c_hat = sigma E c, and solutions map back
// as x = E x_hat / sigma, y = D y_hat / sigma, s = D^{-1} s_hat / sigma.
struct Equilibration {
    Tensor d;  // row scales, length m
    Tensor e;  // column scales, length n
    double sigma = 1.0;

    static Equilibration identity(std::size_t m, std::size_t n) {
        Equilibration eq;
        eq.d = Tensor::full({m}, 1.0);
        eq.e = Tensor::full({n}, 1.0);
        eq.sigma = 1.0;
        return eq;
    }

    bool is_identity() const {
        if (sigma != 1.0) return false;
        for (std::size_t i = 0; i < d.size(); ++i)
            if (d[i] != 1.0) return false;
        for (std::size_t j = 0; j < e.size(); ++j)
            if (e[j] != 1.0) return false;
        return true;
    }
};

// Cone program in standard form: minimize c'x subject to Ax + s = b,
// s in K. The stored data may be equilibrated; `scaling` maps back.
class ConicProblem {
public:
    Tensor A;  // m x n
    Tensor b;  // m
    Tensor c;  // n
    ConeSpec cones;
    Equilibration scaling;

    ConicProblem() = default;

    ConicProblem(Tensor a, Tensor b_, Tensor c_, ConeSpec k)
        : A(std::move(a)), b(std::move(b_)), c(std::move(c_)), cones(std::move(k)) {
        scaling = Equilibration::identity(m(), n());
        validate();
    }

    std::size_t m() const { return A.rows(); }
    std::size_t n() const { return A.cols(); }

    void validate() const {
        if (A.rank() != 2) throw config_error("conic problem: A must be a matrix");
        if (b.size() != m() || c.size() != n())
            throw config_error("conic problem: b/c lengths do not match A");
        if (cones.total_dim() != m())
            throw config_error("conic problem: cone dims sum to " +
                               std::to_string(cones.total_dim()) + ", expected m = " +
                               std::to_string(m()));
        for (const auto& seg : cones.segments())
            if (seg.kind == ConeKind::free_)
                throw config_error("conic problem: free segments are not valid problem cones");
        if (!A.finite() || !b.finite() || !c.finite())
            throw numeric_error("conic problem: non-finite data");
        if (scaling.d.size() != m() || scaling.e.size() != n())
            throw config_error("conic problem: scaling lengths do not match data");
    }

    // Reconstruct the un-equilibrated problem.
    ConicProblem unscaled() const {
        if (scaling.is_identity()) return *this;
        ConicProblem p;
        p.A = Tensor({m(), n()});
        for (std::size_t i = 0; i < m(); ++i)
            for (std::size_t j = 0; j < n(); ++j)
                p.A.at(i, j) = A.at(i, j) / (scaling.d[i] * scaling.e[j]);
        p.b = Tensor({m()});
        for (std::size_t i = 0; i < m(); ++i) p.b[i] = b[i] / (scaling.sigma * scaling.d[i]);
        p.c = Tensor({n()});
        for (std::size_t j = 0; j < n(); ++j) p.c[j] = c[j] / (scaling.sigma * scaling.e[j]);
        p.cones = cones;
        p.scaling = Equilibration::identity(m(), n());
        return p;
    }
};

// Ruiz-style equilibration: alternately scale rows toward unit max-norm
// (rows of one cone segment share a scale, so D K = K) and columns toward
// unit max-norm. Zero rows/columns keep scale 1.
inline ConicProblem equilibrate(const ConicProblem& problem, int n_iters) {
    ConicProblem base = problem.unscaled();
    std::size_t m = base.m(), n = base.n();
    Tensor w = base.A;
    Tensor d = Tensor::full({m}, 1.0);
    Tensor e = Tensor::full({n}, 1.0);
    for (int it = 0; it < n_iters; ++it) {
        std::size_t row = 0;
        for (const auto& seg : base.cones.segments()) {
            double g = 0.0;
            for (std::size_t i = row; i < row + seg.dim; ++i)
                for (std::size_t j = 0; j < n; ++j) g = std::max(g, std::fabs(w.at(i, j)));
            if (g > 0.0) {
                double f = 1.0 / std::sqrt(g);
                for (std::size_t i = row; i < row + seg.dim; ++i) {
                    d[i] *= f;
                    for (std::size_t j = 0; j < n; ++j) w.at(i, j) *= f;
                }
            }
            row += seg.dim;
        }
        for (std::size_t j = 0; j < n; ++j) {
            double g = 0.0;
            for (std::size_t i = 0; i < m; ++i) g = std::max(g, std::fabs(w.at(i, j)));
            if (g > 0.0) {
                double f = 1.0 / std::sqrt(g);
                e[j] *= f;
                for (std::size_t i = 0; i < m; ++i) w.at(i, j) *= f;
            }
        }
    }
    ConicProblem out;
    out.A = std::move(w);
    out.b = Tensor({m});
    for (std::size_t i = 0; i < m; ++i) out.b[i] = d[i] * base.b[i];
    out.c = Tensor({n});
    for (std::size_t j = 0; j < n; ++j) out.c[j] = e[j] * base.c[j];
    out.cones = base.cones;
    out.scaling.d = std::move(d);
    out.scaling.e = std::move(e);
    out.scaling.sigma = 1.0;
    out.validate();
    return out;
}

// Homogeneous self-dual embedding iterate: u = (x-block, y-block, tau),
// v = (r-block, s-block, kappa).
struct SolverState {
    Tensor u;
    Tensor v;
    std::size_t iteration = 0;
};

// Skew-symmetric embedding matrix Q = [[0, A', c], [-A, 0, b], [-c', -b', 0]].
inline Tensor build_q(const ConicProblem& p) {
    std::size_t n = p.n(), m = p.m(), big = n + m + 1;
    Tensor q({big, big});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            q.at(j, n + i) = p.A.at(i, j);   // A'
            q.at(n + i, j) = -p.A.at(i, j);  // -A
        }
    for (std::size_t j = 0; j < n; ++j) {
        q.at(j, n + m) = p.c[j];
        q.at(n + m, j) = -p.c[j];
    }
    for (std::size_t i = 0; i < m; ++i) {
        q.at(n + i, n + m) = p.b[i];
        q.at(n + m, n + i) = -p.b[i];
    }
    return q;
}

// (I + Q) factorized once per problem instance; reused by every iteration
// and by every backward pass. The projection cone of the splitting step is
// R^n x K* x R+.
struct Embedding {
    std::size_t n = 0;
    std::size_t m = 0;
    std::shared_ptr<const LuFactorization> iq;
    std::shared_ptr<const ConeSpec> proj_cone;

    std::size_t big() const { return n + m + 1; }
};

inline Embedding embed(const ConicProblem& p) {
    p.validate();
    Embedding emb;
    emb.n = p.n();
    emb.m = p.m();
    Tensor iq = build_q(p);
    for (std::size_t i = 0; i < emb.big(); ++i) iq.at(i, i) += 1.0;
    emb.iq = std::make_shared<LuFactorization>(iq);
    auto cone = std::make_shared<ConeSpec>();
    cone->append(ConeKind::free_, emb.n);
    cone->append_all(dual_cone(p.cones));
    cone->append(ConeKind::nonneg, 1);
    emb.proj_cone = std::move(cone);
    return emb;
}

struct StepConfig {
    double relax_alpha = 1.5;
    bool rescale_iterates = true;
    double eps_tau = 1e-6;
};

namespace detail {
constexpr double kNormFloor = 1e-12;
constexpr double kR0Floor = 1e-12;
}  // namespace detail

// One splitting step on the stacked iterate [u; v]:
//   u~ = (I+Q)^{-1}(u + v)
//   u^ = alpha u~ + (1 - alpha) u
//   u+ = Pi_C(u^ - v),  C = R^n x K* x R+
//   v+ = v - u^ + u+
// then (optionally) rescale [u+; v+] to norm sqrt(n+m+1). The arithmetic
// mirrors fp_step_taped operation for operation so both paths agree bitwise.
inline Tensor fp_step_vec(const Tensor& x, const Embedding& emb, const StepConfig& cfg) {
    std::size_t big = emb.big();
    if (x.size() != 2 * big) throw config_error("fp_step: iterate length mismatch");
    Tensor u = slice(x, 0, big);
    Tensor v = slice(x, big, big);
    Tensor w = add(u, v);
    Tensor ut = emb.iq->solve(w);
    Tensor uh = add(scale(ut, cfg.relax_alpha), scale(u, 1.0 - cfg.relax_alpha));
    Tensor uc = project(*emb.proj_cone, sub(uh, v));
    Tensor vn = add(sub(v, uh), uc);
    Tensor xn = concat(uc, vn);
    if (cfg.rescale_iterates) {
        double nrm = norm2(xn);
        double den = (std::max(nrm + (-detail::kNormFloor), 0.0) + detail::kNormFloor) /
                     std::sqrt(static_cast<double>(big));
        for (std::size_t i = 0; i < xn.size(); ++i) xn[i] /= den;
    }
    require_finite(xn, "fp_step");
    return xn;
}

inline VarRef fp_step_taped(Tape& tape, VarRef x, const Embedding& emb, const StepConfig& cfg) {
    std::size_t big = emb.big();
    if (tape.value(x).size() != 2 * big) throw config_error("fp_step: iterate length mismatch");
    VarRef u = tape.slice(x, 0, big);
    VarRef v = tape.slice(x, big, big);
    VarRef w = tape.add(u, v);
    VarRef ut = tape.lu_solve(emb.iq, w);
    VarRef uh = tape.add(tape.scale(ut, cfg.relax_alpha), tape.scale(u, 1.0 - cfg.relax_alpha));
    VarRef uc = tape.cone_project(emb.proj_cone, tape.sub(uh, v));
    VarRef vn = tape.add(tape.sub(v, uh), uc);
    VarRef xn = tape.concat(uc, vn);
    if (cfg.rescale_iterates) {
        VarRef nrm = tape.norm2(xn);
        VarRef den = tape.div_const(
            tape.add_const(tape.relu(tape.add_const(nrm, -detail::kNormFloor)),
                           detail::kNormFloor),
            std::sqrt(static_cast<double>(big)));
        xn = tape.div_by(xn, den);
    }
    return xn;
}

inline SolverState fp_step(const SolverState& state, const Embedding& emb,
                           const StepConfig& cfg) {
    Tensor x = concat(state.u, state.v);
    Tensor xn = fp_step_vec(x, emb, cfg);
    SolverState next;
    next.u = slice(xn, 0, emb.big());
    next.v = slice(xn, emb.big(), emb.big());
    next.iteration = state.iteration + 1;
    return next;
}

// tau floor implemented as eps + relu(tau - eps) so the raw and taped paths
// round identically
inline double clamp_tau(double tau, double eps) {
    return std::max(tau + (-eps), 0.0) + eps;
}

// tau-normalized fixed-point residual over the non-tau blocks of u:
// || u_t / tau_t - u_next / tau_next ||_2. The non-normalized variant is the
// plain distance over the full u (tau included).
inline double fp_residual(const Tensor& u, const Tensor& u_next, double eps_tau,
                          bool normalized = true) {
    check_same_shape(u, u_next, "fp_residual");
    std::size_t big = u.size();
    if (!normalized) {
        double s = 0.0;
        for (std::size_t i = 0; i < big; ++i) {
            double dlt = u[i] - u_next[i];
            s += dlt * dlt;
        }
        return std::sqrt(s);
    }
    double t1 = clamp_tau(u[big - 1], eps_tau);
    double t2 = clamp_tau(u_next[big - 1], eps_tau);
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < big; ++i) {
        double dlt = u[i] / t1 - u_next[i] / t2;
        s += dlt * dlt;
    }
    return std::sqrt(s);
}

// taped twin of fp_residual on stacked iterates [u; v]
inline VarRef fp_residual_taped(Tape& tape, VarRef x, VarRef x_next, std::size_t big,
                                double eps_tau, bool normalized = true) {
    VarRef u = tape.slice(x, 0, big);
    VarRef un = tape.slice(x_next, 0, big);
    if (!normalized) return tape.norm2(tape.sub(u, un));
    auto clamp = [&](VarRef tau) {
        return tape.add_const(tape.relu(tape.add_const(tau, -eps_tau)), eps_tau);
    };
    VarRef t1 = clamp(tape.slice(u, big - 1, 1));
    VarRef t2 = clamp(tape.slice(un, big - 1, 1));
    VarRef a = tape.div_by(tape.slice(u, 0, big - 1), t1);
    VarRef bb = tape.div_by(tape.slice(un, 0, big - 1), t2);
    return tape.norm2(tape.sub(a, bb));
}

// Extracted solution; when tau sits below the floor the state is a
// (near-)infeasibility certificate and nothing is extracted.
struct Solution {
    Tensor x, y, s;
    double tau = 0.0;
    bool tau_floor_hit = false;
};

inline Solution extract_solution(const SolverState& state, const ConicProblem& problem,
                                 double eps_tau = 1e-6) {
    std::size_t n = problem.n(), m = problem.m();
    if (state.u.size() != n + m + 1 || state.v.size() != n + m + 1)
        throw config_error("extract_solution: state does not match problem dims");
    Solution sol;
    sol.tau = state.u[n + m];
    if (sol.tau < eps_tau) {
        sol.tau_floor_hit = true;
        return sol;
    }
    const Equilibration& sc = problem.scaling;
    sol.x = Tensor({n});
    for (std::size_t j = 0; j < n; ++j)
        sol.x[j] = (state.u[j] / sol.tau) * sc.e[j] / sc.sigma;
    sol.y = Tensor({m});
    sol.s = Tensor({m});
    for (std::size_t i = 0; i < m; ++i) {
        sol.y[i] = (state.u[n + i] / sol.tau) * sc.d[i] / sc.sigma;
        sol.s[i] = (state.v[n + i] / sol.tau) / sc.d[i] / sc.sigma;
    }
    return sol;
}

struct PrimalDualResiduals {
    double primal = 0.0;
    double dual = 0.0;
    double gap = 0.0;
};

// p = ||Ax + s - b|| / (1 + ||b||), d = ||A'y + c|| / (1 + ||c||),
// gap = |c'x + b'y| / (1 + |c'x| + |b'y|), all against the un-equilibrated
// data.
inline PrimalDualResiduals primal_dual_residuals_of(const ConicProblem& original,
                                                    const Tensor& x, const Tensor& y,
                                                    const Tensor& s) {
    PrimalDualResiduals r;
    Tensor pv = sub(add(matvec(original.A, x), s), original.b);
    r.primal = norm2(pv) / (1.0 + norm2(original.b));
    Tensor dv = add(matvec_t(original.A, y), original.c);
    r.dual = norm2(dv) / (1.0 + norm2(original.c));
    double cx = dot(original.c, x);
    double by = dot(original.b, y);
    r.gap = std::fabs(cx + by) / (1.0 + std::fabs(cx) + std::fabs(by));
    return r;
}

inline PrimalDualResiduals primal_dual_residuals(const SolverState& state,
                                                 const ConicProblem& problem,
                                                 double eps_tau = 1e-6) {
    std::size_t n = problem.n(), m = problem.m();
    ConicProblem original = problem.unscaled();
    double tau = clamp_tau(state.u[n + m], eps_tau);
    const Equilibration& sc = problem.scaling;
    Tensor x({n}), y({m}), s({m});
    for (std::size_t j = 0; j < n; ++j) x[j] = (state.u[j] / tau) * sc.e[j] / sc.sigma;
    for (std::size_t i = 0; i < m; ++i) {
        y[i] = (state.u[n + i] / tau) * sc.d[i] / sc.sigma;
        s[i] = (state.v[n + i] / tau) / sc.d[i] / sc.sigma;
    }
    return primal_dual_residuals_of(original, x, y, s);
}

inline double primal_objective(const ConicProblem& problem, const Tensor& x_unscaled) {
    ConicProblem original = problem.unscaled();
    return dot(original.c, x_unscaled);
}

// ---- runner instance ----

struct SolverOptions {
    int equilibrate_iters = 10;
    StepConfig step;
};

// Packages an equilibrated cone problem as a FixedPointInstance: stacked
// iterate [u; v] of length 2(n+m+1), context phi = [vec(A); b; c] of the
// equilibrated data, default start u = v = e_tau.
inline FixedPointInstance make_conic_instance(const ConicProblem& problem,
                                              const SolverOptions& options = {}) {
    ConicProblem eq = options.equilibrate_iters > 0
                          ? equilibrate(problem, options.equilibrate_iters)
                          : problem;
    auto emb = std::make_shared<Embedding>(embed(eq));
    std::size_t n = eq.n(), m = eq.m(), big = n + m + 1;
    StepConfig step_cfg = options.step;

    FixedPointInstance inst;
    inst.dim = 2 * big;

    Tensor phi({m * n + m + n});
    std::copy(eq.A.data(), eq.A.data() + m * n, phi.data());
    std::copy(eq.b.data(), eq.b.data() + m, phi.data() + m * n);
    std::copy(eq.c.data(), eq.c.data() + n, phi.data() + m * n + m);
    inst.context = std::move(phi);

    Tensor x0({2 * big});
    x0[big - 1] = 1.0;
    x0[2 * big - 1] = 1.0;
    inst.default_init = std::move(x0);

    inst.step = [emb, step_cfg](const Tensor& x) { return fp_step_vec(x, *emb, step_cfg); };
    inst.step_taped = [emb, step_cfg](Tape& tape, VarRef x) {
        return fp_step_taped(tape, x, *emb, step_cfg);
    };

    double eps_tau = step_cfg.eps_tau;
    inst.residual = [big, eps_tau](const Tensor& x, const Tensor& xn) {
        return fp_residual(slice(x, 0, big), slice(xn, 0, big), eps_tau, true);
    };
    inst.residual_taped = [big, eps_tau](Tape& tape, VarRef x, VarRef xn) {
        return fp_residual_taped(tape, x, xn, big, eps_tau, true);
    };
    inst.residual_raw = [big, eps_tau](const Tensor& x, const Tensor& xn) {
        return fp_residual(slice(x, 0, big), slice(xn, 0, big), eps_tau, false);
    };
    inst.residual_raw_taped = [big, eps_tau](Tape& tape, VarRef x, VarRef xn) {
        return fp_residual_taped(tape, x, xn, big, eps_tau, false);
    };

    // reporting + the Eq-3 style final primal/dual term need the original data
    ConicProblem original = problem.unscaled();
    auto a0 = std::make_shared<Tensor>(original.A);
    auto b0 = std::make_shared<Tensor>(original.b);
    auto c0 = std::make_shared<Tensor>(original.c);
    double nb = 1.0 + norm2(original.b);
    double nc = 1.0 + norm2(original.c);
    // fold the inverse equilibration into diagonal vectors
    Tensor ex({n}), dy({m}), dsv({m});
    for (std::size_t j = 0; j < n; ++j) ex[j] = eq.scaling.e[j] / eq.scaling.sigma;
    for (std::size_t i = 0; i < m; ++i) {
        dy[i] = eq.scaling.d[i] / eq.scaling.sigma;
        dsv[i] = 1.0 / eq.scaling.d[i] / eq.scaling.sigma;
    }
    auto exp_ = std::make_shared<Tensor>(std::move(ex));
    auto dyp = std::make_shared<Tensor>(std::move(dy));
    auto dsp = std::make_shared<Tensor>(std::move(dsv));

    inst.final_pd = [=](const Tensor& xv) {
        double tau = clamp_tau(xv[big - 1], eps_tau);
        Tensor x({n}), y({m}), s({m});
        for (std::size_t j = 0; j < n; ++j) x[j] = xv[j] / tau * (*exp_)[j];
        for (std::size_t i = 0; i < m; ++i) {
            y[i] = xv[n + i] / tau * (*dyp)[i];
            s[i] = xv[big + n + i] / tau * (*dsp)[i];
        }
        double p = norm2(sub(add(matvec(*a0, x), s), *b0)) / nb;
        double d = norm2(add(matvec_t(*a0, y), *c0)) / nc;
        return std::sqrt(p * p + d * d);
    };
    inst.final_pd_taped = [=](Tape& tape, VarRef xv) {
        VarRef tau = tape.add_const(
            tape.relu(tape.add_const(tape.slice(xv, big - 1, 1), -eps_tau)), eps_tau);
        VarRef x = tape.mul(tape.div_by(tape.slice(xv, 0, n), tau), tape.leaf(*exp_));
        VarRef y = tape.mul(tape.div_by(tape.slice(xv, n, m), tau), tape.leaf(*dyp));
        VarRef s = tape.mul(tape.div_by(tape.slice(xv, big + n, m), tau), tape.leaf(*dsp));
        VarRef av = tape.leaf(*a0);
        VarRef p = tape.div_const(
            tape.norm2(tape.sub(tape.add(tape.matvec(av, x), s), tape.leaf(*b0))), nb);
        VarRef d = tape.div_const(tape.norm2(tape.add(tape.matvec_t(av, y), tape.leaf(*c0))), nc);
        return tape.norm2(tape.concat(p, d));
    };

    auto origp = std::make_shared<ConicProblem>(std::move(original));
    inst.record = [=](const Tensor& xv, const Tensor& xt) {
        ResidualRecord rec;
        rec.fixed_point = fp_residual(slice(xv, 0, big), slice(xt, 0, big), eps_tau, true);
        rec.tau = xv[big - 1];
        double tau = clamp_tau(rec.tau, eps_tau);
        Tensor x({n}), y({m}), s({m});
        for (std::size_t j = 0; j < n; ++j) x[j] = xv[j] / tau * (*exp_)[j];
        for (std::size_t i = 0; i < m; ++i) {
            y[i] = xv[n + i] / tau * (*dyp)[i];
            s[i] = xv[big + n + i] / tau * (*dsp)[i];
        }
        PrimalDualResiduals pd = primal_dual_residuals_of(*origp, x, y, s);
        rec.primal = pd.primal;
        rec.dual = pd.dual;
        rec.gap = pd.gap;
        return rec;
    };

    Tensor x1 = inst.step(inst.default_init);
    inst.r0 = std::max(inst.residual(inst.default_init, x1), detail::kR0Floor);
    inst.r0_raw = std::max(inst.residual_raw(inst.default_init, x1), detail::kR0Floor);
    return inst;
}

struct SolveConfig {
    RunConfig run;
    SolverOptions options;
};

inline SolveTrace solve(const ConicProblem& problem, const SolveConfig& cfg,
                        const AccelModel* model = nullptr) {
    FixedPointInstance inst = make_conic_instance(problem, cfg.options);
    return run(inst, cfg.run, model);
}

inline TraceReport solve_batch(const std::vector<ConicProblem>& problems, const SolveConfig& cfg,
                               const AccelModel* model = nullptr) {
    std::vector<SolveTrace> traces(problems.size());
    parallel_for(problems.size(), [&](std::size_t i) {
        traces[i] = solve(problems[i], cfg, model);
    });
    return TraceReport(std::move(traces));
}

// ---- problem files ----
// header (n, m, cone segment list), then dense row-major A, then b, then c
// as raw 64-bit little-endian floats

inline void write_problem(const ConicProblem& p, const std::string& path) {
    p.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("write_problem: cannot open '" + path + "'");
    out << "conicproblem 1\n";
    out << "n " << p.n() << "\n";
    out << "m " << p.m() << "\n";
    out << "cones " << p.cones.segments().size() << "\n";
    for (const auto& seg : p.cones.segments())
        out << cone_kind_name(seg.kind) << " " << seg.dim << "\n";
    out << "data\n";
    auto blob = [&](const Tensor& t) {
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    };
    blob(p.A);
    blob(p.b);
    blob(p.c);
    if (!out) throw numeric_error("write_problem: write to '" + path + "' failed");
}

inline ConicProblem read_problem(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("read_problem: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "conicproblem 1")
        throw config_error("read_problem: '" + path + "' is not a problem file");
    auto expect = [&](const std::string& key) -> std::size_t {
        if (!std::getline(in, line)) throw config_error("read_problem: truncated header");
        std::istringstream ls(line);
        std::string k;
        std::size_t v;
        if (!(ls >> k >> v) || k != key)
            throw config_error("read_problem: expected '" + key + "' line");
        return v;
    };
    std::size_t n = expect("n");
    std::size_t m = expect("m");
    std::size_t k = expect("cones");
    ConeSpec cones;
    for (std::size_t i = 0; i < k; ++i) {
        if (!std::getline(in, line)) throw config_error("read_problem: truncated cone list");
        std::istringstream ls(line);
        std::string kind;
        std::size_t dim;
        if (!(ls >> kind >> dim)) throw config_error("read_problem: malformed cone line");
        cones.append(cone_kind_from_name(kind), dim);
    }
    if (!std::getline(in, line) || line != "data")
        throw config_error("read_problem: missing data marker");
    auto blob = [&](Tensor& t) {
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!in) throw config_error("read_problem: truncated payload");
    };
    Tensor a({m, n}), b({m}), c({n});
    blob(a);
    blob(b);
    blob(c);
    return ConicProblem(std::move(a), std::move(b), std::move(c), std::move(cones));
}

}  // namespace fpaccel
