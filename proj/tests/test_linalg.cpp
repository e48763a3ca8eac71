#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fpaccel/common.hpp"
#include "fpaccel/linalg.hpp"
#include "fpaccel/tape.hpp"

using namespace fpaccel;

namespace {

Tensor random_mat(Rng& rng, std::size_t r, std::size_t c) {
    Tensor t({r, c});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
    return t;
}

Tensor random_vec(Rng& rng, std::size_t n) {
    Tensor t({n});
    for (std::size_t i = 0; i < n; ++i) t[i] = rng.normal();
    return t;
}

// diagonally dominant => well conditioned
Tensor well_conditioned(Rng& rng, std::size_t n) {
    Tensor m = random_mat(rng, n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) += static_cast<double>(n);
    return m;
}

}  // namespace

TEST_CASE("lu solve: identity and diagonal") {
    Tensor eye({3, 3});
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    LuFactorization f(eye);
    Tensor v = Tensor::vector({1.5, -2, 3});
    Tensor u = f.solve(v);
    for (std::size_t i = 0; i < 3; ++i) CHECK(u[i] == v[i]);

    Tensor d = Tensor::matrix(2, 2, {2, 0, 0, 4});
    Tensor r = lu_factor(d).solve(Tensor::vector({2, 4}));
    CHECK(r[0] == Catch::Approx(1.0));
    CHECK(r[1] == Catch::Approx(1.0));
}

TEST_CASE("lu solve residual <= 1e-10 on well-conditioned matrices") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t n = 10;
        Tensor m = well_conditioned(rng, n);
        LuFactorization f(m);
        Tensor v = random_vec(rng, n);
        Tensor u = f.solve(v);
        double resid = norm2(sub(matvec(m, u), v));
        REQUIRE(resid <= 1e-10 * norm2(v));
    }
}

TEST_CASE("lu transpose solve") {
    Rng rng(23);
    Tensor m = well_conditioned(rng, 8);
    LuFactorization f(m);
    Tensor v = random_vec(rng, 8);
    Tensor u = f.solve_transposed(v);
    double resid = norm2(sub(matvec_t(m, u), v));
    REQUIRE(resid <= 1e-10 * norm2(v));
}

TEST_CASE("lu rejects singular matrices") {
    Tensor z({2, 2});
    z.at(0, 0) = 1.0;  // second row all zero
    REQUIRE_THROWS_AS(lu_factor(z), numeric_error);
    REQUIRE_THROWS_AS(lu_factor(Tensor::vector({1, 2})), config_error);
}

TEST_CASE("solve_with_vjp: diagonal inverse transpose cases") {
    // M = 2I: ubar = [1, 0] pulls back to vbar = [0.5, 0]
    Tensor m = Tensor::matrix(2, 2, {2, 0, 0, 2});
    auto fact = std::make_shared<LuFactorization>(m);
    Tape tape;
    VarRef v = tape.leaf(Tensor::vector({3.0, 5.0}));
    VarRef u = tape.lu_solve(fact, v);
    CHECK(tape.value(u)[0] == Catch::Approx(1.5));
    Gradients g = tape.backward(u, Tensor::vector({1.0, 0.0}));
    CHECK(g.of(v)[0] == Catch::Approx(0.5));
    CHECK(g.of(v)[1] == Catch::Approx(0.0));

    // M = I: vbar = ubar
    Tensor eye({2, 2});
    eye.at(0, 0) = eye.at(1, 1) = 1.0;
    auto fi = std::make_shared<LuFactorization>(eye);
    Tape t2;
    VarRef v2 = t2.leaf(Tensor::vector({1.0, 2.0}));
    VarRef u2 = t2.lu_solve(fi, v2);
    Gradients g2 = t2.backward(u2, Tensor::vector({0.25, -0.5}));
    CHECK(g2.of(v2)[0] == Catch::Approx(0.25));
    CHECK(g2.of(v2)[1] == Catch::Approx(-0.5));
}

TEST_CASE("solve_with_vjp matches finite differences on random systems") {
    Rng rng(31);
    Tensor m = well_conditioned(rng, 8);
    auto fact = std::make_shared<LuFactorization>(m);
    auto closure = [&](Tape& t, VarRef x) { return t.norm2(t.lu_solve(fact, x)); };
    for (int trial = 0; trial < 10; ++trial) {
        Tensor p = random_vec(rng, 8);
        REQUIRE(grad_check(closure, p, 1e-6) < 1e-5);
    }
}

TEST_CASE("lu_solve rejects bad rhs length") {
    Tensor eye({2, 2});
    eye.at(0, 0) = eye.at(1, 1) = 1.0;
    LuFactorization f(eye);
    REQUIRE_THROWS_AS(f.solve(Tensor::vector({1, 2, 3})), config_error);
}

TEST_CASE("symmetric eigendecomposition reconstructs the matrix") {
    Rng rng(47);
    for (int trial = 0; trial < 10; ++trial) {
        std::size_t n = 7;
        Tensor a = random_mat(rng, n, n);
        Tensor s({n, n});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) s.at(i, j) = 0.5 * (a.at(i, j) + a.at(j, i));
        SymEig e = sym_eig(s);
        // U diag(l) U' == S
        Tensor rec({n, n});
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t i = 0; i < n; ++i) {
                double f = e.vectors.at(i, k) * e.values[k];
                for (std::size_t j = 0; j < n; ++j) rec.at(i, j) += f * e.vectors.at(j, k);
            }
        double err = 0.0;
        for (std::size_t i = 0; i < n * n; ++i) err = std::max(err, std::fabs(rec[i] - s[i]));
        REQUIRE(err < 1e-10);
        for (std::size_t k = 0; k + 1 < n; ++k) REQUIRE(e.values[k] <= e.values[k + 1]);
    }
}

TEST_CASE("quadratic form gradient via tape is exact to 1e-7") {
    Rng rng(53);
    Tensor m = well_conditioned(rng, 5);
    auto closure = [&](Tape& t, VarRef x) {
        VarRef y = t.matvec(t.leaf(m), x);
        return t.sum(t.mul(x, y));
    };
    for (int trial = 0; trial < 5; ++trial) {
        Tensor p = random_vec(rng, 5);
        REQUIRE(grad_check(closure, p, 1e-6) <= 1e-7);
    }
}
