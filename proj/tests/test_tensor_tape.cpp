#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fpaccel/common.hpp"
#include "fpaccel/tape.hpp"
#include "fpaccel/tensor.hpp"

using namespace fpaccel;

namespace {

Tensor random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
    Tensor t({n});
    for (std::size_t i = 0; i < n; ++i) t[i] = scale * rng.normal();
    return t;
}

Tensor random_mat(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    Tensor t({r, c});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    return t;
}

}  // namespace

TEST_CASE("tensor basics and shape errors") {
    Tensor t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    REQUIRE(t.size() == 6);
    REQUIRE(t.at(1, 2) == 6.0);
    REQUIRE_THROWS_AS(add(t, Tensor::vector({1, 2})), config_error);
    REQUIRE_THROWS_AS(matvec(t, Tensor::vector({1, 2})), config_error);
    REQUIRE_THROWS_AS(Tensor({2, 2}, {1.0}), config_error);
}

TEST_CASE("forward op examples") {
    Tape tape;
    // matvec(I3, [1,2,3]) = [1,2,3]
    Tensor eye({3, 3});
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    VarRef m = tape.leaf(eye);
    VarRef x = tape.leaf(Tensor::vector({1, 2, 3}));
    VarRef y = tape.matvec(m, x);
    CHECK(tape.value(y)[0] == 1.0);
    CHECK(tape.value(y)[1] == 2.0);
    CHECK(tape.value(y)[2] == 3.0);

    VarRef s = tape.add(tape.leaf(Tensor::vector({1, 2})), tape.leaf(Tensor::vector({3, 4})));
    CHECK(tape.value(s)[0] == 4.0);
    CHECK(tape.value(s)[1] == 6.0);

    VarRef n = tape.norm2(tape.leaf(Tensor::vector({3, 4})));
    CHECK(tape.value(n)[0] == Catch::Approx(5.0));
}

TEST_CASE("forward rejects non-finite results naming the op") {
    Tape tape;
    VarRef x = tape.leaf(Tensor::vector({1.0}));
    VarRef zero = tape.leaf(Tensor::scalar(0.0));
    try {
        tape.div_by(x, zero);
        FAIL("expected numeric_error");
    } catch (const numeric_error& e) {
        CHECK(std::string(e.what()).find("div_by") != std::string::npos);
    }
}

TEST_CASE("backward basics") {
    SECTION("f(x) = x * x at 3 has gradient 6") {
        Tape tape;
        VarRef x = tape.leaf(Tensor::scalar(3.0));
        VarRef y = tape.mul(x, x);
        Gradients g = tape.backward(y, Tensor::scalar(1.0));
        CHECK(g.of(x)[0] == Catch::Approx(6.0));
    }
    SECTION("norm2 gradient is the unit vector") {
        Tape tape;
        VarRef x = tape.leaf(Tensor::vector({3, 4}));
        VarRef y = tape.norm2(x);
        Gradients g = tape.backward(y, Tensor::scalar(1.0));
        CHECK(g.of(x)[0] == Catch::Approx(0.6));
        CHECK(g.of(x)[1] == Catch::Approx(0.8));
    }
    SECTION("adjoint of x in x + x is 2 (accumulation across consumers)") {
        Tape tape;
        VarRef x = tape.leaf(Tensor::vector({1.5, -2.0}));
        VarRef y = tape.sum(tape.add(x, x));
        Gradients g = tape.backward(y, Tensor::scalar(1.0));
        CHECK(g.of(x)[0] == Catch::Approx(2.0));
        CHECK(g.of(x)[1] == Catch::Approx(2.0));
    }
    SECTION("empty tape and bad seed are errors") {
        Tape tape;
        REQUIRE_THROWS_AS(tape.backward(VarRef{0}, Tensor::scalar(1.0)), config_error);
        VarRef x = tape.leaf(Tensor::vector({1, 2}));
        REQUIRE_THROWS_AS(tape.backward(x, Tensor::scalar(1.0)), config_error);
    }
}

TEST_CASE("grad_check on composite chains matches finite differences") {
    Rng rng(7);
    // composite chain over most elementwise ops
    auto closure = [](Tape& t, VarRef x) {
        VarRef a = t.tanh(t.scale(x, 0.7));
        VarRef b = t.sigmoid(t.add_const(x, 0.3));
        VarRef c = t.elu(t.sub(a, b));
        VarRef d = t.mul(c, t.add(a, b));
        return t.norm2(d);
    };
    for (int trial = 0; trial < 20; ++trial) {
        Tensor p = random_vec(rng, 6);
        double err = grad_check(closure, p, 1e-6);
        CHECK(err < 1e-5);
    }
}

TEST_CASE("grad_check across matrix ops") {
    Rng rng(21);
    Tensor m = random_mat(rng, 4, 5);
    auto closure = [&](Tape& t, VarRef x) {
        VarRef mv = t.leaf(m);
        VarRef y = t.matvec(mv, x);
        VarRef z = t.matvec_t(mv, y);
        return t.sum(t.mul(z, z));
    };
    for (int trial = 0; trial < 10; ++trial) {
        Tensor p = random_vec(rng, 5);
        CHECK(grad_check(closure, p, 1e-6) < 1e-5);
    }
    // gradient w.r.t. the matrix through matmul
    auto mclosure = [](Tape& t, VarRef a) {
        Tensor b({3, 2});
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = 0.1 * static_cast<double>(i + 1);
        VarRef c = t.matmul(a, t.leaf(b));
        return t.norm2(c);
    };
    for (int trial = 0; trial < 5; ++trial) {
        Tensor a = random_mat(rng, 2, 3);
        CHECK(grad_check(mclosure, a, 1e-6) < 1e-5);
    }
}

TEST_CASE("grad_check on slicing, concat, div ops") {
    Rng rng(5);
    auto closure = [](Tape& t, VarRef x) {
        VarRef head = t.slice(x, 0, 3);
        VarRef tail = t.slice(x, 3, 3);
        VarRef joined = t.concat(t.relu(head), t.tanh(tail));
        VarRef denom = t.add_const(t.norm2(t.slice(x, 1, 2)), 1.5);
        return t.norm2(t.div_by(joined, denom));
    };
    for (int trial = 0; trial < 20; ++trial) {
        Tensor p = random_vec(rng, 6);
        bool near_kink = false;
        for (std::size_t i = 0; i < 3; ++i)
            if (std::fabs(p[i]) < 1e-4) near_kink = true;
        if (near_kink) continue;  // resample relu kinks
        CHECK(grad_check(closure, p, 1e-6) < 1e-5);
    }
}

TEST_CASE("shrink: formula and subgradient mask") {
    Tape tape;
    VarRef x = tape.leaf(Tensor::vector({0.5, -2.0}));
    VarRef y = tape.shrink(x, 1.0);
    CHECK(tape.value(y)[0] == 0.0);
    CHECK(tape.value(y)[1] == Catch::Approx(-1.0));

    // kappa = 0 is the identity
    Tape t2;
    VarRef x2 = t2.leaf(Tensor::vector({0.3, -0.7}));
    VarRef y2 = t2.shrink(x2, 0.0);
    CHECK(t2.value(y2)[0] == Catch::Approx(0.3));
    CHECK(t2.value(y2)[1] == Catch::Approx(-0.7));

    // mask: 0 inside the threshold, 1 outside
    Gradients g = tape.backward(y, Tensor::vector({1.0, 1.0}));
    CHECK(g.of(x)[0] == 0.0);
    CHECK(g.of(x)[1] == 1.0);

    // away from the threshold the op passes grad_check
    Rng rng(3);
    auto closure = [](Tape& t, VarRef v) { return t.norm2(t.shrink(v, 0.4)); };
    int checked = 0;
    while (checked < 10) {
        Tensor p = random_vec(rng, 5);
        bool near = false;
        for (std::size_t i = 0; i < p.size(); ++i)
            if (std::fabs(std::fabs(p[i]) - 0.4) < 1e-3 || std::fabs(p[i]) < 1e-3) near = true;
        if (near) continue;
        CHECK(grad_check(closure, p, 1e-6) < 1e-6);
        ++checked;
    }
}

TEST_CASE("elementwise VJPs at 100 random smooth points") {
    Rng rng(11);
    struct Case {
        const char* name;
        std::function<VarRef(Tape&, VarRef)> fn;
        double kink;  // points with |coord| closer than 1e-4 to a kink resample
    };
    std::vector<Case> cases = {
        {"tanh", [](Tape& t, VarRef x) { return t.sum(t.tanh(x)); }, -1.0},
        {"sigmoid", [](Tape& t, VarRef x) { return t.sum(t.sigmoid(x)); }, -1.0},
        {"relu", [](Tape& t, VarRef x) { return t.sum(t.relu(x)); }, 0.0},
        {"elu", [](Tape& t, VarRef x) { return t.sum(t.elu(x)); }, 0.0},
    };
    for (const auto& c : cases) {
        int done = 0;
        while (done < 100) {
            Tensor p = random_vec(rng, 4);
            if (c.kink == 0.0) {
                bool near = false;
                for (std::size_t i = 0; i < p.size(); ++i)
                    if (std::fabs(p[i]) < 1e-4) near = true;
                if (near) continue;
            }
            INFO(c.name);
            CHECK(grad_check(c.fn, p, 1e-6) < 1e-5);
            ++done;
        }
    }
}

TEST_CASE("rng determinism") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.normal() == b.normal());
}
