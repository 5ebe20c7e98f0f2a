#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dcl/tape.hpp"

using namespace dcl;
using namespace dcl::ad;

namespace {

// central finite differences over one parameter coordinate
double fd_grad(Param& p, size_t idx, const std::function<double()>& forward, double h = 1e-6) {
    double keep = p.w[idx];
    p.w[idx] = keep + h;
    double hi = forward();
    p.w[idx] = keep - h;
    double lo = forward();
    p.w[idx] = keep;
    return (hi - lo) / (2 * h);
}

bool close_rel(double a, double b, double tol = 1e-6) {
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("affine relu chain gradients match finite differences") {
    Rng rng(5);
    Param W1("w1", 8, 6), b1("b1", 8, 1), W2("w2", 1, 8), b2("b2", 1, 1);
    for (auto* p : {&W1, &b1, &W2, &b2})
        for (auto& w : p->w) w = rng.gauss(0, 0.5);
    std::vector<double> x(6);
    for (auto& v : x) v = rng.gauss();

    auto forward = [&]() {
        Tape t;
        Var h = t.relu(t.affine_const(W1, &b1, x));
        Var vars[1] = {h};
        Var y = t.affine(W2, &b2, vars);
        return t.value(t.sigmoid(y));
    };

    Tape t;
    Var h = t.relu(t.affine_const(W1, &b1, x));
    Var vars[1] = {h};
    Var y = t.sigmoid(t.affine(W2, &b2, vars));
    zero_grads({&W1, &b1, &W2, &b2});
    t.backward(y);

    for (auto* p : {&W1, &b1, &W2, &b2})
        for (size_t i = 0; i < p->size(); i += 3)
            CHECK(close_rel(p->g[i], fd_grad(*p, i, forward)));
}

TEST_CASE("cosine similarity gradients via dot, sqrt, div") {
    Rng rng(9);
    Param s("s", 5, 1);
    Param W("w", 5, 4), b("b", 5, 1);
    for (auto* p : std::vector<Param*>{&s, &W, &b})
        for (auto& w : p->w) w = rng.gauss(0, 1.0);
    std::vector<double> x(4);
    for (auto& v : x) v = rng.gauss();

    auto build = [&](Tape& t) {
        Var m = t.affine_const(W, &b, x);
        Var e = t.param(s);
        Var cos = t.div(t.dot(e, m), t.mul(t.sqrt(t.dot(e, e)), t.sqrt(t.dot(m, m))));
        return t.sigmoid(t.scale(t.offset(cos, -0.15), 5.0));
    };
    auto forward = [&]() {
        Tape t;
        return t.value(build(t));
    };
    Tape t;
    Var y = build(t);
    zero_grads({&s, &W, &b});
    t.backward(y);
    for (auto* p : std::vector<Param*>{&s, &W, &b})
        for (size_t i = 0; i < p->size(); ++i)
            CHECK(close_rel(p->g[i], fd_grad(*p, i, forward), 1e-5));
}

TEST_CASE("min max sum and smul subgradients") {
    Param a("a", 1, 1), b("b", 1, 1);
    a.w[0] = 0.3;
    b.w[0] = 0.7;
    Tape t;
    Var va = t.param(a), vb = t.param(b);
    Var lo = t.vmin(va, vb), hi = t.vmax(va, vb);
    Var y = t.add(t.scale(lo, 2.0), hi);
    zero_grads({&a, &b});
    t.backward(y);
    CHECK(a.g[0] == doctest::Approx(2.0));  // a is the min
    CHECK(b.g[0] == doctest::Approx(1.0));  // b is the max
    CHECK(t.value(lo) == doctest::Approx(0.3));
    CHECK(t.value(hi) == doctest::Approx(0.7));

    Tape t2;
    Param v("v", 3, 1), sc("s", 1, 1);
    v.w = {1.0, 2.0, 3.0};
    sc.w = {0.5};
    Var prod = t2.smul(t2.param(v), t2.param(sc));
    Var total = t2.sum(prod);
    zero_grads({&v, &sc});
    t2.backward(total);
    CHECK(t2.value(total) == doctest::Approx(3.0));
    CHECK(v.g[0] == doctest::Approx(0.5));
    CHECK(sc.g[0] == doctest::Approx(6.0));
}

TEST_CASE("gradients accumulate across backward calls") {
    Param w("w", 1, 1);
    w.w[0] = 2.0;
    Tape t;
    Var y1 = t.scale(t.param(w), 3.0);
    zero_grads({&w});
    t.backward(y1);
    t.reset();
    Var y2 = t.scale(t.param(w), 4.0);
    t.backward(y2);
    CHECK(w.g[0] == doctest::Approx(7.0));
}

TEST_CASE("sgd momentum and zero lr leave parameters fixed") {
    Param w("w", 2, 1);
    w.w = {1.0, -1.0};
    w.g = {0.5, 0.25};
    SgdMomentum opt;
    opt.lr = 0.0;
    opt.step({&w});
    CHECK(w.w[0] == 1.0);
    CHECK(w.w[1] == -1.0);
    opt.lr = 0.1;
    opt.step({&w});
    CHECK(w.w[0] == doctest::Approx(1.0 - 0.1 * (0.9 * 0.5 + 0.5)));
}

TEST_CASE("adam steps reduce a quadratic") {
    Param w("w", 1, 1);
    w.w[0] = 4.0;
    Adam opt;
    opt.lr = 0.1;
    for (int i = 0; i < 400; ++i) {
        w.zero_grad();
        w.g[0] = 2.0 * w.w[0];  // d/dw of w^2
        opt.step({&w});
    }
    CHECK(std::abs(w.w[0]) < 0.05);
}

TEST_CASE("clip_grad_norm caps the global norm") {
    Param a("a", 2, 1), b("b", 1, 1);
    a.g = {3.0, 4.0};
    b.g = {0.0};
    clip_grad_norm({&a, &b}, 2.5);
    double norm = std::sqrt(a.g[0] * a.g[0] + a.g[1] * a.g[1] + b.g[0] * b.g[0]);
    CHECK(norm == doctest::Approx(2.5));
}
