#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "softmesh/adam.hpp"
#include "softmesh/ops.hpp"
#include "softmesh/rng.hpp"

using namespace softmesh;
using oracles::fd_check;
using oracles::rel_err;

namespace {

Array random_array(Shape s, Rng& rng, double lo = -2.0, double hi = 2.0) {
    Array a(std::move(s));
    for (int64_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(lo, hi);
    return a;
}

constexpr double kFdTol = 1e-5;

}  // namespace

TEST_CASE("tape: values are eager and gradients accumulate additively") {
    Tape t;
    Var x = t.leaf(Array::scalar(3.0));
    Var y = x * x + x;  // 12, dy/dx = 2x + 1 = 7
    CHECK(y.item() == doctest::Approx(12.0));
    t.backward(y);
    CHECK(t.grad_of(x).item() == doctest::Approx(7.0));
}

TEST_CASE("tape: backward twice is an error") {
    Tape t;
    Var x = t.leaf(Array::scalar(1.0));
    Var y = x * 2.0;
    t.backward(y);
    CHECK_THROWS_AS(t.backward(y), TensorError);
}

TEST_CASE("tape: non-scalar loss is an error") {
    Tape t;
    Var x = t.leaf(Array({2}, {1.0, 2.0}));
    CHECK_THROWS_AS(t.backward(x), TensorError);
}

TEST_CASE("tape: mixing tapes is an error") {
    Tape t1, t2;
    Var a = t1.leaf(Array::scalar(1.0));
    Var b = t2.leaf(Array::scalar(1.0));
    CHECK_THROWS_AS(add(a, b), TensorError);
}

TEST_CASE("tape: untouched leaves report zero gradient") {
    Tape t;
    Var a = t.leaf(Array({3}, 1.0));
    Var b = t.leaf(Array({3}, 2.0));
    t.backward(sum(b));
    CHECK(t.has_grad(b.id));
    CHECK_FALSE(t.has_grad(a.id));
    const Array ga = t.grad_of(a);
    for (int64_t i = 0; i < 3; ++i) CHECK(ga[i] == 0.0);
}

TEST_CASE("ops: elementwise binary gradients match finite differences") {
    Rng rng(7);
    auto bin = [&](const char* name, Var (*op)(Var, Var), Shape sa, Shape sb, double lo,
                   double hi) {
        std::vector<Array> in = {random_array(sa, rng, lo, hi), random_array(sb, rng, lo, hi)};
        auto rep = fd_check(in, [op](Tape&, std::vector<Var>& v) { return sum(op(v[0], v[1])); });
        INFO(name, ": ", rep.where);
        CHECK(rep.max_rel < kFdTol);
    };
    bin("add", &add, {2, 3}, {2, 3}, -2, 2);
    bin("sub", &sub, {4}, {4}, -2, 2);
    bin("mul", &mul, {2, 3}, {2, 3}, -2, 2);
    bin("div", &div, {2, 3}, {2, 3}, 0.5, 2.0);
    bin("atan2", &atan2, {5}, {5}, 0.3, 2.0);
    // broadcast shapes
    bin("mul_bcast", &mul, {2, 1, 3}, {4, 1}, -2, 2);
    bin("add_bcast", &add, {3, 2}, {2}, -2, 2);
    bin("div_bcast", &div, {2, 2}, {1}, 0.5, 2.0);
}

TEST_CASE("ops: unary gradients match finite differences") {
    Rng rng(11);
    auto un = [&](const char* name, std::function<Var(Var)> op, double lo, double hi) {
        std::vector<Array> in = {random_array({2, 3}, rng, lo, hi)};
        auto rep = fd_check(in, [&op](Tape&, std::vector<Var>& v) { return sum(op(v[0])); });
        INFO(name, ": ", rep.where);
        CHECK(rep.max_rel < kFdTol);
    };
    un("neg", [](Var x) { return neg(x); }, -2, 2);
    un("exp", [](Var x) { return exp(x); }, -2, 2);
    un("log", [](Var x) { return log(x); }, 0.3, 3.0);
    un("tanh", [](Var x) { return tanh(x); }, -2, 2);
    un("sigmoid", [](Var x) { return sigmoid(x); }, -4, 4);
    un("sqrt", [](Var x) { return sqrt(x); }, 0.3, 3.0);
    un("sin", [](Var x) { return sin(x); }, -3, 3);
    un("cos", [](Var x) { return cos(x); }, -3, 3);
    un("abs", [](Var x) { return abs(x); }, 0.5, 2.0);
    un("relu", [](Var x) { return relu(x); }, 0.5, 2.0);
    un("leaky", [](Var x) { return leaky_relu(x, 0.2); }, -3, -0.5);
    un("pow", [](Var x) { return pow(x, 2.5); }, 0.5, 2.0);
    un("addc", [](Var x) { return add(x, 1.5); }, -2, 2);
    un("mulc", [](Var x) { return mul(x, -0.7); }, -2, 2);
    un("minc", [](Var x) { return minimum(x, 0.9); }, -2, 2);
    un("maxc", [](Var x) { return maximum(x, -0.9); }, -2, 2);
    un("clampc", [](Var x) { return clamp(x, -1.0, 1.0); }, -2, 2);
}

TEST_CASE("ops: min/max/clamp ties follow the array operand") {
    Tape t;
    Var x = t.leaf(Array({3}, {0.5, 1.0, 1.5}));  // tie at 1.0
    t.backward(sum(minimum(x, 1.0)));
    Array g = t.grad_of(x);
    CHECK(g[0] == 1.0);
    CHECK(g[1] == 1.0);  // tie: array operand wins
    CHECK(g[2] == 0.0);

    Tape t2;
    Var y = t2.leaf(Array({3}, {0.5, 1.0, 1.5}));
    t2.backward(sum(maximum(y, 1.0)));
    g = t2.grad_of(y);
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 1.0);
    CHECK(g[2] == 1.0);

    Tape t3;
    Var z = t3.leaf(Array({4}, {-1.0, 0.0, 1.0, 2.0}));
    t3.backward(sum(clamp(z, -1.0, 1.0)));
    g = t3.grad_of(z);
    CHECK(g[0] == 1.0);
    CHECK(g[1] == 1.0);
    CHECK(g[2] == 1.0);
    CHECK(g[3] == 0.0);
}

TEST_CASE("ops: occupancy-style exp(min(v,0)) is 1 with zero gradient outside") {
    Tape t;
    Var v = t.leaf(Array({3}, {-0.5, 0.0, 0.5}));
    Var o = exp(minimum(v, 0.0));
    CHECK(o.value()[0] == doctest::Approx(std::exp(-0.5)));
    CHECK(o.value()[1] == doctest::Approx(1.0));
    CHECK(o.value()[2] == doctest::Approx(1.0));
    t.backward(sum(o));
    Array g = t.grad_of(v);
    CHECK(g[0] == doctest::Approx(std::exp(-0.5)));
    CHECK(g[1] == doctest::Approx(1.0));
    CHECK(g[2] == 0.0);
}

TEST_CASE("ops: non-finite results raise") {
    Tape t;
    Var x = t.leaf(Array({2}, {1.0, 0.0}));
    Var y = t.leaf(Array({2}, {0.0, 0.0}));
    CHECK_THROWS_AS(div(x, y), TensorError);
    Var neg1 = t.leaf(Array({1}, {-1.0}));
    CHECK_THROWS_AS(log(neg1), TensorError);
    CHECK_THROWS_AS(sqrt(neg1), TensorError);
    Var big = t.leaf(Array({1}, {1e308}));
    CHECK_THROWS_AS(exp(big), TensorError);
}

TEST_CASE("ops: reductions") {
    Rng rng(13);
    std::vector<Array> in = {random_array({2, 3, 4}, rng)};
    for (int axis : {0, 1, 2, -1}) {
        auto rep = fd_check(in, [axis](Tape&, std::vector<Var>& v) {
            return sum(mul(sum(v[0], axis), 0.5) * sum(v[0], axis));
        });
        INFO("axis ", axis, ": ", rep.where);
        CHECK(rep.max_rel < kFdTol);
    }
    auto rep = fd_check(in, [](Tape&, std::vector<Var>& v) { return mean(v[0]); });
    CHECK(rep.max_rel < kFdTol);
    rep = fd_check(in, [](Tape&, std::vector<Var>& v) { return sum(mean(v[0], 1)); });
    CHECK(rep.max_rel < kFdTol);

    Tape t;
    Var x = t.leaf(Array({2, 2}, {1.0, 2.0, 3.0, 4.0}));
    CHECK(sum(x).item() == doctest::Approx(10.0));
    CHECK(mean(x).item() == doctest::Approx(2.5));
    Var s0 = sum(x, 0);
    CHECK(s0.value()[0] == doctest::Approx(4.0));
    CHECK(s0.value()[1] == doctest::Approx(6.0));
}

TEST_CASE("ops: reshape, broadcast_to, slice, concat") {
    Rng rng(17);
    std::vector<Array> in = {random_array({2, 6}, rng)};
    auto rep = fd_check(in, [](Tape&, std::vector<Var>& v) {
        Var r = reshape(v[0], {3, 4});
        Var b = broadcast_to(slice(r, 0, 1, 1), {3, 4});
        return sum(mul(r, b));
    });
    INFO(rep.where);
    CHECK(rep.max_rel < kFdTol);

    std::vector<Array> in2 = {random_array({2, 3}, rng), random_array({2, 2}, rng)};
    rep = fd_check(in2, [](Tape&, std::vector<Var>& v) {
        Var c = concat({v[0], v[1], v[0]}, 1);
        return sum(mul(c, c));
    });
    INFO(rep.where);
    CHECK(rep.max_rel < kFdTol);

    Tape t;
    Var x = t.leaf(Array({2, 3}, {0, 1, 2, 3, 4, 5}));
    Var s = slice(x, 1, 1, 2);
    CHECK(s.value().shape() == Shape{2, 2});
    CHECK(s.value()[0] == 1.0);
    CHECK(s.value()[3] == 5.0);
    CHECK_THROWS_AS(slice(x, 1, 2, 2), TensorError);
    CHECK_THROWS_AS(reshape(x, {7}), TensorError);
    CHECK_THROWS_AS(broadcast_to(x, {2, 4}), TensorError);
}

TEST_CASE("ops: gather and scatter_add rows") {
    Rng rng(19);
    std::vector<Array> in = {random_array({4, 3}, rng)};
    std::vector<int64_t> idx = {2, 0, 2, 3};  // duplicate on purpose
    auto rep = fd_check(in, [&idx](Tape&, std::vector<Var>& v) {
        Var g = gather_rows(v[0], idx);
        return sum(mul(g, g));
    });
    INFO(rep.where);
    CHECK(rep.max_rel < kFdTol);

    rep = fd_check(in, [&idx](Tape&, std::vector<Var>& v) {
        Var s = scatter_add_rows(v[0], idx, 5);
        return sum(mul(s, s));
    });
    INFO(rep.where);
    CHECK(rep.max_rel < kFdTol);

    Tape t;
    Var x = t.leaf(Array({2, 2}, {1, 2, 3, 4}));
    Var s = scatter_add_rows(x, {1, 1}, 3);
    CHECK(s.value().shape() == Shape{3, 2});
    CHECK(s.value()[2] == doctest::Approx(4.0));  // rows accumulate
    CHECK(s.value()[3] == doctest::Approx(6.0));
    CHECK_THROWS_AS(gather_rows(x, {5}), TensorError);
}

TEST_CASE("ops: matmul matches naive product and finite differences") {
    Rng rng(23);
    Array a = random_array({3, 4}, rng), b = random_array({4, 2}, rng);
    Tape t;
    Var av = t.leaf(a), bv = t.leaf(b);
    Var c = matmul(av, bv);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j) {
            double want = 0;
            for (int k = 0; k < 4; ++k) want += a[i * 4 + k] * b[k * 2 + j];
            CHECK(c.value()[i * 2 + j] == doctest::Approx(want));
        }
    std::vector<Array> in = {a, b};
    auto rep = fd_check(in, [](Tape&, std::vector<Var>& v) {
        Var m = matmul(v[0], v[1]);
        return sum(mul(m, m));
    });
    INFO(rep.where);
    CHECK(rep.max_rel < kFdTol);
    CHECK_THROWS_AS(matmul(av, av), TensorError);
}

TEST_CASE("ops: conv2d matches direct convolution") {
    Rng rng(29);
    const int cin = 2, h = 5, w = 6, cout = 3, kk = 3, stride = 2, pad = 1;
    Array x = random_array({cin, h, w}, rng);
    Array wt = random_array({cout, cin, kk, kk}, rng);
    Array bs = random_array({cout}, rng);
    Tape t;
    Var out = conv2d(t.leaf(x), t.leaf(wt), t.leaf(bs), stride, pad);
    const int ho = (h + 2 * pad - kk) / stride + 1;
    const int wo = (w + 2 * pad - kk) / stride + 1;
    REQUIRE(out.value().shape() == Shape{cout, ho, wo});
    for (int oc = 0; oc < cout; ++oc)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                double want = bs[oc];
                for (int ic = 0; ic < cin; ++ic)
                    for (int ky = 0; ky < kk; ++ky)
                        for (int kx = 0; kx < kk; ++kx) {
                            const int iy = oy * stride - pad + ky;
                            const int ix = ox * stride - pad + kx;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            want += x[(ic * h + iy) * w + ix] *
                                    wt[((oc * cin + ic) * kk + ky) * kk + kx];
                        }
                CHECK(out.value()[(oc * ho + oy) * wo + ox] == doctest::Approx(want));
            }

    std::vector<Array> in = {x, wt, bs};
    auto rep = fd_check(in, [&](Tape&, std::vector<Var>& v) {
        Var o = conv2d(v[0], v[1], v[2], stride, pad);
        return sum(mul(o, o));
    });
    INFO(rep.where);
    CHECK(rep.max_rel < kFdTol);
}

TEST_CASE("ops: upsample2x, cross3, layout permutes") {
    Rng rng(31);
    std::vector<Array> in = {random_array({2, 2, 3}, rng)};
    auto rep = fd_check(in, [](Tape&, std::vector<Var>& v) {
        Var u = upsample2x(v[0]);
        return sum(mul(u, u));
    });
    CHECK(rep.max_rel < kFdTol);

    Tape t;
    Var u = upsample2x(t.leaf(Array({1, 1, 2}, {3.0, 4.0})));
    CHECK(u.value().shape() == Shape{1, 2, 4});
    CHECK(u.value()[0] == 3.0);
    CHECK(u.value()[1] == 3.0);
    CHECK(u.value()[2] == 4.0);

    std::vector<Array> in2 = {random_array({4, 3}, rng), random_array({4, 3}, rng)};
    rep = fd_check(in2, [](Tape&, std::vector<Var>& v) {
        Var c = cross3(v[0], v[1]);
        return sum(mul(c, c));
    });
    INFO(rep.where);
    CHECK(rep.max_rel < kFdTol);

    Tape t2;
    Var c = cross3(t2.leaf(Array({1, 3}, {1, 0, 0})), t2.leaf(Array({1, 3}, {0, 1, 0})));
    CHECK(c.value()[0] == 0.0);
    CHECK(c.value()[1] == 0.0);
    CHECK(c.value()[2] == 1.0);

    Array hwc = random_array({3, 4, 2}, rng);
    Tape t3;
    Var chw = chw_from_hwc(t3.leaf(hwc));
    REQUIRE(chw.value().shape() == Shape{2, 3, 4});
    CHECK(chw.value()[(1 * 3 + 2) * 4 + 3] == hwc[(2 * 4 + 3) * 2 + 1]);
    Var back = hwc_from_chw(chw);
    for (int64_t i = 0; i < hwc.size(); ++i) CHECK(back.value()[i] == hwc[i]);
    std::vector<Array> in3 = {hwc};
    rep = fd_check(in3, [](Tape&, std::vector<Var>& v) {
        Var y = chw_from_hwc(v[0]);
        return sum(mul(y, y));
    });
    CHECK(rep.max_rel < kFdTol);
}

TEST_CASE("ops: fan-out accumulates through both paths") {
    Rng rng(37);
    std::vector<Array> in = {random_array({3}, rng, 0.5, 1.5)};
    auto rep = fd_check(in, [](Tape&, std::vector<Var>& v) {
        Var a = exp(v[0]);
        Var b = log(v[0]);
        return sum(a * b + a);
    });
    INFO(rep.where);
    CHECK(rep.max_rel < kFdTol);
}

TEST_CASE("adam: first steps move by about lr for unit gradient") {
    Adam opt(AdamConfig{0.1, 0.9, 0.999, 1e-8});
    Array p({1}, {0.0});
    Array g({1}, {1.0});
    opt.step("p", p, g);
    CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-6));
    opt.step("p", p, g);
    CHECK(p[0] == doctest::Approx(-0.2).epsilon(1e-6));
}

TEST_CASE("adam: non-finite gradient names the parameter") {
    Adam opt(AdamConfig{});
    Array p({1}, {0.0});
    Array g({1}, {std::numeric_limits<double>::quiet_NaN()});
    try {
        opt.step("pose_head.w", p, g);
        FAIL("expected throw");
    } catch (const TensorError& e) {
        CHECK(std::string(e.what()).find("pose_head.w") != std::string::npos);
    }
}

TEST_CASE("adam: skipped parameters keep moments and step count") {
    Adam opt(AdamConfig{0.1, 0.9, 0.999, 1e-8});
    Array p({1}, {0.0}), q({1}, {0.0});
    Array g({1}, {1.0});
    opt.step("p", p, g);
    opt.step("q", q, g);
    opt.step("p", p, g);  // q skipped this round
    CHECK(opt.slots().at("p").t == 2);
    CHECK(opt.slots().at("q").t == 1);
    // q resumes exactly as p's second step did
    opt.step("q", q, g);
    CHECK(q[0] == doctest::Approx(p[0]));
}

TEST_CASE("rng: determinism and rough moments") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(42), d(43);
    CHECK(c.next_u64() != d.next_u64());

    Rng r(7);
    double sum = 0, sum2 = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        sum += x;
        sum2 += x * x;
    }
    CHECK(std::abs(sum / n) < 0.03);
    CHECK(std::abs(sum2 / n - 1.0) < 0.05);

    int hits = 0;
    for (int i = 0; i < 10000; ++i) hits += r.bernoulli(0.2) ? 1 : 0;
    CHECK(hits > 1800);
    CHECK(hits < 2200);
}
