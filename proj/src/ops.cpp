#include "softmesh/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>

namespace softmesh {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

void check_same_tape(Var a, Var b, const char* op) {
    if (a.tape != b.tape)
        throw TensorError(std::string(op) + ": operands live on different tapes");
}

void check_finite(const char* op, const Array& a) {
    if (!all_finite(a))
        throw TensorError(std::string(op) + ": produced non-finite values");
}

namespace {

// ---------------------------------------------------------------- broadcasting

struct BcPlan {
    Shape out;
    std::vector<int64_t> sa, sb;  // per-out-dim element strides, 0 where broadcast
    bool same = false;            // identical shapes, dense fast path
};

BcPlan make_plan(const Shape& a, const Shape& b, const char* op) {
    BcPlan p;
    if (a == b) {
        p.out = a;
        p.same = true;
        return p;
    }
    const int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
    const int r = std::max(ra, rb);
    p.out.resize(static_cast<size_t>(r));
    p.sa.assign(static_cast<size_t>(r), 0);
    p.sb.assign(static_cast<size_t>(r), 0);
    // dims align from the right, missing dims act as size 1
    std::vector<int64_t> da(static_cast<size_t>(r), 1), db(static_cast<size_t>(r), 1);
    for (int i = 0; i < ra; ++i) da[static_cast<size_t>(r - ra + i)] = a[static_cast<size_t>(i)];
    for (int i = 0; i < rb; ++i) db[static_cast<size_t>(r - rb + i)] = b[static_cast<size_t>(i)];
    for (int i = 0; i < r; ++i) {
        const int64_t xa = da[static_cast<size_t>(i)], xb = db[static_cast<size_t>(i)];
        if (xa != xb && xa != 1 && xb != 1)
            throw TensorError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                              shape_str(b) + " are not broadcastable");
        p.out[static_cast<size_t>(i)] = std::max(xa, xb);
    }
    int64_t stra = 1, strb = 1;
    for (int i = r - 1; i >= 0; --i) {
        p.sa[static_cast<size_t>(i)] = (da[static_cast<size_t>(i)] == 1) ? 0 : stra;
        p.sb[static_cast<size_t>(i)] = (db[static_cast<size_t>(i)] == 1) ? 0 : strb;
        stra *= da[static_cast<size_t>(i)];
        strb *= db[static_cast<size_t>(i)];
    }
    return p;
}

template <class F>
void bc_foreach(const BcPlan& p, F&& body) {
    const int r = static_cast<int>(p.out.size());
    const int64_t total = numel(p.out);
    if (r == 0) {
        body(int64_t{0}, int64_t{0}, int64_t{0});
        return;
    }
    std::vector<int64_t> idx(static_cast<size_t>(r), 0);
    int64_t offa = 0, offb = 0;
    for (int64_t o = 0; o < total; ++o) {
        body(o, offa, offb);
        for (int d = r - 1; d >= 0; --d) {
            idx[static_cast<size_t>(d)]++;
            offa += p.sa[static_cast<size_t>(d)];
            offb += p.sb[static_cast<size_t>(d)];
            if (idx[static_cast<size_t>(d)] < p.out[static_cast<size_t>(d)]) break;
            offa -= p.sa[static_cast<size_t>(d)] * p.out[static_cast<size_t>(d)];
            offb -= p.sb[static_cast<size_t>(d)] * p.out[static_cast<size_t>(d)];
            idx[static_cast<size_t>(d)] = 0;
        }
    }
}

using BinF = double (*)(double x, double y);
using BinD = void (*)(double x, double y, double v, double& dx, double& dy);

Var binary_op(const char* name, Var a, Var b, BinF f, BinD d, bool check) {
    check_same_tape(a, b, name);
    Tape& t = *a.tape;
    const Array& av = a.value();
    const Array& bv = b.value();
    auto plan = std::make_shared<BcPlan>(make_plan(av.shape(), bv.shape(), name));
    Array out(plan->out);
    if (plan->same) {
        const int64_t n = av.size();
        for (int64_t i = 0; i < n; ++i) out[i] = f(av[i], bv[i]);
    } else {
        bc_foreach(*plan, [&](int64_t o, int64_t ia, int64_t ib) { out[o] = f(av[ia], bv[ib]); });
    }
    if (check) check_finite(name, out);
    const int ia = a.id, ib = b.id;
    return t.record(std::move(out), [ia, ib, d, plan](Tape& tp, int self) {
        const Array& g = tp.grad(self);
        const Array& av2 = tp.value(ia);
        const Array& bv2 = tp.value(ib);
        const Array& ov = tp.value(self);
        Array& ga = tp.grad(ia);
        Array& gb = tp.grad(ib);
        if (plan->same) {
            const int64_t n = g.size();
            for (int64_t i = 0; i < n; ++i) {
                double dx, dy;
                d(av2[i], bv2[i], ov[i], dx, dy);
                ga[i] += dx * g[i];
                gb[i] += dy * g[i];
            }
        } else {
            bc_foreach(*plan, [&](int64_t o, int64_t oa, int64_t ob) {
                double dx, dy;
                d(av2[oa], bv2[ob], ov[o], dx, dy);
                ga[oa] += dx * g[o];
                gb[ob] += dy * g[o];
            });
        }
    });
}

// F: value(x) -> double, D: derivative(x, fx) -> double
template <class F, class D>
Var unary_op(const char* name, Var a, F f, D df, bool check) {
    Tape& t = *a.tape;
    const Array& av = a.value();
    Array out(av.shape());
    const int64_t n = av.size();
    for (int64_t i = 0; i < n; ++i) out[i] = f(av[i]);
    if (check) check_finite(name, out);
    const int ia = a.id;
    return t.record(std::move(out), [ia, df](Tape& tp, int self) {
        const Array& g = tp.grad(self);
        const Array& av2 = tp.value(ia);
        const Array& ov = tp.value(self);
        Array& ga = tp.grad(ia);
        const int64_t m = g.size();
        for (int64_t i = 0; i < m; ++i) ga[i] += df(av2[i], ov[i]) * g[i];
    });
}

int normalize_axis(int axis, int rank, const char* op) {
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank)
        throw TensorError(std::string(op) + ": axis out of range for rank " +
                          std::to_string(rank));
    return axis;
}

// Splits a shape around `axis` into (outer, n, inner) loop extents.
void axis_extents(const Shape& s, int axis, int64_t& outer, int64_t& n, int64_t& inner) {
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
    n = s[static_cast<size_t>(axis)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
}

int64_t row_width(const Shape& s, const char* op) {
    if (s.empty()) throw TensorError(std::string(op) + ": expected rank >= 1");
    int64_t w = 1;
    for (size_t i = 1; i < s.size(); ++i) w *= s[i];
    return w;
}

// im2col for a [Cin,H,W] input: col is [Cin*kh*kw, Ho*Wo] row-major.
void im2col(const double* x, int cin, int h, int w, int kh, int kw, int stride, int pad,
            int ho, int wo, double* col) {
    for (int c = 0; c < cin; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                double* row = col + (static_cast<int64_t>((c * kh + ky) * kw + kx)) *
                                        (static_cast<int64_t>(ho) * wo);
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        row[static_cast<int64_t>(oy) * wo + ox] =
                            (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                ? x[(static_cast<int64_t>(c) * h + iy) * w + ix]
                                : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const double* col, int cin, int h, int w, int kh, int kw, int stride, int pad,
                int ho, int wo, double* x) {
    for (int c = 0; c < cin; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const double* row = col + (static_cast<int64_t>((c * kh + ky) * kw + kx)) *
                                              (static_cast<int64_t>(ho) * wo);
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= w) continue;
                        x[(static_cast<int64_t>(c) * h + iy) * w + ix] +=
                            row[static_cast<int64_t>(oy) * wo + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

// --------------------------------------------------------------- binary ops

Var add(Var a, Var b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double, double, double& dx, double& dy) {
            dx = 1.0;
            dy = 1.0;
        },
        false);
}

Var sub(Var a, Var b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double, double, double& dx, double& dy) {
            dx = 1.0;
            dy = -1.0;
        },
        false);
}

Var mul(Var a, Var b) {
    return binary_op(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double, double& dx, double& dy) {
            dx = y;
            dy = x;
        },
        false);
}

Var div(Var a, Var b) {
    return binary_op(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double, double y, double v, double& dx, double& dy) {
            dx = 1.0 / y;
            dy = -v / y;
        },
        true);
}

Var atan2(Var y, Var x) {
    return binary_op(
        "atan2", y, x, [](double yy, double xx) { return std::atan2(yy, xx); },
        [](double yy, double xx, double, double& dyy, double& dxx) {
            const double r2 = xx * xx + yy * yy;
            dyy = xx / r2;
            dxx = -yy / r2;
        },
        true);
}

// -------------------------------------------------------- scalar-const ops

Var add(Var a, double c) {
    return unary_op(
        "add_const", a, [c](double x) { return x + c; },
        [](double, double) { return 1.0; }, false);
}

Var mul(Var a, double c) {
    return unary_op(
        "mul_const", a, [c](double x) { return x * c; },
        [c](double, double) { return c; }, false);
}

Var pow(Var a, double p) {
    return unary_op(
        "pow", a, [p](double x) { return std::pow(x, p); },
        [p](double x, double) { return p * std::pow(x, p - 1.0); }, true);
}

Var minimum(Var a, double c) {
    return unary_op(
        "minimum", a, [c](double x) { return x < c ? x : c; },
        [c](double x, double) { return x <= c ? 1.0 : 0.0; }, false);
}

Var maximum(Var a, double c) {
    return unary_op(
        "maximum", a, [c](double x) { return x > c ? x : c; },
        [c](double x, double) { return x >= c ? 1.0 : 0.0; }, false);
}

Var clamp(Var a, double lo, double hi) {
    if (lo > hi) throw TensorError("clamp: lo > hi");
    return unary_op(
        "clamp", a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; }, false);
}

// ----------------------------------------------------------------- unary ops

Var neg(Var a) {
    return unary_op(
        "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; }, false);
}

Var exp(Var a) {
    return unary_op(
        "exp", a, [](double x) { return std::exp(x); },
        [](double, double fx) { return fx; }, true);
}

Var log(Var a) {
    return unary_op(
        "log", a, [](double x) { return std::log(x); },
        [](double x, double) { return 1.0 / x; }, true);
}

Var tanh(Var a) {
    return unary_op(
        "tanh", a, [](double x) { return std::tanh(x); },
        [](double, double fx) { return 1.0 - fx * fx; }, false);
}

Var sigmoid(Var a) {
    return unary_op(
        "sigmoid", a,
        [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                       : std::exp(x) / (1.0 + std::exp(x)); },
        [](double, double fx) { return fx * (1.0 - fx); }, false);
}

Var sqrt(Var a) {
    return unary_op(
        "sqrt", a, [](double x) { return std::sqrt(x); },
        [](double, double fx) { return 0.5 / fx; }, true);
}

Var sin(Var a) {
    return unary_op(
        "sin", a, [](double x) { return std::sin(x); },
        [](double x, double) { return std::cos(x); }, false);
}

Var cos(Var a) {
    return unary_op(
        "cos", a, [](double x) { return std::cos(x); },
        [](double x, double) { return -std::sin(x); }, false);
}

Var abs(Var a) {
    return unary_op(
        "abs", a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }, false);
}

Var relu(Var a) { return maximum(a, 0.0); }

Var leaky_relu(Var a, double slope) {
    return unary_op(
        "leaky_relu", a, [slope](double x) { return x >= 0.0 ? x : slope * x; },
        [slope](double x, double) { return x >= 0.0 ? 1.0 : slope; }, false);
}

// ---------------------------------------------------------------- reductions

Var sum(Var a) {
    Tape& t = *a.tape;
    const Array& av = a.value();
    double s = 0.0;
    const int64_t n = av.size();
    for (int64_t i = 0; i < n; ++i) s += av[i];
    const int ia = a.id;
    return t.record(Array::scalar(s), [ia](Tape& tp, int self) {
        const double g = tp.grad(self)[0];
        Array& ga = tp.grad(ia);
        const int64_t m = ga.size();
        for (int64_t i = 0; i < m; ++i) ga[i] += g;
    });
}

Var mean(Var a) {
    const int64_t n = a.value().size();
    if (n == 0) throw TensorError("mean: empty array");
    return mul(sum(a), 1.0 / static_cast<double>(n));
}

Var sum(Var a, int axis) {
    Tape& t = *a.tape;
    const Array& av = a.value();
    const Shape& s = av.shape();
    axis = normalize_axis(axis, static_cast<int>(s.size()), "sum");
    int64_t outer, n, inner;
    axis_extents(s, axis, outer, n, inner);
    Shape os = s;
    os.erase(os.begin() + axis);
    Array out(os);
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t k = 0; k < n; ++k)
            for (int64_t i = 0; i < inner; ++i)
                out[o * inner + i] += av[(o * n + k) * inner + i];
    const int ia = a.id;
    return t.record(std::move(out), [ia, outer, n, inner](Tape& tp, int self) {
        const Array& g = tp.grad(self);
        Array& ga = tp.grad(ia);
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t k = 0; k < n; ++k)
                for (int64_t i = 0; i < inner; ++i)
                    ga[(o * n + k) * inner + i] += g[o * inner + i];
    });
}

Var mean(Var a, int axis) {
    const Shape& s = a.value().shape();
    const int ax = normalize_axis(axis, static_cast<int>(s.size()), "mean");
    const int64_t n = s[static_cast<size_t>(ax)];
    if (n == 0) throw TensorError("mean: empty axis");
    return mul(sum(a, axis), 1.0 / static_cast<double>(n));
}

// --------------------------------------------------------------- shape ops

Var reshape(Var a, Shape s) {
    Tape& t = *a.tape;
    const Array& av = a.value();
    if (numel(s) != av.size())
        throw TensorError("reshape: cannot reshape " + shape_str(av.shape()) + " to " +
                          shape_str(s));
    Array out = av;
    out = out.reshaped(s);
    const int ia = a.id;
    return t.record(std::move(out), [ia](Tape& tp, int self) {
        const Array& g = tp.grad(self);
        Array& ga = tp.grad(ia);
        const int64_t m = g.size();
        for (int64_t i = 0; i < m; ++i) ga[i] += g[i];
    });
}

Var broadcast_to(Var a, Shape s) {
    Tape& t = *a.tape;
    const Array& av = a.value();
    BcPlan plan = make_plan(av.shape(), s, "broadcast_to");
    if (plan.out != s)
        throw TensorError("broadcast_to: cannot broadcast " + shape_str(av.shape()) + " to " +
                          shape_str(s));
    if (plan.same) return reshape(a, s);  // rank padding only
    Array out(s);
    bc_foreach(plan, [&](int64_t o, int64_t oa, int64_t) { out[o] = av[oa]; });
    const int ia = a.id;
    auto pp = std::make_shared<BcPlan>(std::move(plan));
    return t.record(std::move(out), [ia, pp](Tape& tp, int self) {
        const Array& g = tp.grad(self);
        Array& ga = tp.grad(ia);
        bc_foreach(*pp, [&](int64_t o, int64_t oa, int64_t) { ga[oa] += g[o]; });
    });
}

Var slice(Var a, int axis, int64_t start, int64_t len) {
    Tape& t = *a.tape;
    const Array& av = a.value();
    const Shape& s = av.shape();
    axis = normalize_axis(axis, static_cast<int>(s.size()), "slice");
    const int64_t dim = s[static_cast<size_t>(axis)];
    if (start < 0 || len < 0 || start + len > dim)
        throw TensorError("slice: range [" + std::to_string(start) + ", " +
                          std::to_string(start + len) + ") out of bounds for dim " +
                          std::to_string(dim));
    int64_t outer, n, inner;
    axis_extents(s, axis, outer, n, inner);
    Shape os = s;
    os[static_cast<size_t>(axis)] = len;
    Array out(os);
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t k = 0; k < len; ++k)
            for (int64_t i = 0; i < inner; ++i)
                out[(o * len + k) * inner + i] = av[(o * n + start + k) * inner + i];
    const int ia = a.id;
    return t.record(std::move(out), [ia, outer, n, inner, start, len](Tape& tp, int self) {
        const Array& g = tp.grad(self);
        Array& ga = tp.grad(ia);
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t k = 0; k < len; ++k)
                for (int64_t i = 0; i < inner; ++i)
                    ga[(o * n + start + k) * inner + i] += g[(o * len + k) * inner + i];
    });
}

Var concat(const std::vector<Var>& xs, int axis) {
    if (xs.empty()) throw TensorError("concat: no inputs");
    Tape& t = *xs[0].tape;
    const Shape& s0 = xs[0].value().shape();
    const int rank = static_cast<int>(s0.size());
    axis = normalize_axis(axis, rank, "concat");
    int64_t total = 0;
    for (const Var& x : xs) {
        check_same_tape(xs[0], x, "concat");
        const Shape& s = x.value().shape();
        if (static_cast<int>(s.size()) != rank)
            throw TensorError("concat: rank mismatch");
        for (int i = 0; i < rank; ++i)
            if (i != axis && s[static_cast<size_t>(i)] != s0[static_cast<size_t>(i)])
                throw TensorError("concat: shapes " + shape_str(s0) + " and " + shape_str(s) +
                                  " differ off-axis");
        total += s[static_cast<size_t>(axis)];
    }
    Shape os = s0;
    os[static_cast<size_t>(axis)] = total;
    int64_t outer, n_out, inner;
    axis_extents(os, axis, outer, n_out, inner);
    Array out(os);
    std::vector<int> ids;
    std::vector<int64_t> lens;
    int64_t off = 0;
    for (const Var& x : xs) {
        const Array& xv = x.value();
        const int64_t len = xv.shape()[static_cast<size_t>(axis)];
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t k = 0; k < len; ++k)
                for (int64_t i = 0; i < inner; ++i)
                    out[(o * n_out + off + k) * inner + i] = xv[(o * len + k) * inner + i];
        ids.push_back(x.id);
        lens.push_back(len);
        off += len;
    }
    return t.record(std::move(out), [ids, lens, outer, n_out, inner](Tape& tp, int self) {
        const Array& g = tp.grad(self);
        int64_t off2 = 0;
        for (size_t j = 0; j < ids.size(); ++j) {
            Array& ga = tp.grad(ids[j]);
            const int64_t len = lens[j];
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t k = 0; k < len; ++k)
                    for (int64_t i = 0; i < inner; ++i)
                        ga[(o * len + k) * inner + i] += g[(o * n_out + off2 + k) * inner + i];
            off2 += len;
        }
    });
}

// ---------------------------------------------------------------- indexing

Var gather_rows(Var a, const std::vector<int64_t>& idx) {
    Tape& t = *a.tape;
    const Array& av = a.value();
    const int64_t rows = av.shape().empty() ? 0 : av.shape()[0];
    const int64_t w = row_width(av.shape(), "gather_rows");
    for (int64_t j : idx)
        if (j < 0 || j >= rows)
            throw TensorError("gather_rows: index " + std::to_string(j) +
                              " out of range for " + std::to_string(rows) + " rows");
    Shape os = av.shape();
    os[0] = static_cast<int64_t>(idx.size());
    Array out(os);
    for (size_t j = 0; j < idx.size(); ++j)
        for (int64_t i = 0; i < w; ++i)
            out[static_cast<int64_t>(j) * w + i] = av[idx[j] * w + i];
    const int ia = a.id;
    auto ip = std::make_shared<std::vector<int64_t>>(idx);
    return t.record(std::move(out), [ia, ip, w](Tape& tp, int self) {
        const Array& g = tp.grad(self);
        Array& ga = tp.grad(ia);
        for (size_t j = 0; j < ip->size(); ++j)
            for (int64_t i = 0; i < w; ++i)
                ga[(*ip)[j] * w + i] += g[static_cast<int64_t>(j) * w + i];
    });
}

Var scatter_add_rows(Var a, const std::vector<int64_t>& idx, int64_t out_rows) {
    Tape& t = *a.tape;
    const Array& av = a.value();
    const int64_t w = row_width(av.shape(), "scatter_add_rows");
    if (av.shape()[0] != static_cast<int64_t>(idx.size()))
        throw TensorError("scatter_add_rows: got " + std::to_string(idx.size()) +
                          " indices for " + std::to_string(av.shape()[0]) + " rows");
    for (int64_t j : idx)
        if (j < 0 || j >= out_rows)
            throw TensorError("scatter_add_rows: index " + std::to_string(j) +
                              " out of range for " + std::to_string(out_rows) + " rows");
    Shape os = av.shape();
    os[0] = out_rows;
    Array out(os);
    for (size_t j = 0; j < idx.size(); ++j)
        for (int64_t i = 0; i < w; ++i)
            out[idx[j] * w + i] += av[static_cast<int64_t>(j) * w + i];
    const int ia = a.id;
    auto ip = std::make_shared<std::vector<int64_t>>(idx);
    return t.record(std::move(out), [ia, ip, w](Tape& tp, int self) {
        const Array& g = tp.grad(self);
        Array& ga = tp.grad(ia);
        for (size_t j = 0; j < ip->size(); ++j)
            for (int64_t i = 0; i < w; ++i)
                ga[static_cast<int64_t>(j) * w + i] += g[(*ip)[j] * w + i];
    });
}

// ------------------------------------------------------------------ linear

Var matmul(Var a, Var b) {
    check_same_tape(a, b, "matmul");
    Tape& t = *a.tape;
    const Array& av = a.value();
    const Array& bv = b.value();
    if (av.shape().size() != 2 || bv.shape().size() != 2 || av.shape()[1] != bv.shape()[0])
        throw TensorError("matmul: incompatible shapes " + shape_str(av.shape()) + " and " +
                          shape_str(bv.shape()));
    const int64_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
    Array out({m, n});
    EMap(out.data(), m, n) = ECMap(av.data(), m, k) * ECMap(bv.data(), k, n);
    const int ia = a.id, ib = b.id;
    return t.record(std::move(out), [ia, ib, m, k, n](Tape& tp, int self) {
        const Array& g = tp.grad(self);
        const Array& av2 = tp.value(ia);
        const Array& bv2 = tp.value(ib);
        ECMap gm(g.data(), m, n), am(av2.data(), m, k), bm(bv2.data(), k, n);
        EMap(tp.grad(ia).data(), m, k).noalias() += gm * bm.transpose();
        EMap(tp.grad(ib).data(), k, n).noalias() += am.transpose() * gm;
    });
}

Var transpose2(Var a) {
    Tape& t = *a.tape;
    const Array& av = a.value();
    if (av.shape().size() != 2)
        throw TensorError("transpose2: expected rank-2, got " + shape_str(av.shape()));
    const int64_t m = av.shape()[0], n = av.shape()[1];
    Array out({n, m});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
    const int ia = a.id;
    return t.record(std::move(out), [ia, m, n](Tape& tp, int self) {
        const Array& g = tp.grad(self);
        Array& ga = tp.grad(ia);
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
}

Var conv2d(Var x, Var w, Var b, int stride, int pad) {
    check_same_tape(x, w, "conv2d");
    check_same_tape(x, b, "conv2d");
    Tape& t = *x.tape;
    const Array& xv = x.value();
    const Array& wv = w.value();
    const Array& bv = b.value();
    if (xv.shape().size() != 3 || wv.shape().size() != 4 || bv.shape().size() != 1)
        throw TensorError("conv2d: expected x [C,H,W], w [O,C,kh,kw], b [O]");
    const int cin = static_cast<int>(xv.shape()[0]);
    const int h = static_cast<int>(xv.shape()[1]);
    const int wd = static_cast<int>(xv.shape()[2]);
    const int cout = static_cast<int>(wv.shape()[0]);
    const int kh = static_cast<int>(wv.shape()[2]);
    const int kw = static_cast<int>(wv.shape()[3]);
    if (wv.shape()[1] != cin || bv.shape()[0] != cout)
        throw TensorError("conv2d: channel mismatch between x " + shape_str(xv.shape()) +
                          ", w " + shape_str(wv.shape()) + ", b " + shape_str(bv.shape()));
    if (stride < 1 || pad < 0) throw TensorError("conv2d: bad stride or pad");
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (wd + 2 * pad - kw) / stride + 1;
    if (ho < 1 || wo < 1) throw TensorError("conv2d: kernel larger than padded input");

    const int64_t krows = static_cast<int64_t>(cin) * kh * kw;
    const int64_t cols = static_cast<int64_t>(ho) * wo;
    Array col({krows, cols});
    im2col(xv.data(), cin, h, wd, kh, kw, stride, pad, ho, wo, col.data());
    Array out({cout, ho, wo});
    EMap om(out.data(), cout, cols);
    om = ECMap(wv.data(), cout, krows) * ECMap(col.data(), krows, cols);
    for (int c = 0; c < cout; ++c) om.row(c).array() += bv[c];

    const int ix = x.id, iw = w.id, ibv = b.id;
    // col is recomputed in backward rather than stashed; it dwarfs the
    // activations for large feature maps
    return t.record(std::move(out),
                    [ix, iw, ibv, cin, h, wd, kh, kw, stride, pad, ho, wo](Tape& tp, int self) {
                        const Array& g = tp.grad(self);
                        const Array& xv2 = tp.value(ix);
                        const Array& wv2 = tp.value(iw);
                        const int cout2 = static_cast<int>(wv2.shape()[0]);
                        const int64_t krows = static_cast<int64_t>(cin) * kh * kw;
                        const int64_t cols = static_cast<int64_t>(ho) * wo;
                        Array col({krows, cols});
                        im2col(xv2.data(), cin, h, wd, kh, kw, stride, pad, ho, wo, col.data());
                        ECMap gm(g.data(), cout2, cols);
                        EMap(tp.grad(iw).data(), cout2, krows).noalias() +=
                            gm * ECMap(col.data(), krows, cols).transpose();
                        Array& gb = tp.grad(ibv);
                        for (int c = 0; c < cout2; ++c) gb[c] += gm.row(c).sum();
                        Array dcol({krows, cols});
                        EMap(dcol.data(), krows, cols).noalias() =
                            ECMap(wv2.data(), cout2, krows).transpose() * gm;
                        col2im_add(dcol.data(), cin, h, wd, kh, kw, stride, pad, ho, wo,
                                   tp.grad(ix).data());
                    });
}

Var upsample2x(Var x) {
    Tape& t = *x.tape;
    const Array& xv = x.value();
    if (xv.shape().size() != 3) throw TensorError("upsample2x: expected [C,H,W]");
    const int64_t c = xv.shape()[0], h = xv.shape()[1], w = xv.shape()[2];
    Array out({c, 2 * h, 2 * w});
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t y = 0; y < 2 * h; ++y)
            for (int64_t xx = 0; xx < 2 * w; ++xx)
                out[(ch * 2 * h + y) * 2 * w + xx] = xv[(ch * h + y / 2) * w + xx / 2];
    const int ix = x.id;
    return t.record(std::move(out), [ix, c, h, w](Tape& tp, int self) {
        const Array& g = tp.grad(self);
        Array& gx = tp.grad(ix);
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t y = 0; y < 2 * h; ++y)
                for (int64_t xx = 0; xx < 2 * w; ++xx)
                    gx[(ch * h + y / 2) * w + xx / 2] += g[(ch * 2 * h + y) * 2 * w + xx];
    });
}

Var cross3(Var a, Var b) {
    check_same_tape(a, b, "cross3");
    Tape& t = *a.tape;
    const Array& av = a.value();
    const Array& bv = b.value();
    if (av.shape() != bv.shape() || av.shape().size() != 2 || av.shape()[1] != 3)
        throw TensorError("cross3: expected matching [N,3] inputs, got " +
                          shape_str(av.shape()) + " and " + shape_str(bv.shape()));
    const int64_t n = av.shape()[0];
    Array out(av.shape());
    for (int64_t i = 0; i < n; ++i) {
        const double* u = av.data() + 3 * i;
        const double* v = bv.data() + 3 * i;
        double* o = out.data() + 3 * i;
        o[0] = u[1] * v[2] - u[2] * v[1];
        o[1] = u[2] * v[0] - u[0] * v[2];
        o[2] = u[0] * v[1] - u[1] * v[0];
    }
    const int ia = a.id, ib = b.id;
    return t.record(std::move(out), [ia, ib, n](Tape& tp, int self) {
        const Array& g = tp.grad(self);
        const Array& av2 = tp.value(ia);
        const Array& bv2 = tp.value(ib);
        Array& ga = tp.grad(ia);
        Array& gb = tp.grad(ib);
        for (int64_t i = 0; i < n; ++i) {
            const double* u = av2.data() + 3 * i;
            const double* v = bv2.data() + 3 * i;
            const double* gg = g.data() + 3 * i;
            // d(u x v)/du^T g = v x g, d(u x v)/dv^T g = g x u
            ga[3 * i + 0] += v[1] * gg[2] - v[2] * gg[1];
            ga[3 * i + 1] += v[2] * gg[0] - v[0] * gg[2];
            ga[3 * i + 2] += v[0] * gg[1] - v[1] * gg[0];
            gb[3 * i + 0] += gg[1] * u[2] - gg[2] * u[1];
            gb[3 * i + 1] += gg[2] * u[0] - gg[0] * u[2];
            gb[3 * i + 2] += gg[0] * u[1] - gg[1] * u[0];
        }
    });
}

namespace {

Var permute_hw(Var a, bool to_chw) {
    Tape& t = *a.tape;
    const Array& av = a.value();
    if (av.shape().size() != 3)
        throw TensorError("permute: expected rank-3 input, got " + shape_str(av.shape()));
    const int64_t d0 = av.shape()[0], d1 = av.shape()[1], d2 = av.shape()[2];
    const int64_t h = to_chw ? d0 : d1, w = to_chw ? d1 : d2, c = to_chw ? d2 : d0;
    Shape os = to_chw ? Shape{c, h, w} : Shape{h, w, c};
    Array out(os);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t ch = 0; ch < c; ++ch) {
                const int64_t hwc = (y * w + x) * c + ch;
                const int64_t chw = (ch * h + y) * w + x;
                out[to_chw ? chw : hwc] = av[to_chw ? hwc : chw];
            }
    const int ia = a.id;
    return t.record(std::move(out), [ia, h, w, c, to_chw](Tape& tp, int self) {
        const Array& g = tp.grad(self);
        Array& ga = tp.grad(ia);
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                for (int64_t ch = 0; ch < c; ++ch) {
                    const int64_t hwc = (y * w + x) * c + ch;
                    const int64_t chw = (ch * h + y) * w + x;
                    ga[to_chw ? hwc : chw] += g[to_chw ? chw : hwc];
                }
    });
}

}  // namespace

Var chw_from_hwc(Var a) { return permute_hw(a, true); }
Var hwc_from_chw(Var a) { return permute_hw(a, false); }

}  // namespace softmesh
