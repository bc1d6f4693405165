#pragma once

#include <vector>

#include "softmesh/tape.hpp"

namespace softmesh {

// Elementwise binary ops with numpy-style broadcasting.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var atan2(Var y, Var x);

// Scalar-constant variants (no extra node for the constant).
Var add(Var a, double c);
Var mul(Var a, double c);
Var pow(Var a, double p);

// At ties the subgradient follows the array operand (derivative 1).
Var minimum(Var a, double c);
Var maximum(Var a, double c);
Var clamp(Var a, double lo, double hi);

Var neg(Var a);
Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var sqrt(Var a);
Var sin(Var a);
Var cos(Var a);
Var abs(Var a);
Var relu(Var a);
Var leaky_relu(Var a, double slope);

Var sum(Var a);              // full reduction to scalar
Var sum(Var a, int axis);
Var mean(Var a);
Var mean(Var a, int axis);

Var reshape(Var a, Shape s);
Var broadcast_to(Var a, Shape s);
Var slice(Var a, int axis, int64_t start, int64_t len);
Var concat(const std::vector<Var>& xs, int axis);

// Row indexing along axis 0. scatter_add accumulates duplicate indices.
Var gather_rows(Var a, const std::vector<int64_t>& idx);
Var scatter_add_rows(Var a, const std::vector<int64_t>& idx, int64_t out_rows);

Var matmul(Var a, Var b);    // [m,k] x [k,n]
Var transpose2(Var a);       // [m,n] -> [n,m]

// x: [Cin,H,W], w: [Cout,Cin,kh,kw], b: [Cout]
Var conv2d(Var x, Var w, Var b, int stride, int pad);
Var upsample2x(Var x);       // nearest, [C,H,W] -> [C,2H,2W]

Var cross3(Var a, Var b);    // rowwise cross product, [N,3]

Var chw_from_hwc(Var a);     // [H,W,C] -> [C,H,W]
Var hwc_from_chw(Var a);     // [C,H,W] -> [H,W,C]

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator+(Var a, double c) { return add(a, c); }
inline Var operator+(double c, Var a) { return add(a, c); }
inline Var operator-(Var a, double c) { return add(a, -c); }
inline Var operator-(double c, Var a) { return add(neg(a), c); }
inline Var operator*(Var a, double c) { return mul(a, c); }
inline Var operator*(double c, Var a) { return mul(a, c); }
inline Var operator/(Var a, double c) { return mul(a, 1.0 / c); }
inline Var operator-(Var a) { return neg(a); }

// Value-level helpers shared by op implementations and tests.
void check_same_tape(Var a, Var b, const char* op);
void check_finite(const char* op, const Array& a);

}  // namespace softmesh
