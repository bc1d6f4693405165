#include <cmath>

#include "softmesh/adam.hpp"
#include "softmesh/evaluation.hpp"
#include "softmesh/ops.hpp"
#include "softmesh/tape.hpp"

namespace softmesh {

namespace {

Var norm3(Var v) { return sqrt(sum(mul(v, v))); }

// Gram-Schmidt of the 6D parametrization: rows b1, b2, b1 x b2.
Var rotation_from_6d(Tape& tape, Var rot6) {
    (void)tape;
    Var a1 = slice(rot6, 0, 0, 3);
    Var a2 = slice(rot6, 0, 3, 3);
    Var b1 = div(a1, broadcast_to(reshape(norm3(a1), {1}), {3}));
    Var d = sum(mul(b1, a2));
    Var u = sub(a2, mul(b1, broadcast_to(reshape(d, {1}), {3})));
    Var b2 = div(u, broadcast_to(reshape(norm3(u), {1}), {3}));
    Var b3 = reshape(cross3(reshape(b1, {1, 3}), reshape(b2, {1, 3})), {3});
    return concat({reshape(b1, {1, 3}), reshape(b2, {1, 3}), reshape(b3, {1, 3})}, 0);
}

Var transform_points(Var src, Var rot, Var scale, Var trans) {
    return add(matmul(mul(src, scale), transpose2(rot)), reshape(trans, {1, 3}));
}

}  // namespace

Array AlignmentParams::rotation() const {
    Tape tape;
    return rotation_from_6d(tape, tape.constant(rot6)).value();
}

IcpResult icp_align(const Array& source, const Array& target, int iters, double lr) {
    if (source.rank() != 2 || source.dim(1) != 3 || target.rank() != 2 || target.dim(1) != 3)
        throw TensorError("icp_align: expected [N,3] source and target clouds");
    const int64_t ns = source.dim(0), nt = target.dim(0);
    KdTree3 target_tree(target);

    AlignmentParams cur;
    AdamConfig ac;
    ac.lr = lr;
    Adam opt(ac);

    IcpResult best;
    best.post = std::numeric_limits<double>::infinity();

    for (int it = 0; it <= iters; ++it) {
        Tape tape;
        Var trans = tape.leaf(cur.trans);
        Var rot6 = tape.leaf(cur.rot6);
        Var scale = tape.leaf(cur.scale);
        Var rot = rotation_from_6d(tape, rot6);
        Var aligned = transform_points(tape.constant(source), rot, scale, trans);
        const Array& av = aligned.value();
        if (!all_finite(av))
            throw TensorError("icp_align: diverged at iteration " + std::to_string(it));

        const double obj = chamfer(av, target, ChamferKind::squared);
        if (it == 0) best.pre = obj;
        if (obj < best.post) {
            best.post = obj;
            best.params = cur;
            best.aligned = av;
        }
        if (it == iters) break;

        // fix nearest-neighbor correspondences, then descend
        std::vector<int64_t> fwd(static_cast<size_t>(ns));
        Array fwd_pts({ns, 3});
        for (int64_t i = 0; i < ns; ++i) {
            fwd[static_cast<size_t>(i)] = target_tree.nearest(av.data() + 3 * i);
            for (int c = 0; c < 3; ++c)
                fwd_pts[3 * i + c] = target[3 * fwd[static_cast<size_t>(i)] + c];
        }
        KdTree3 aligned_tree(av);
        std::vector<int64_t> bwd(static_cast<size_t>(nt));
        for (int64_t j = 0; j < nt; ++j)
            bwd[static_cast<size_t>(j)] = aligned_tree.nearest(target.data() + 3 * j);

        Var d1 = sub(aligned, tape.constant(fwd_pts));
        Var term1 = mul(sum(mul(d1, d1)), 1.0 / static_cast<double>(ns));
        Var d2 = sub(tape.constant(target), gather_rows(aligned, bwd));
        Var term2 = mul(sum(mul(d2, d2)), 1.0 / static_cast<double>(nt));
        Var loss = mul(add(term1, term2), 0.5);
        tape.backward(loss);

        opt.step("icp.trans", cur.trans, tape.grad_of(trans));
        opt.step("icp.rot6", cur.rot6, tape.grad_of(rot6));
        opt.step("icp.scale", cur.scale, tape.grad_of(scale));
    }
    return best;
}

}  // namespace softmesh
