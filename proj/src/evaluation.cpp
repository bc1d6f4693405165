#include "softmesh/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace softmesh {

namespace {

struct Bounds {
    double lo[3], hi[3];
};

Bounds point_bounds(const Array& pts) {
    Bounds b;
    for (int c = 0; c < 3; ++c) {
        b.lo[c] = std::numeric_limits<double>::infinity();
        b.hi[c] = -std::numeric_limits<double>::infinity();
    }
    for (int64_t i = 0; i < pts.dim(0); ++i)
        for (int c = 0; c < 3; ++c) {
            b.lo[c] = std::min(b.lo[c], pts[3 * i + c]);
            b.hi[c] = std::max(b.hi[c], pts[3 * i + c]);
        }
    return b;
}

Array normalize_with(const Array& pts, const Bounds& b) {
    const double extent =
        std::max({b.hi[0] - b.lo[0], b.hi[1] - b.lo[1], b.hi[2] - b.lo[2]});
    if (!(extent > 0.0))
        throw TensorError("normalize: zero-extent point set cannot be scaled");
    Array out(pts.shape());
    for (int64_t i = 0; i < pts.dim(0); ++i)
        for (int c = 0; c < 3; ++c) {
            const double center = 0.5 * (b.lo[c] + b.hi[c]);
            out[3 * i + c] = (pts[3 * i + c] - center) / extent;
        }
    return out;
}

void check_cloud(const Array& pts, const char* who) {
    if (pts.rank() != 2 || pts.dim(1) != 3 || pts.dim(0) < 1)
        throw TensorError(std::string(who) + ": expected non-empty [N,3] points, got " +
                          shape_str(pts.shape()));
}

}  // namespace

TriMesh normalize_mesh(const TriMesh& mesh) {
    TriMesh out = mesh;
    out.vertices = normalize_with(mesh.vertices, point_bounds(mesh.vertices));
    return out;
}

Array normalize_points(const Array& pts) {
    check_cloud(pts, "normalize_points");
    return normalize_with(pts, point_bounds(pts));
}

KdTree3::KdTree3(const Array& pts) {
    check_cloud(pts, "KdTree3");
    const int64_t n = pts.dim(0);
    pts_.assign(pts.data(), pts.data() + 3 * n);
    std::vector<int64_t> idx(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    nodes_.reserve(static_cast<size_t>(n));
    root_ = build(idx, 0, n, 0);
}

int KdTree3::build(std::vector<int64_t>& idx, int64_t lo, int64_t hi, int depth) {
    if (lo >= hi) return -1;
    const int axis = depth % 3;
    const int64_t mid = lo + (hi - lo) / 2;
    std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi,
                     [&](int64_t a, int64_t b) {
                         if (pts_[static_cast<size_t>(3 * a + axis)] !=
                             pts_[static_cast<size_t>(3 * b + axis)])
                             return pts_[static_cast<size_t>(3 * a + axis)] <
                                    pts_[static_cast<size_t>(3 * b + axis)];
                         return a < b;
                     });
    Node node;
    node.point = idx[static_cast<size_t>(mid)];
    node.axis = axis;
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    nodes_[static_cast<size_t>(self)].left = build(idx, lo, mid, depth + 1);
    nodes_[static_cast<size_t>(self)].right = build(idx, mid + 1, hi, depth + 1);
    return self;
}

void KdTree3::search(int node, const double* q, int64_t& best, double& best_d2) const {
    if (node < 0) return;
    const Node& n = nodes_[static_cast<size_t>(node)];
    const double* p = pts_.data() + 3 * n.point;
    const double d2 = (q[0] - p[0]) * (q[0] - p[0]) + (q[1] - p[1]) * (q[1] - p[1]) +
                      (q[2] - p[2]) * (q[2] - p[2]);
    // strict < plus index tie-break keeps the answer deterministic
    if (d2 < best_d2 || (d2 == best_d2 && n.point < best)) {
        best_d2 = d2;
        best = n.point;
    }
    const double delta = q[n.axis] - p[n.axis];
    const int near = delta < 0.0 ? n.left : n.right;
    const int far = delta < 0.0 ? n.right : n.left;
    search(near, q, best, best_d2);
    if (delta * delta <= best_d2) search(far, q, best, best_d2);
}

int64_t KdTree3::nearest(const double* q) const {
    int64_t best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    search(root_, q, best, best_d2);
    return best;
}

double KdTree3::nearest_dist2(const double* q) const {
    int64_t best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    search(root_, q, best, best_d2);
    return best_d2;
}

double chamfer(const Array& p1, const Array& p2, ChamferKind kind) {
    check_cloud(p1, "chamfer");
    check_cloud(p2, "chamfer");
    KdTree3 t1(p1), t2(p2);
    auto side = [&](const Array& from, const KdTree3& to) {
        double acc = 0.0;
        for (int64_t i = 0; i < from.dim(0); ++i) {
            const double d2 = to.nearest_dist2(from.data() + 3 * i);
            acc += kind == ChamferKind::squared ? d2 : std::sqrt(d2);
        }
        return acc / static_cast<double>(from.dim(0));
    };
    return 0.5 * (side(p1, t2) + side(p2, t1));
}

double mask_iou_eval(const Array& a, const Array& b, double threshold) {
    if (a.shape() != b.shape())
        throw TensorError("mask_iou: shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    double inter = 0.0, uni = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        const bool x = a[i] > threshold, y = b[i] > threshold;
        inter += (x && y) ? 1.0 : 0.0;
        uni += (x || y) ? 1.0 : 0.0;
    }
    return uni == 0.0 ? 1.0 : inter / uni;
}

}  // namespace softmesh
