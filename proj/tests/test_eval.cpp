#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <sstream>

#include "softmesh/evaluation.hpp"
#include "softmesh/mesh.hpp"
#include "softmesh/rng.hpp"

using namespace softmesh;

namespace {

constexpr double kPi = 3.14159265358979323846;

Array rand_cloud(Rng& rng, int64_t n, double lo = -1.0, double hi = 1.0) {
    Array pts({n, 3});
    for (int64_t i = 0; i < pts.size(); ++i) pts[i] = rng.uniform(lo, hi);
    return pts;
}

// same arithmetic as KdTree3::search so results compare exactly
double dist2(const double* a, const double* b) {
    return (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
           (a[2] - b[2]) * (a[2] - b[2]);
}

void brute_nearest(const Array& pts, const double* q, int64_t& best, double& best_d2) {
    best = -1;
    best_d2 = std::numeric_limits<double>::infinity();
    for (int64_t i = 0; i < pts.dim(0); ++i) {
        const double d2 = dist2(q, pts.data() + 3 * i);
        if (d2 < best_d2 || (d2 == best_d2 && i < best)) {
            best_d2 = d2;
            best = i;
        }
    }
}

double brute_chamfer(const Array& p1, const Array& p2, ChamferKind kind) {
    auto side = [&](const Array& from, const Array& to) {
        double acc = 0.0;
        for (int64_t i = 0; i < from.dim(0); ++i) {
            int64_t bi;
            double bd2;
            brute_nearest(to, from.data() + 3 * i, bi, bd2);
            acc += kind == ChamferKind::squared ? bd2 : std::sqrt(bd2);
        }
        return acc / static_cast<double>(from.dim(0));
    };
    return 0.5 * (side(p1, p2) + side(p2, p1));
}

Array axis_angle_rotation(const double axis[3], double angle) {
    const double n = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
    const double x = axis[0] / n, y = axis[1] / n, z = axis[2] / n;
    const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
    return Array({3, 3}, {t * x * x + c, t * x * y - s * z, t * x * z + s * y,
                          t * x * y + s * z, t * y * y + c, t * y * z - s * x,
                          t * x * z - s * y, t * y * z + s * x, t * z * z + c});
}

// p' = R (s (*) p) + t, matching the alignment model in icp_align
Array apply_transform(const Array& pts, const Array& rot, const double scale[3],
                      const double trans[3]) {
    Array out({pts.dim(0), 3});
    for (int64_t i = 0; i < pts.dim(0); ++i) {
        double sp[3];
        for (int c = 0; c < 3; ++c) sp[c] = scale[c] * pts[3 * i + c];
        for (int r = 0; r < 3; ++r)
            out[3 * i + r] = rot[3 * r + 0] * sp[0] + rot[3 * r + 1] * sp[1] +
                             rot[3 * r + 2] * sp[2] + trans[r];
    }
    return out;
}

double det3(const Array& m) {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

}  // namespace

TEST_CASE("normalization: centers and scales to the half-unit cube") {
    Array cube({8, 3});
    for (int i = 0; i < 8; ++i) {
        cube[3 * i + 0] = (i & 1) ? 2.0 : 0.0;
        cube[3 * i + 1] = (i & 2) ? 2.0 : 0.0;
        cube[3 * i + 2] = (i & 4) ? 2.0 : 0.0;
    }
    Array n = normalize_points(cube);
    for (int64_t i = 0; i < n.size(); ++i) CHECK(std::abs(n[i]) == doctest::Approx(0.5));

    SUBCASE("idempotent") {
        Array n2 = normalize_points(n);
        for (int64_t i = 0; i < n.size(); ++i)
            CHECK(n2[i] == doctest::Approx(n[i]).epsilon(1e-9));
    }
    SUBCASE("anisotropic extents scale uniformly") {
        Array box({2, 3}, {0, 0, 0, 4, 2, 1});
        Array nb = normalize_points(box);
        CHECK(nb[3] - nb[0] == doctest::Approx(1.0));
        CHECK(nb[4] - nb[1] == doctest::Approx(0.5));
        CHECK(nb[5] - nb[2] == doctest::Approx(0.25));
    }
    SUBCASE("mesh variant keeps connectivity") {
        TriMesh mesh = make_icosphere(0);
        TriMesh nm = normalize_mesh(mesh);
        CHECK(nm.faces == mesh.faces);
        double mx = 0.0;
        for (int64_t i = 0; i < nm.vertices.size(); ++i)
            mx = std::max(mx, std::abs(nm.vertices[i]));
        CHECK(mx == doctest::Approx(0.5));
    }
    SUBCASE("zero extent throws") {
        CHECK_THROWS_AS(normalize_points(Array({3, 3}, 1.0)), TensorError);
        CHECK_THROWS_AS(normalize_points(Array({2, 4})), TensorError);
    }
}

TEST_CASE("kd tree matches brute force exactly, ties included") {
    Rng rng(11);
    Array pts = rand_cloud(rng, 512);
    // grid coordinates force plenty of exact distance ties
    Array grid({64, 3});
    for (int64_t i = 0; i < grid.size(); ++i)
        grid[i] = std::floor(rng.uniform(0, 3.0));
    for (const Array& cloud : {pts, grid}) {
        KdTree3 tree(cloud);
        for (int t = 0; t < 256; ++t) {
            double q[3];
            if (t % 4 == 0) {
                const int64_t src = rng.uniform_int(cloud.dim(0));
                for (int c = 0; c < 3; ++c) q[c] = cloud[3 * src + c];
            } else {
                for (int c = 0; c < 3; ++c)
                    q[c] = t % 4 == 1 ? std::floor(rng.uniform(0, 3.0))
                                      : rng.uniform(-1.5, 1.5);
            }
            int64_t bi;
            double bd2;
            brute_nearest(cloud, q, bi, bd2);
            CHECK(tree.nearest(q) == bi);
            CHECK(tree.nearest_dist2(q) == bd2);
        }
    }
}

TEST_CASE("chamfer: hand examples and brute-force agreement") {
    Array a({1, 3}, {0, 0, 0});
    Array b({1, 3}, {1, 0, 0});
    CHECK(chamfer(a, a, ChamferKind::l1) == 0.0);
    CHECK(chamfer(a, b, ChamferKind::l1) == doctest::Approx(1.0));
    CHECK(chamfer(a, b, ChamferKind::squared) == doctest::Approx(1.0));

    // two points at 3 and 4: squared averages 9+16, l1 averages 3+4
    Array c({2, 3}, {3, 0, 0, 0, 4, 0});
    Array o({2, 3}, {0, 0, 0, 0, 0, 0});
    CHECK(chamfer(c, o, ChamferKind::l1) == doctest::Approx(0.5 * (3.5 + 3.0)));
    CHECK(chamfer(c, o, ChamferKind::squared) == doctest::Approx(0.5 * (12.5 + 9.0)));

    Rng rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        Array p1 = rand_cloud(rng, 64);
        Array p2 = rand_cloud(rng, 48);
        CHECK(chamfer(p1, p2, ChamferKind::l1) == brute_chamfer(p1, p2, ChamferKind::l1));
        CHECK(chamfer(p1, p2, ChamferKind::squared) ==
              brute_chamfer(p1, p2, ChamferKind::squared));
    }
    CHECK_THROWS_AS(chamfer(Array({0, 3}), a, ChamferKind::l1), TensorError);
}

TEST_CASE("icp: identity source stays put") {
    Rng rng(13);
    Array pts = rand_cloud(rng, 128);
    IcpResult r = icp_align(pts, pts, 10);
    CHECK(r.pre == 0.0);
    CHECK(r.post == 0.0);
    for (int c = 0; c < 3; ++c) {
        CHECK(r.params.trans[c] == 0.0);
        CHECK(r.params.scale[c] == 1.0);
    }
}

TEST_CASE("icp: recovers moderate rigid-plus-scale transforms") {
    Rng rng(14);
    TriMesh shape = make_ellipsoid(2, {1.0, 0.7, 0.7}, 0.4);
    for (int trial = 0; trial < 5; ++trial) {
        Array src = sample_surface(shape, 512, rng);
        double axis[3] = {rng.normal(), rng.normal(), rng.normal()};
        const double angle = rng.uniform(0.0, 30.0 * kPi / 180.0);
        Array rot = axis_angle_rotation(axis, angle);
        double scale[3], trans[3];
        for (int c = 0; c < 3; ++c) {
            scale[c] = rng.uniform(0.7, 1.3);
            trans[c] = rng.uniform(-0.2, 0.2);
        }
        Array dst = apply_transform(src, rot, scale, trans);
        IcpResult r = icp_align(src, dst, 100);
        CHECK(r.post <= r.pre);
        CHECK(r.post < 1e-3);
        CHECK(det3(r.params.rotation()) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("icp: never worse than identity on unrelated clouds") {
    Rng rng(15);
    for (int trial = 0; trial < 3; ++trial) {
        Array p1 = rand_cloud(rng, 96);
        Array p2 = rand_cloud(rng, 80, -0.5, 1.5);
        IcpResult r = icp_align(p1, p2, 40);
        CHECK(r.post <= r.pre);
        CHECK(r.aligned.dim(0) == 96);
        CHECK(r.aligned.dim(1) == 3);
    }
}

TEST_CASE("icp: anisotropic scale survives normalization and gets fixed") {
    Rng rng(16);
    TriMesh flat = normalize_mesh(make_ellipsoid(2, {1.0, 0.7, 0.7}, 0.4));
    TriMesh round = normalize_mesh(make_icosphere(2));
    Array src = sample_surface(round, 1024, rng);
    Array dst = sample_surface(flat, 1024, rng);
    const double pre = chamfer(src, dst, ChamferKind::l1);
    CHECK(pre > 0.02);
    IcpResult r = icp_align(src, dst, 100);
    const double post = chamfer(r.aligned, dst, ChamferKind::l1);
    CHECK(post < 0.5 * pre);
    // the recovered per-axis scale should squash y and z, not x
    CHECK(r.params.scale[0] == doctest::Approx(1.0).epsilon(0.15));
    CHECK(r.params.scale[1] < 0.9);
    CHECK(r.params.scale[2] < 0.9);
}

TEST_CASE("mask iou: binarization and edge cases") {
    Array a({2, 2}, {1.0, 1.0, 0.0, 0.0});
    Array b({2, 2}, {1.0, 0.0, 1.0, 0.0});
    CHECK(mask_iou_eval(a, a) == 1.0);
    CHECK(mask_iou_eval(a, b) == doctest::Approx(1.0 / 3.0));
    CHECK(mask_iou_eval(a, Array({2, 2}, 0.0)) == 0.0);
    CHECK(mask_iou_eval(Array({2, 2}, 0.0), Array({2, 2}, 0.0)) == 1.0);
    // threshold decides who counts as occupied
    Array soft({1, 2}, {0.6, 0.4});
    Array hard({1, 2}, {1.0, 1.0});
    CHECK(mask_iou_eval(soft, hard, 0.5) == doctest::Approx(0.5));
    CHECK(mask_iou_eval(soft, hard, 0.3) == 1.0);
    CHECK_THROWS_AS(mask_iou_eval(a, Array({4, 1})), TensorError);
}

TEST_CASE("report: jsonl round trip and summary") {
    std::vector<EvalRecord> recs(2);
    recs[0].id = "inst_000";
    recs[0].pre_chamfer_l1 = 0.25;
    recs[0].post_chamfer_l1 = 0.0625;
    recs[0].post_chamfer_l2 = 0.004;
    recs[0].iou = 0.91;
    recs[0].align.trans = Array({3}, {0.1, -0.2, 0.3});
    recs[0].align.scale = Array({3}, {1.1, 0.9, 1.0});
    recs[0].points = 2048;
    recs[0].icp_iters = 100;
    recs[1].id = "inst_001";
    recs[1].pre_chamfer_l1 = 1.0 / 3.0;
    recs[1].post_chamfer_l1 = 0.125;
    recs[1].iou = -1.0;

    const std::string path = "/tmp/softmesh_report_test.jsonl";
    write_report(path, recs);
    std::vector<EvalRecord> back = read_report(path);
    REQUIRE(back.size() == 2);
    for (size_t i = 0; i < 2; ++i) {
        CHECK(back[i].id == recs[i].id);
        CHECK(back[i].pre_chamfer_l1 == recs[i].pre_chamfer_l1);
        CHECK(back[i].post_chamfer_l1 == recs[i].post_chamfer_l1);
        CHECK(back[i].post_chamfer_l2 == recs[i].post_chamfer_l2);
        CHECK(back[i].iou == recs[i].iou);
        for (int c = 0; c < 3; ++c)
            CHECK(back[i].align.trans[c] == recs[i].align.trans[c]);
    }
    CHECK(back[0].points == 2048);

    std::ostringstream os;
    print_summary(os, back);
    CHECK(os.str().find("instances: 2") != std::string::npos);
    CHECK(os.str().find("mask iou") != std::string::npos);

    CHECK_THROWS_AS(read_report("/tmp/softmesh_no_such_report.jsonl"), TensorError);
    std::remove(path.c_str());
}
