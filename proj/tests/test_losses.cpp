#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "softmesh/camera.hpp"
#include "softmesh/losses.hpp"
#include "softmesh/memory_bank.hpp"
#include "softmesh/mesh.hpp"

using namespace softmesh;
using oracles::fd_check;

namespace {

constexpr double kPi = 3.14159265358979323846;

Array rand_image(Rng& rng, int h, int w) {
    Array img({h, w, 3});
    for (int64_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();
    return img;
}

}  // namespace

TEST_CASE("pixel loss: zero on identity, one on full contrast, mismatch throws") {
    Tape t;
    Rng rng(2);
    Array a = rand_image(rng, 8, 8);
    CHECK(pixel_loss(t.constant(a), t.constant(a)).item() == 0.0);
    CHECK(pixel_loss(t.constant(Array({4, 4, 3}, 0.0)), t.constant(Array({4, 4, 3}, 1.0)))
              .item() == doctest::Approx(1.0));
    CHECK_THROWS_AS(pixel_loss(t.constant(Array({4, 4, 3})), t.constant(Array({8, 8, 3}))),
                    TensorError);
}

TEST_CASE("perceptual loss: pyramid levels, weighting, gradient check") {
    PyramidFeatures fx;
    Tape t;
    Rng rng(3);
    Array a = rand_image(rng, 16, 16);
    Array b = rand_image(rng, 16, 16);

    std::vector<Var> feats = fx.features(t.constant(a));
    REQUIRE(feats.size() == 3);
    CHECK(feats[0].shape() == Shape{3, 16, 16});
    CHECK(feats[1].shape() == Shape{3, 8, 8});
    CHECK(feats[2].shape() == Shape{3, 4, 4});
    // blur preserves a constant image exactly (kernel sums to 1)
    std::vector<Var> cf = fx.features(t.constant(Array({16, 16, 3}, 0.25)));
    for (int64_t i = 0; i < cf[2].value().size(); ++i)
        CHECK(cf[2].value()[i] == doctest::Approx(0.25).epsilon(1e-12));

    CHECK(perceptual_loss(fx, t.constant(a), t.constant(a)).item() == 0.0);
    const double perc = perceptual_loss(fx, t.constant(a), t.constant(b)).item();
    const double pix = pixel_loss(t.constant(a), t.constant(b)).item();
    CHECK(perc > 0.0);
    CHECK(rec_loss(fx, t.constant(a), t.constant(b), 10.0).item() ==
          doctest::Approx(pix + 10.0 * perc).epsilon(1e-12));

    auto rep = fd_check({a}, [&](Tape& tape, std::vector<Var>& vars) {
        return rec_loss(fx, vars[0], tape.constant(b), 10.0);
    });
    INFO(rep.where);
    CHECK(rep.max_rel < 1e-5);
}

TEST_CASE("uniformity loss: zero at uniform, 5/3 at one-hot collapse, symmetric") {
    Tape t;
    const int B = 4, K = 6;
    Array uni({B, K}, 1.0 / K);
    CHECK(uniformity_loss(t.constant(uni)).item() == doctest::Approx(0.0));

    Array hot({B, K}, 0.0);
    for (int i = 0; i < B; ++i) hot[i * K] = 1.0;
    CHECK(uniformity_loss(t.constant(hot)).item() == doctest::Approx(5.0 / 3.0));

    Rng rng(5);
    Array p({B, K});
    for (int i = 0; i < B; ++i) {
        double s = 0.0;
        for (int k = 0; k < K; ++k) s += (p[i * K + k] = rng.uniform(0.1, 1.0));
        for (int k = 0; k < K; ++k) p[i * K + k] /= s;
    }
    const double base = uniformity_loss(t.constant(p)).item();
    Array perm({B, K});
    for (int i = 0; i < B; ++i)
        for (int k = 0; k < K; ++k) perm[i * K + k] = p[i * K + (k + 2) % K];
    CHECK(uniformity_loss(t.constant(perm)).item() == doctest::Approx(base).epsilon(1e-12));
    CHECK(base <= 2.0 * (K - 1) / K);
}

TEST_CASE("regularization loss: positive on a rough mesh, differentiable") {
    TriMesh mesh = make_icosphere(1);
    Rng rng(7);
    Array rough = mesh.vertices;
    for (int64_t i = 0; i < rough.size(); ++i) rough[i] += rng.normal(0.0, 0.05);
    auto neighbors = vertex_neighbors(mesh.faces, mesh.num_vertices());
    auto edges = build_edges(mesh);

    Tape t;
    const double smooth =
        regularization_loss(t.constant(mesh.vertices), mesh.faces, edges, neighbors).item();
    const double noisy =
        regularization_loss(t.constant(rough), mesh.faces, edges, neighbors).item();
    CHECK(noisy > smooth);

    auto rep = fd_check({rough}, [&](Tape& tape, std::vector<Var>& vars) {
        (void)tape;
        return regularization_loss(vars[0], mesh.faces, edges, neighbors);
    });
    INFO(rep.where);
    CHECK(rep.max_rel < 1e-4);
}

TEST_CASE("geodesic angle: recovers the rotation angle about any axis") {
    auto rot = [&](double az, double el, double ro) {
        return euler_rotation_value(az, el, ro);
    };
    Array eye = rot(0, 0, 0);
    CHECK(geodesic_angle(eye, eye) == doctest::Approx(0.0));
    CHECK(geodesic_angle(eye, rot(kPi / 2, 0, 0)) == doctest::Approx(kPi / 2));
    CHECK(geodesic_angle(eye, rot(0, 0.7, 0)) == doctest::Approx(0.7));
    CHECK(geodesic_angle(eye, rot(0, 0, -1.2)) == doctest::Approx(1.2));
    CHECK(geodesic_angle(rot(0.4, 0.2, 0), rot(0.4, 0.2, 0)) == doctest::Approx(0.0));
    // symmetry
    Array a = rot(1.0, 0.3, 0.1), b = rot(-0.5, 0.1, 0.0);
    CHECK(geodesic_angle(a, b) == doctest::Approx(geodesic_angle(b, a)));
}

TEST_CASE("viewpoint bins: the [20,180] range splits into five 32 degree bins") {
    auto deg = [](double d) { return d * kPi / 180.0; };
    CHECK(angle_bin(deg(10.0)) == -1);
    CHECK(angle_bin(deg(19.9)) == -1);
    CHECK(angle_bin(deg(20.0)) == 0);
    CHECK(angle_bin(deg(50.0)) == 0);
    CHECK(angle_bin(deg(52.0)) == 1);
    CHECK(angle_bin(deg(84.0)) == 2);
    CHECK(angle_bin(deg(116.0)) == 3);
    CHECK(angle_bin(deg(148.0)) == 4);
    CHECK(angle_bin(deg(180.0)) == 4);
}

TEST_CASE("memory bank: FIFO eviction and selection against brute force") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const size_t cap = 64;
        MemoryBank bank(cap);
        const int n = 1 + static_cast<int>(rng.uniform_int(96));
        std::vector<BankEntry> all;
        for (int i = 0; i < n; ++i) {
            BankEntry e;
            e.image_index = i;
            e.z_sh = Array({8});
            e.z_tx = Array({8});
            for (int j = 0; j < 8; ++j) {
                e.z_sh[j] = rng.normal(0.0, 1.0);
                e.z_tx[j] = rng.normal(0.0, 1.0);
            }
            e.rotation = euler_rotation_value(rng.uniform(0.0, 2.0 * kPi),
                                              rng.uniform(-0.3, 0.5), 0.0);
            all.push_back(e);
            bank.push(e);
        }
        const size_t live = std::min<size_t>(cap, static_cast<size_t>(n));
        REQUIRE(bank.size() == live);
        // entries are the most recent n (FIFO)
        CHECK(bank.entry(0).image_index == n - static_cast<int>(live));

        Array probe({8});
        for (int j = 0; j < 8; ++j) probe[j] = rng.normal(0.0, 1.0);
        Array rot = euler_rotation_value(rng.uniform(0.0, 2.0 * kPi), 0.0, 0.0);
        const CodeSpace space = trial % 2 ? CodeSpace::shape : CodeSpace::texture;

        Rng fork1 = rng.split(1);
        Rng fork2 = fork1;  // replay the same bin draw in the oracle
        auto sel = bank.select(probe, rot, space, fork1);

        // brute force against the same bin draw
        std::vector<std::vector<int>> bins(5);
        for (size_t i = 0; i < bank.size(); ++i) {
            const int b = angle_bin(geodesic_angle(rot, bank.entry(i).rotation));
            if (b >= 0) bins[static_cast<size_t>(b)].push_back(static_cast<int>(i));
        }
        std::vector<int> usable;
        for (int b = 0; b < 5; ++b)
            if (!bins[static_cast<size_t>(b)].empty()) usable.push_back(b);
        if (usable.empty()) {
            CHECK_FALSE(sel.ok);
            continue;
        }
        const int b = usable[static_cast<size_t>(fork2.uniform_int(static_cast<int64_t>(usable.size())))];
        int expect = -1;
        double best = 1e300;
        for (int i : bins[static_cast<size_t>(b)]) {
            const Array& c = space == CodeSpace::shape ? bank.entry(static_cast<size_t>(i)).z_sh
                                                       : bank.entry(static_cast<size_t>(i)).z_tx;
            double d2 = 0.0;
            for (int j = 0; j < 8; ++j) d2 += (probe[j] - c[j]) * (probe[j] - c[j]);
            if (d2 < best) {
                best = d2;
                expect = i;
            }
        }
        REQUIRE(sel.ok);
        CHECK(sel.index == expect);
    }
}

TEST_CASE("memory bank: empty bank throws, out-of-range angles signal a skip") {
    MemoryBank bank(8);
    Rng rng(13);
    Array probe({4}, 0.0);
    Array eye = euler_rotation_value(0, 0, 0);
    CHECK_THROWS_AS(bank.select(probe, eye, CodeSpace::shape, rng), TensorError);

    BankEntry near_entry;
    near_entry.z_sh = Array({4}, 0.0);
    near_entry.z_tx = Array({4}, 0.0);
    near_entry.rotation = euler_rotation_value(0.05, 0.0, 0.0);  // ~3 degrees away
    bank.push(near_entry);
    auto sel = bank.select(probe, eye, CodeSpace::shape, rng);
    CHECK_FALSE(sel.ok);

    BankEntry far;
    far.z_sh = Array({4}, 1.0);
    far.z_tx = Array({4}, 1.0);
    far.rotation = euler_rotation_value(kPi / 2, 0.0, 0.0);
    bank.push(far);
    auto sel2 = bank.select(probe, eye, CodeSpace::shape, rng);
    REQUIRE(sel2.ok);
    CHECK(sel2.index == 1);
}
