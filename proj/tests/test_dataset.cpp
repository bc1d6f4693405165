#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "softmesh/config.hpp"
#include "softmesh/dataset.hpp"
#include "softmesh/evaluation.hpp"
#include "softmesh/rasterizer.hpp"
#include "softmesh/synthetic.hpp"

using namespace softmesh;

namespace {

SyntheticSpec tiny_spec() {
    SyntheticSpec spec;
    spec.n_instances = 1;
    spec.n_views = 4;
    spec.image_size = 32;
    spec.subdiv = 1;
    spec.seed = 7;
    return spec;
}

double quantized(double v) {
    return std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5) / 255.0;
}

void remove_tree(const std::string& dir) {
    std::string cmd = "rm -rf '" + dir + "'";
    (void)std::system(cmd.c_str());
}

}  // namespace

TEST_CASE("synthetic: azimuth spacing and seed determinism") {
    SyntheticSpec spec = tiny_spec();
    spec.n_views = 24;
    Dataset ds = generate_synthetic(spec);
    REQUIRE(ds.size() == 24);
    for (int64_t i = 0; i < ds.size(); ++i)
        CHECK(ds.ground_truth(i).azimuth_deg == doctest::Approx(15.0 * i));

    Dataset again = generate_synthetic(spec);
    for (int64_t i = 0; i < ds.size(); ++i)
        for (int64_t p = 0; p < ds.image(i).size(); ++p)
            if (ds.image(i)[p] != again.image(i)[p]) {
                REQUIRE(false);
            }
    CHECK(ds.image(0).dim(0) == 32);
}

TEST_CASE("synthetic: mask matches the hard inside-test oracle") {
    SyntheticSpec spec = tiny_spec();
    spec.n_views = 2;
    Dataset ds = generate_synthetic(spec);
    const TriMesh& mesh = ds.gt_mesh(ds.ground_truth(0).mesh_id);
    const GtRecord& gt = ds.ground_truth(0);
    TriMesh posed = pose_mesh(mesh, gt.azimuth_deg, gt.elevation_deg, gt.roll_deg,
                              gt.scale, gt.translation);

    Tape tape;
    auto [ndc_v, depth_v] = project(Camera::from_focal(3.732), tape.constant(posed.vertices));
    const Array ndc = ndc_v.value();

    const int s = spec.image_size;
    Array oracle({s, s});
    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
            const double px = (2.0 * x + 1.0) / s - 1.0;
            const double py = 1.0 - (2.0 * y + 1.0) / s;
            double inside = 0.0;
            for (const auto& f : posed.faces) {
                const double nu = signed_distance(px, py, ndc.data() + 2 * f[0],
                                                  ndc.data() + 2 * f[1],
                                                  ndc.data() + 2 * f[2]);
                if (nu >= 0.0) {
                    inside = 1.0;
                    break;
                }
            }
            oracle[static_cast<int64_t>(y) * s + x] = inside;
        }
    CHECK(mask_iou_eval(gt.mask, oracle) == 1.0);
    // object fully visible: a sane fixture has a non-trivial silhouette
    double area = 0.0;
    for (int64_t p = 0; p < gt.mask.size(); ++p) area += gt.mask[p];
    CHECK(area > 40.0);
    CHECK(area < 0.9 * s * s);
}

TEST_CASE("dataset: save/load round trip with and without ground truth") {
    const std::string dir = "/tmp/softmesh_ds_test";
    remove_tree(dir);
    SyntheticSpec spec = tiny_spec();
    Dataset ds = generate_synthetic(spec);
    ds.save(dir);

    Dataset plain = Dataset::load(dir, false);
    REQUIRE(plain.size() == ds.size());
    CHECK_FALSE(plain.has_ground_truth());
    CHECK_THROWS_AS(plain.ground_truth(0), TensorError);
    for (int64_t i = 0; i < ds.size(); ++i) {
        CHECK(plain.id(i) == ds.id(i));
        for (int64_t p = 0; p < ds.image(i).size(); ++p)
            CHECK(plain.image(i)[p] == quantized(ds.image(i)[p]));
    }

    Dataset full = Dataset::load(dir, true);
    REQUIRE(full.has_ground_truth());
    const GtRecord& gt = full.ground_truth(1);
    CHECK(gt.mesh_id == "mesh_000");
    CHECK(gt.azimuth_deg == doctest::Approx(90.0));
    CHECK(gt.translation[2] == doctest::Approx(2.732));
    CHECK(full.gt_mesh("mesh_000").num_faces() == ds.gt_mesh("mesh_000").num_faces());
    for (int64_t p = 0; p < gt.mask.size(); ++p)
        CHECK(gt.mask[p] == ds.ground_truth(1).mask[p]);
    remove_tree(dir);
}

TEST_CASE("dataset: poisoned ground truth never reaches the training path") {
    const std::string dir = "/tmp/softmesh_ds_poison";
    remove_tree(dir);
    Dataset ds = generate_synthetic(tiny_spec());
    ds.save(dir);
    {
        std::ofstream gt(dir + "/gt/gt.txt", std::ios::trunc);
        gt << "garbage that nobody should parse\n";
    }
    Dataset plain = Dataset::load(dir, false);
    for (int64_t i = 0; i < ds.size(); ++i)
        for (int64_t p = 0; p < ds.image(i).size(); ++p)
            CHECK(plain.image(i)[p] == quantized(ds.image(i)[p]));
    CHECK_THROWS_AS(Dataset::load(dir, true), TensorError);
    remove_tree(dir);
}

TEST_CASE("config: presets carry the published defaults") {
    RunConfig desk = RunConfig::from_preset("desk");
    CHECK(desk.train.batch_size == 32);
    CHECK(desk.train.lr == 1e-4);
    CHECK(desk.train.lr_final_div == 5.0);
    CHECK(desk.train.texture_avg_p == 0.2);
    CHECK(desk.train.stage_iters[0] == 1000);
    CHECK(desk.train.stage_iters[3] == 3000);
    CHECK(desk.train.weights.reg == 0.01);
    CHECK(desk.train.weights.perc == 10.0);
    CHECK(desk.train.weights.uni == 0.02);
    CHECK(desk.model.K == 6);
    CHECK(desk.model.ranges.tz_center == doctest::Approx(2.732));
    CHECK(desk.model.ranges.elev_center_deg == 30.0);
    CHECK(desk.data.n_views == 24);

    RunConfig synth = RunConfig::from_preset("synthetic");
    CHECK(synth.train.stage_iters == std::array<int, 4>{50000, 250000, 250000, 250000});
    CHECK_FALSE(synth.model.learn_background);

    RunConfig real = RunConfig::from_preset("real");
    CHECK(real.train.stage_iters[0] == 750000);
    CHECK(real.model.ranges.roll_half_deg == doctest::Approx(30.0));
    CHECK_FALSE(real.train.texture_avg_last_stage);

    CHECK_THROWS_AS(RunConfig::from_preset("bogus"), TensorError);
}

TEST_CASE("config: serialize/parse round trip and rejection of bad input") {
    RunConfig c = RunConfig::from_preset("desk");
    c.model.K = 4;
    c.train.lr = 3.5e-5;
    c.data.family = SceneFamily::two_box;
    c.out_dir = "/tmp/somewhere";

    std::ostringstream os;
    serialize_config(os, c);
    std::istringstream is(os.str());
    RunConfig back = parse_config(is, RunConfig::from_preset("desk"));
    std::ostringstream os2;
    serialize_config(os2, back);
    CHECK(os.str() == os2.str());
    CHECK(back.model.K == 4);
    CHECK(back.train.lr == 3.5e-5);
    CHECK(back.train.out_dir == "/tmp/somewhere");

    std::istringstream bad1("[model]\nnot_a_key = 3\n");
    CHECK_THROWS_AS(parse_config(bad1, RunConfig::from_preset("desk")), TensorError);
    std::istringstream bad2("[model]\nk = banana\n");
    CHECK_THROWS_AS(parse_config(bad2, RunConfig::from_preset("desk")), TensorError);
    std::istringstream bad3("k = 3\n");  // key before any section
    CHECK_THROWS_AS(parse_config(bad3, RunConfig::from_preset("desk")), TensorError);

    RunConfig ov = RunConfig::from_preset("desk");
    apply_override(ov, "train.lr=0.5");
    CHECK(ov.train.lr == 0.5);
    CHECK_THROWS_AS(apply_override(ov, "train.lr"), TensorError);
    CHECK_THROWS_AS(apply_override(ov, "nope.lr=1"), TensorError);
}
