#include "softmesh/scene_model.hpp"

#include <cmath>

namespace softmesh {

namespace {

constexpr double kPi = 3.14159265358979323846;

double rad(double deg) { return deg * kPi / 180.0; }

// y = center + half * tanh(raw), elementwise
Var ranged(Var raw, double center, double half) {
    return add(mul(tanh(raw), half), center);
}

Var softmax1d(Var logits) {
    double mx = logits.value()[0];
    for (int64_t i = 1; i < logits.value().size(); ++i)
        mx = std::max(mx, logits.value()[i]);
    Var e = exp(add(logits, -mx));
    return div(e, broadcast_to(reshape(sum(e), {1}), e.shape()));
}

int upsample_steps(int size) {
    int n = 0;
    int s = 4;
    while (s < size) {
        s *= 2;
        ++n;
    }
    if (s != size)
        throw TensorError("generator size must be 4*2^n, got " + std::to_string(size));
    return n;
}

int64_t gen_channels(int block) { return std::max<int64_t>(8, 64 >> block); }

}  // namespace

PoseRanges PoseRanges::synthetic() { return PoseRanges{}; }

PoseRanges PoseRanges::real() {
    PoseRanges r;
    r.scale_half = 0.3;
    r.txy_half = 0.3;
    r.tz_half = 0.3;
    r.elev_center_deg = 10.0;
    r.elev_half_deg = 20.0;
    r.roll_half_deg = 30.0;
    return r;
}

Var mask_code(Var code, int active_dims) {
    const int64_t full = code.dim(0);
    if (active_dims >= full) return code;
    Array m({full});
    for (int64_t i = 0; i < active_dims; ++i) m[i] = 1.0;
    return mul(code, code.tape->constant(std::move(m)));
}

SceneModel::SceneModel(const ModelConfig& cfg)
    : cfg_(cfg), base_(make_ellipsoid(cfg.mesh_subdiv, {1.0, 0.7, 0.7}, 0.4)) {
    neighbors_ = softmesh::vertex_neighbors(base_.faces, base_.num_vertices());
    edges_ = build_edges(base_);
    camera = cfg_.fov_camera ? Camera::from_fov_deg(30.0) : Camera::from_focal(3.732);
    schedule_.enabled = cfg_.progressive;

    Rng rng(cfg_.seed);
    if (cfg_.auto_decoder) {
        if (cfg_.n_images <= 0)
            throw TensorError("auto-decoder mode needs n_images > 0");
        const int64_t n = cfg_.n_images;
        const int64_t rows = cfg_.shared_latents ? 1 : n;
        store_.add("lat.sh", Array({rows, cfg_.max_sh}, 0.0), "shape");
        store_.add("lat.tx", Array({rows, cfg_.max_tx}, 0.0), "texture");
        store_.add("lat.bg", Array({rows, cfg_.max_bg}, 0.0), "background");
        store_.add("lat.scale", Array({rows, 3}, 0.0), "scale");
        Array praw({n, static_cast<int64_t>(cfg_.K) * 7});
        for (int64_t i = 0; i < praw.size(); ++i) praw[i] = rng.normal(0.0, 0.01);
        store_.add("lat.pose", std::move(praw), "pose");
    } else {
        const int64_t chans[5] = {3, 32, 64, 128, 256};
        for (int i = 0; i < 4; ++i)
            enc_convs_.emplace_back(store_, "enc.c" + std::to_string(i), chans[i],
                                    chans[i + 1], 3, 2, 1, "backbone", rng);
        head_sh_ = MLP(store_, "head.sh", 256, 128, 3, cfg_.max_sh, "shape", rng, true);
        head_tx_ = MLP(store_, "head.tx", 256, 128, 3, cfg_.max_tx, "texture", rng, true);
        head_bg_ = MLP(store_, "head.bg", 256, 128, 3, cfg_.max_bg, "background", rng, true);
        head_scale_ = MLP(store_, "head.scale", 256, 128, 3, 3, "scale", rng);
        head_pose_ = MLP(store_, "head.pose", 256, 128, 3, cfg_.K * 7, "pose", rng);
    }

    deform_net_ = MLP(store_, "deform", 3 + cfg_.max_sh, cfg_.deform_hidden, 3, 3, "shape",
                      rng, true);

    tex_up_ = upsample_steps(cfg_.tex_size);
    tex_seed_ = Linear(store_, "tex.seed", cfg_.max_tx, 4 * 4 * 64, "texture", rng);
    for (int i = 0; i < tex_up_; ++i)
        tex_convs_.emplace_back(store_, "tex.c" + std::to_string(i), gen_channels(i),
                                gen_channels(i + 1), 3, 1, 1, "texture", rng);
    tex_convs_.emplace_back(store_, "tex.out", gen_channels(tex_up_), 3, 3, 1, 1, "texture",
                            rng);

    if (cfg_.learn_background) {
        bg_up_ = upsample_steps(cfg_.image_size);
        bg_seed_ = Linear(store_, "bg.seed", cfg_.max_bg, 4 * 4 * 64, "background", rng);
        for (int i = 0; i < bg_up_; ++i)
            bg_convs_.emplace_back(store_, "bg.c" + std::to_string(i), gen_channels(i),
                                   gen_channels(i + 1), 3, 1, 1, "background", rng);
        bg_convs_.emplace_back(store_, "bg.out", gen_channels(bg_up_), 3, 3, 1, 1,
                               "background", rng);
    }
}

Var SceneModel::encoder_features(Tape& tape, const Array& image) {
    if (image.rank() != 3 || image.dim(0) != cfg_.image_size ||
        image.dim(1) != cfg_.image_size || image.dim(2) != 3)
        throw TensorError("encode: expected [" + std::to_string(cfg_.image_size) + "," +
                          std::to_string(cfg_.image_size) + ",3] image, got " +
                          shape_str(image.shape()));
    Var x = chw_from_hwc(tape.constant(image));
    for (const Conv& c : enc_convs_) x = leaky_relu(c(store_, x), 0.2);
    return mean(mean(x, 2), 1);  // global average pool -> [256]
}

PoseSet SceneModel::decode_pose(Tape& tape, Var raw) {
    const int K = cfg_.K;
    Var raw6 = reshape(slice(raw, 0, 0, K * 6), {K, 6});
    auto col = [&](int c) { return reshape(slice(raw6, 1, c, 1), {K}); };

    Array base_az({K});
    for (int k = 0; k < K; ++k) base_az[k] = 2.0 * kPi * k / K;
    const PoseRanges& r = cfg_.ranges;

    PoseSet ps;
    ps.azim = add(mul(tanh(col(0)), kPi / K), tape.constant(std::move(base_az)));
    ps.elev = ranged(col(1), rad(r.elev_center_deg), rad(r.elev_half_deg));
    ps.roll = ranged(col(2), rad(r.roll_center_deg), rad(r.roll_half_deg));
    Var tx = ranged(col(3), 0.0, r.txy_half);
    Var ty = ranged(col(4), 0.0, r.txy_half);
    Var tz = ranged(col(5), r.tz_center, r.tz_half);
    ps.trans = concat({reshape(tx, {K, 1}), reshape(ty, {K, 1}), reshape(tz, {K, 1})}, 1);
    ps.logits = slice(raw, 0, K * 6, K);
    ps.probs = softmax1d(ps.logits);
    const Array& pv = ps.probs.value();
    ps.argmax = 0;
    for (int k = 1; k < K; ++k)
        if (pv[k] > pv[ps.argmax]) ps.argmax = k;
    return ps;
}

Encoded SceneModel::encode(Tape& tape, const Array& image, int index) {
    Encoded enc;
    Var raw_scale, raw_pose;
    if (cfg_.auto_decoder) {
        if (index < 0 || index >= cfg_.n_images)
            throw TensorError("encode: auto-decoder index " + std::to_string(index) +
                              " out of range [0," + std::to_string(cfg_.n_images) + ")");
        const std::vector<int64_t> row = {cfg_.shared_latents ? 0 : index};
        const std::vector<int64_t> pose_row = {index};
        auto take = [&](const char* name, int64_t d, const std::vector<int64_t>& r) {
            return reshape(gather_rows(store_.var(name), r), {d});
        };
        enc.z_sh = take("lat.sh", cfg_.max_sh, row);
        enc.z_tx = take("lat.tx", cfg_.max_tx, row);
        enc.z_bg = take("lat.bg", cfg_.max_bg, row);
        raw_scale = take("lat.scale", 3, row);
        raw_pose = take("lat.pose", static_cast<int64_t>(cfg_.K) * 7, pose_row);
    } else {
        Var f = encoder_features(tape, image);
        enc.z_sh = head_sh_(store_, f);
        enc.z_tx = head_tx_(store_, f);
        enc.z_bg = head_bg_(store_, f);
        raw_scale = head_scale_(store_, f);
        raw_pose = head_pose_(store_, f);
    }
    enc.z_sh = mask_code(enc.z_sh, schedule_.sh_dim());
    enc.z_tx = mask_code(enc.z_tx, schedule_.tx_dim());
    enc.z_bg = mask_code(enc.z_bg, schedule_.bg_dim());
    enc.scale = allow_scale
                    ? ranged(raw_scale, cfg_.ranges.scale_center, cfg_.ranges.scale_half)
                    : tape.constant(Array({3}, 1.0));
    enc.poses = decode_pose(tape, raw_pose);
    return enc;
}

Var SceneModel::deform(Tape& tape, Var z_sh) {
    Var base = tape.constant(base_.vertices);
    if (!allow_deform) return base;
    const int64_t v = base_.num_vertices();
    Var code = broadcast_to(reshape(z_sh, {1, z_sh.dim(0)}), {v, z_sh.dim(0)});
    Var disp = deform_net_(store_, concat({base, code}, 1));
    return add(base, disp);
}

Var SceneModel::generator(Tape& tape, Var code, const Linear& seed,
                          const std::vector<Conv>& convs, int n_up) {
    (void)tape;
    Var x = reshape(seed(store_, code), {64, 4, 4});
    for (int i = 0; i < n_up; ++i)
        x = leaky_relu(convs[static_cast<size_t>(i)](store_, upsample2x(x)), 0.2);
    x = sigmoid(convs.back()(store_, x));
    return hwc_from_chw(x);
}

Var SceneModel::texture(Tape& tape, Var z_tx) {
    return generator(tape, z_tx, tex_seed_, tex_convs_, tex_up_);
}

Var SceneModel::background(Tape& tape, Var z_bg) {
    if (!cfg_.learn_background)
        return tape.constant(
            Array({cfg_.image_size, cfg_.image_size, 3}, 1.0));
    return generator(tape, z_bg, bg_seed_, bg_convs_, bg_up_);
}

CandidatePose SceneModel::candidate(const PoseSet& poses, int k) const {
    if (k < 0 || k >= cfg_.K)
        throw TensorError("candidate index " + std::to_string(k) + " out of range");
    CandidatePose cp;
    auto at = [&](Var v) { return reshape(slice(v, 0, k, 1), Shape{}); };
    cp.rotation = euler_rotation(at(poses.azim), at(poses.elev), at(poses.roll));
    cp.trans = reshape(slice(poses.trans, 0, k, 1), {3});
    return cp;
}

Var SceneModel::pose_vertices(Var verts, const Encoded& enc, int k) const {
    CandidatePose cp = candidate(enc.poses, k);
    return apply_pose(verts, cp.rotation, enc.scale, cp.trans);
}

RenderOut SceneModel::render(Var posed_verts, Var tex, Var bg, const RasterParams& rp) const {
    return render_mesh(posed_verts, base_.faces, base_.uv, tex, bg, camera, rp);
}

}  // namespace softmesh
