#include "softmesh/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "softmesh/checkpoint.hpp"
#include "softmesh/image.hpp"

namespace softmesh {

std::string format_metrics(const StepMetrics& m) {
    std::ostringstream os;
    os.precision(17);
    os << "iter=" << m.iter << " stage=" << m.stage << " parity=" << m.parity
       << " loss=" << m.loss << " rec=" << m.rec << " pix=" << m.pix
       << " nbr=" << m.nbr << " reg=" << m.reg << " uni=" << m.uni
       << " sigma=" << m.sigma << " lr=" << m.lr << " skips=" << m.nbr_skips
       << " degen=" << m.degenerate_faces << " pbar=";
    for (size_t k = 0; k < m.pbar.size(); ++k) {
        if (k) os << ",";
        os << m.pbar[k];
    }
    return os.str();
}

Var average_texture(Var tex) {
    if (tex.rank() != 3)
        throw TensorError("average_texture: expected [H,W,3], got " +
                          shape_str(tex.value().shape()));
    Var m = mean(mean(tex, 0), 0);
    return broadcast_to(reshape(m, {1, 1, tex.dim(2)}), tex.value().shape());
}

Var maybe_average_texture(Var tex, Rng& rng, double p) {
    if (p < 0.0 || p > 1.0)
        throw TensorError("maybe_average_texture: p must lie in [0,1]");
    return rng.uniform() < p ? average_texture(tex) : tex;
}

Trainer::Trainer(SceneModel& model, std::vector<Array> images, const TrainConfig& cfg)
    : model_(model),
      images_(std::move(images)),
      cfg_(cfg),
      opt_(AdamConfig{cfg.lr}),
      bank_(static_cast<size_t>(cfg.bank_capacity)),
      rng_(cfg.seed) {
    if (images_.empty()) throw TensorError("trainer: empty image set");
    for (int s = 0; s < 4; ++s)
        if (cfg_.stage_iters[static_cast<size_t>(s)] <= 0)
            throw TensorError("trainer: stage budgets must be positive");
    if (cfg_.texture_avg_p < 0.0 || cfg_.texture_avg_p > 1.0)
        throw TensorError("trainer: texture_avg_p must lie in [0,1]");
    if (model_.config().auto_decoder &&
        model_.config().n_images != static_cast<int>(images_.size()))
        throw TensorError("trainer: auto-decoder latent table expects " +
                          std::to_string(model_.config().n_images) + " images, got " +
                          std::to_string(images_.size()));
    cfg_.batch_size = std::min<int>(cfg_.batch_size, static_cast<int>(images_.size()));
}

int Trainer::stage() const { return model_.schedule().stage; }

RasterParams Trainer::raster_params() const {
    RasterParams rp;
    rp.height = rp.width = model_.config().image_size;
    rp.sigma = cfg_.sigma[static_cast<size_t>(stage() - 1)];
    rp.max_layers = cfg_.max_layers;
    rp.mode = CompositeMode::layered;
    return rp;
}

double Trainer::current_lr() const {
    const int total = cfg_.total_iters();
    const int tail = static_cast<int>(std::llround(total * cfg_.lr_tail_fraction));
    if (iter_ >= total - tail) return cfg_.lr / cfg_.lr_final_div;
    return cfg_.lr;
}

void Trainer::apply_curriculum() {
    if (model_.schedule().enabled && stage() == 1) {
        const double frac =
            static_cast<double>(iter_) / cfg_.stage_iters[0];
        model_.allow_deform = frac >= cfg_.stage1_deform_at;
        model_.allow_scale = frac >= cfg_.stage1_scale_at;
    } else {
        model_.allow_deform = true;
        model_.allow_scale = true;
    }
}

std::vector<int> Trainer::next_batch() {
    std::vector<int> batch;
    batch.reserve(static_cast<size_t>(cfg_.batch_size));
    while (static_cast<int>(batch.size()) < cfg_.batch_size) {
        if (order_pos_ >= order_.size()) {
            order_.resize(images_.size());
            for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
            rng_.shuffle(order_);
            order_pos_ = 0;
        }
        batch.push_back(order_[order_pos_++]);
    }
    return batch;
}

Var Trainer::texture_policy(Var tex) {
    if (cfg_.average_texture_stage1 && stage() == 1 && model_.schedule().enabled)
        return average_texture(tex);
    if (stage() == 4 && !cfg_.texture_avg_last_stage) return tex;
    return maybe_average_texture(tex, rng_, cfg_.texture_avg_p);
}

Var Trainer::render_with(Tape& tape, const Encoded& enc, Var verts, Var tex, Var bg,
                         int k, const RasterParams& rp, int* degenerate) {
    (void)tape;
    Var posed = model_.pose_vertices(verts, enc, k);
    RenderOut out = model_.render(posed, tex, bg, rp);
    if (degenerate) *degenerate += out.degenerate_faces;
    return out.image;
}

Var Trainer::neighbor_term(Tape& tape, const Encoded& enc, CodeSpace space,
                           const RasterParams& rp, bool* skipped) {
    *skipped = true;
    Var zero = tape.constant(Array(Shape{}, 0.0));
    if (bank_.size() == 0) return zero;
    const Array my_rot = model_.candidate(enc.poses, enc.poses.argmax).rotation.value();
    const Array& code = space == CodeSpace::texture ? enc.z_tx.value() : enc.z_sh.value();
    MemoryBank::Selection sel = bank_.select(code, my_rot, space, rng_);
    if (!sel.ok) return zero;
    *skipped = false;

    const BankEntry& e = bank_.entry(static_cast<size_t>(sel.index));
    Encoded nb = model_.encode(tape, e.image, e.image_index);
    Var verts = space == CodeSpace::shape ? model_.deform(tape, enc.z_sh)
                                          : model_.deform(tape, nb.z_sh);
    Var tex = space == CodeSpace::texture ? model_.texture(tape, enc.z_tx)
                                          : model_.texture(tape, nb.z_tx);
    Var bg = model_.background(tape, nb.z_bg);
    Var image = render_with(tape, nb, verts, tex, bg, nb.poses.argmax, rp, nullptr);
    return rec_loss(features_, image, tape.constant(e.image), cfg_.weights.perc);
}

Trainer::ImageLoss Trainer::image_loss_3d(Tape& tape, int idx, const RasterParams& rp) {
    ImageLoss il;
    Encoded enc = model_.encode(tape, images_[static_cast<size_t>(idx)], idx);
    Var verts = model_.deform(tape, enc.z_sh);
    Var tex = texture_policy(model_.texture(tape, enc.z_tx));
    Var bg = model_.background(tape, enc.z_bg);
    Var image = render_with(tape, enc, verts, tex, bg, enc.poses.argmax, rp,
                            &il.degenerate);
    Var target = tape.constant(images_[static_cast<size_t>(idx)]);
    il.pix = pixel_loss(image, target);
    il.rec = add(il.pix, mul(perceptual_loss(features_, image, target),
                             cfg_.weights.perc));
    il.reg = regularization_loss(verts, model_.base_mesh().faces, model_.edges(),
                                 model_.vertex_neighbors());

    Var nbr = tape.constant(Array(Shape{}, 0.0));
    if (stage() >= cfg_.neighbor_from_stage && cfg_.weights.nbr > 0.0) {
        bool skip_t = false, skip_s = false;
        nbr = add(nbr, neighbor_term(tape, enc, CodeSpace::texture, rp, &skip_t));
        nbr = add(nbr, neighbor_term(tape, enc, CodeSpace::shape, rp, &skip_s));
        il.nbr_skips = static_cast<int>(skip_t) + static_cast<int>(skip_s);
    }
    il.nbr = nbr;
    il.probs = enc.poses.probs;

    BankEntry be;
    be.image_index = idx;
    be.image = images_[static_cast<size_t>(idx)];
    be.z_sh = enc.z_sh.value();
    be.z_tx = enc.z_tx.value();
    be.rotation = model_.candidate(enc.poses, enc.poses.argmax).rotation.value();
    bank_.push(std::move(be));
    return il;
}

StepMetrics Trainer::step() {
    StepMetrics m;
    m.iter = iter_;
    m.stage = stage();
    m.parity = next_parity();
    m.lr = current_lr();
    apply_curriculum();
    const RasterParams rp = raster_params();
    m.sigma = rp.sigma;
    const std::vector<int> batch = next_batch();
    const double bs = static_cast<double>(batch.size());

    Tape tape;
    model_.bind(tape);
    Var total = tape.constant(Array(Shape{}, 0.0));

    if (m.parity == '3') {
        Var rec = tape.constant(Array(Shape{}, 0.0));
        Var pix = rec, nbr = rec, reg = rec;
        for (int idx : batch) {
            ImageLoss il = image_loss_3d(tape, idx, rp);
            rec = add(rec, il.rec);
            pix = add(pix, il.pix);
            nbr = add(nbr, il.nbr);
            reg = add(reg, il.reg);
            m.nbr_skips += il.nbr_skips;
            m.degenerate_faces += il.degenerate;
        }
        total = add(add(rec, mul(nbr, cfg_.weights.nbr)), mul(reg, cfg_.weights.reg));
        total = mul(total, 1.0 / bs);
        m.rec = rec.value().item() / bs;
        m.pix = pix.value().item() / bs;
        m.nbr = nbr.value().item() / bs;
        m.reg = reg.value().item() / bs;
    } else {
        const int K = model_.config().K;
        Var expected = tape.constant(Array(Shape{}, 0.0));
        std::vector<Var> prob_rows;
        prob_rows.reserve(batch.size());
        for (int idx : batch) {
            Encoded enc = model_.encode(tape, images_[static_cast<size_t>(idx)], idx);
            Var verts = model_.deform(tape, enc.z_sh);
            Var tex = texture_policy(model_.texture(tape, enc.z_tx));
            Var bg = model_.background(tape, enc.z_bg);
            Var target = tape.constant(images_[static_cast<size_t>(idx)]);
            for (int k = 0; k < K; ++k) {
                Var image = render_with(tape, enc, verts, tex, bg, k, rp,
                                        &m.degenerate_faces);
                Var rec_k = rec_loss(features_, image, target, cfg_.weights.perc);
                Var p_k = reshape(slice(enc.poses.probs, 0, k, 1), Shape{});
                expected = add(expected, mul(p_k, rec_k));
            }
            prob_rows.push_back(reshape(enc.poses.probs, {1, K}));
        }
        expected = mul(expected, 1.0 / bs);
        Var uni = uniformity_loss(concat(prob_rows, 0));
        total = add(expected, mul(uni, cfg_.weights.uni));
        m.rec = expected.value().item();
        m.uni = uni.value().item();
        Array pbar = mean(concat(prob_rows, 0), 0).value();
        m.pbar.assign(pbar.data(), pbar.data() + pbar.size());
    }

    m.loss = total.value().item();
    if (!std::isfinite(m.loss)) {
        std::ostringstream os;
        os << "trainer: non-finite loss at iter " << iter_ << " (stage " << m.stage
           << ", parity " << m.parity << ", sigma " << m.sigma << ", batch";
        for (int idx : batch) os << " " << idx;
        os << ")";
        throw TensorError(os.str());
    }

    tape.backward(total);
    opt_.set_lr(m.lr);
    const bool p_step = m.parity == 'P';
    for (const std::string& name : model_.params().names()) {
        const bool is_pose = model_.params().branch(name) == "pose";
        if (is_pose != p_step) continue;
        opt_.step(name, model_.params().value(name), model_.params().gradient(name));
    }

    ++iter_;
    last_ = m;
    return m;
}

void Trainer::advance_stage() {
    if (stage() >= 4) {
        warned_past_final_ = true;
        return;
    }
    model_.schedule().stage += 1;
}

void Trainer::run(int n_steps, std::ostream* log) {
    for (int s = 0; s < n_steps; ++s) {
        while (stage() < 4) {
            int budget = 0;
            for (int st = 0; st < stage(); ++st)
                budget += cfg_.stage_iters[static_cast<size_t>(st)];
            if (iter_ < budget) break;
            advance_stage();
            if (log) *log << "# stage -> " << stage() << " at iter " << iter_ << "\n";
        }
        StepMetrics m = step();
        if (log && (m.iter % cfg_.log_every == 0 || s + 1 == n_steps))
            *log << format_metrics(m) << "\n";
        if (cfg_.checkpoint_every > 0 && !cfg_.out_dir.empty() &&
            iter_ % cfg_.checkpoint_every == 0) {
            save_checkpoint_dir(cfg_.out_dir + "/ckpt_" + std::to_string(iter_));
            save_snapshot(cfg_.out_dir + "/snapshot_" + std::to_string(iter_) + ".png");
        }
    }
}

void Trainer::run_all(std::ostream* log) { run(cfg_.total_iters() - iter_, log); }

RenderImages Trainer::render_current(int image_index, double sigma_override) {
    Tape tape;
    model_.bind(tape);
    RasterParams rp = raster_params();
    if (sigma_override > 0.0) rp.sigma = sigma_override;
    Encoded enc = model_.encode(tape, images_[static_cast<size_t>(image_index)],
                                image_index);
    Var verts = model_.deform(tape, enc.z_sh);
    Var tex = model_.texture(tape, enc.z_tx);
    Var bg = model_.background(tape, enc.z_bg);
    Var posed = model_.pose_vertices(verts, enc, enc.poses.argmax);
    RenderOut out = model_.render(posed, tex, bg, rp);
    return RenderImages{out.image.value(), out.mask.value()};
}

Encoded Trainer::encode_current(Tape& tape, int image_index) {
    model_.bind(tape);
    return model_.encode(tape, images_[static_cast<size_t>(image_index)], image_index);
}

TriMesh Trainer::current_mesh(int image_index) {
    Tape tape;
    model_.bind(tape);
    Encoded enc = model_.encode(tape, images_[static_cast<size_t>(image_index)],
                                image_index);
    Var verts = model_.deform(tape, enc.z_sh);
    Var scaled = mul(verts, broadcast_to(reshape(enc.scale, {1, 3}),
                                         verts.value().shape()));
    TriMesh out = model_.base_mesh();
    out.vertices = scaled.value();
    return out;
}

void Trainer::save_checkpoint_dir(const std::string& dir) const {
    save_checkpoint(dir, model_.params().state());
}

void Trainer::save_snapshot(const std::string& path, int max_images) {
    const int n = std::min<int>(max_images, static_cast<int>(images_.size()));
    const int s = model_.config().image_size;
    Array grid({2 * s, static_cast<int64_t>(n) * s, 3});
    for (int i = 0; i < n; ++i) {
        RenderImages r = render_current(i);
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x)
                for (int c = 0; c < 3; ++c) {
                    grid[(static_cast<int64_t>(y) * n * s + i * s + x) * 3 + c] =
                        r.image[(static_cast<int64_t>(y) * s + x) * 3 + c];
                    grid[((static_cast<int64_t>(y) + s) * n * s + i * s + x) * 3 + c] =
                        images_[static_cast<size_t>(i)]
                               [(static_cast<int64_t>(y) * s + x) * 3 + c];
                }
    }
    save_png(path, grid);
}

}  // namespace softmesh
