#pragma once

#include <iosfwd>
#include <optional>

#include "softmesh/adam.hpp"
#include "softmesh/dataset.hpp"
#include "softmesh/losses.hpp"
#include "softmesh/memory_bank.hpp"
#include "softmesh/scene_model.hpp"

namespace softmesh {

struct TrainConfig {
    int batch_size = 32;
    double lr = 1e-4;
    double lr_final_div = 5.0;
    double lr_tail_fraction = 0.1;  // final slice of the last stage at reduced lr
    std::array<int, 4> stage_iters{1000, 3000, 3000, 3000};
    std::array<double, 4> sigma{3e-2, 1e-2, 3e-3, 1e-3};
    int max_layers = 5;
    double texture_avg_p = 0.2;
    bool average_texture_stage1 = true;
    bool texture_avg_last_stage = true;  // real preset turns the draw off in stage 4
    int neighbor_from_stage = 2;  // 1-based; above 4 disables the term
    LossWeights weights;
    double stage1_deform_at = 1.0 / 3.0;  // stage-1 curriculum, fraction of budget
    double stage1_scale_at = 2.0 / 3.0;
    int bank_capacity = 1024;
    int log_every = 50;
    int checkpoint_every = 0;  // 0: never
    std::string out_dir;
    uint64_t seed = 0;

    int total_iters() const {
        return stage_iters[0] + stage_iters[1] + stage_iters[2] + stage_iters[3];
    }
};

struct StepMetrics {
    int iter = 0;
    int stage = 1;
    char parity = '3';  // '3' for a 3D-step, 'P' for a P-step
    double loss = 0.0;
    double rec = 0.0, pix = 0.0, nbr = 0.0, reg = 0.0, uni = 0.0;
    double sigma = 0.0;
    double lr = 0.0;
    std::vector<double> pbar;  // batch-mean candidate probabilities
    int nbr_skips = 0;
    int degenerate_faces = 0;
};

std::string format_metrics(const StepMetrics& m);

// Spatial mean over H and W, broadcast back to a constant image.
Var average_texture(Var tex);
// Bernoulli(p) draw decides between averaging and identity.
Var maybe_average_texture(Var tex, Rng& rng, double p);

// Alternating 3D-step/P-step optimization over an image collection. The
// trainer never sees ground truth; evaluation happens outside.
class Trainer {
  public:
    Trainer(SceneModel& model, std::vector<Array> images, const TrainConfig& cfg);

    StepMetrics step();
    void run(int n_steps, std::ostream* log = nullptr);
    void run_all(std::ostream* log = nullptr);

    int iteration() const { return iter_; }
    char next_parity() const { return iter_ % 2 == 0 ? '3' : 'P'; }
    int stage() const;
    void advance_stage();

    SceneModel& model() { return model_; }
    Adam& optimizer() { return opt_; }
    const MemoryBank& bank() const { return bank_; }
    const TrainConfig& config() const { return cfg_; }
    const StepMetrics& last_metrics() const { return last_; }

    // argmax-candidate reconstruction of one training image at the current
    // parameters; sigma < 0 renders at the running schedule's value
    RenderImages render_current(int image_index, double sigma_override = -1.0);
    Encoded encode_current(Tape& tape, int image_index);
    TriMesh current_mesh(int image_index);

    void save_checkpoint_dir(const std::string& dir) const;
    void save_snapshot(const std::string& path, int max_images = 8);

  private:
    struct ImageLoss {
        Var rec, pix, nbr, reg;
        Var probs;  // [K]
        int nbr_skips = 0;
        int degenerate = 0;
    };

    RasterParams raster_params() const;
    double current_lr() const;
    Var texture_policy(Var tex);
    void apply_curriculum();
    std::vector<int> next_batch();
    Var render_with(Tape& tape, const Encoded& enc, Var verts, Var tex, Var bg, int k,
                    const RasterParams& rp, int* degenerate);
    ImageLoss image_loss_3d(Tape& tape, int idx, const RasterParams& rp);
    Var neighbor_term(Tape& tape, const Encoded& enc, CodeSpace space,
                      const RasterParams& rp, bool* skipped);

    SceneModel& model_;
    std::vector<Array> images_;
    TrainConfig cfg_;
    PyramidFeatures features_;
    Adam opt_;
    MemoryBank bank_;
    Rng rng_;
    int iter_ = 0;
    std::vector<int> order_;
    size_t order_pos_ = 0;
    StepMetrics last_;
    bool warned_past_final_ = false;
};

}  // namespace softmesh
