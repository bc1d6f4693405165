#pragma once

#include <array>
#include <string>

#include "softmesh/camera.hpp"
#include "softmesh/mesh.hpp"
#include "softmesh/nn.hpp"
#include "softmesh/rasterizer.hpp"

namespace softmesh {

// Allowed ranges for the tanh-squashed pose and scale heads. A half-range of
// zero pins the parameter to its center.
struct PoseRanges {
    double scale_center = 1.0, scale_half = 0.5;
    double txy_half = 0.5;
    double tz_center = 2.732, tz_half = 0.0;
    double elev_center_deg = 30.0, elev_half_deg = 0.0;
    double roll_center_deg = 0.0, roll_half_deg = 0.0;

    static PoseRanges synthetic();
    static PoseRanges real();
};

// Four-stage curriculum over latent-code dimensionality. Stages are 1-based;
// masked entries are exactly zero.
struct ConditioningSchedule {
    std::array<int, 4> sh{0, 2, 8, 64};
    std::array<int, 4> tx{2, 8, 64, 512};
    std::array<int, 4> bg{4, 8, 64, 256};
    int stage = 1;
    bool enabled = true;

    int sh_dim() const { return enabled ? sh[static_cast<size_t>(stage - 1)] : sh[3]; }
    int tx_dim() const { return enabled ? tx[static_cast<size_t>(stage - 1)] : tx[3]; }
    int bg_dim() const { return enabled ? bg[static_cast<size_t>(stage - 1)] : bg[3]; }
};

Var mask_code(Var code, int active_dims);

struct ModelConfig {
    int image_size = 64;
    int tex_size = 64;
    int K = 6;
    int mesh_subdiv = 3;
    int deform_hidden = 128;
    int max_sh = 64, max_tx = 512, max_bg = 256;
    bool auto_decoder = false;
    int n_images = 0;           // auto-decoder latent table size
    bool shared_latents = false;  // one shape/texture/background row, per-image pose
    bool learn_background = true;
    bool fov_camera = false;  // focal 3.732 when false, 30 degree fov when true
    bool progressive = true;  // start the conditioning schedule at stage 1
    PoseRanges ranges;
    uint64_t seed = 1;
};

// One pose candidate set: K azimuth offsets around the uniform reference
// grid plus per-candidate elevation/roll/translation and probabilities.
struct PoseSet {
    Var azim, elev, roll;  // [K] radians
    Var trans;             // [K,3]
    Var probs, logits;     // [K]
    int argmax = 0;        // highest probability, ties to the lowest index
};

struct Encoded {
    Var z_sh, z_tx, z_bg;  // masked codes
    Var scale;             // [3]
    PoseSet poses;
};

struct CandidatePose {
    Var rotation;  // [3,3]
    Var trans;     // [3]
};

class SceneModel {
  public:
    explicit SceneModel(const ModelConfig& cfg);

    ModelConfig& config() { return cfg_; }
    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return store_; }
    const TriMesh& base_mesh() const { return base_; }
    const std::vector<std::vector<int>>& vertex_neighbors() const { return neighbors_; }
    const std::vector<Edge>& edges() const { return edges_; }
    ConditioningSchedule& schedule() { return schedule_; }

    // stage-1 inner curriculum gates
    bool allow_deform = true;
    bool allow_scale = true;

    void bind(Tape& tape) { store_.bind(tape); }

    // image must be [H,W,3]; in auto-decoder mode `index` selects the latent
    // row and the image content is ignored
    Encoded encode(Tape& tape, const Array& image, int index = -1);

    Var deform(Tape& tape, Var z_sh);
    Var texture(Tape& tape, Var z_tx);
    Var background(Tape& tape, Var z_bg);
    CandidatePose candidate(const PoseSet& poses, int k) const;

    // posed vertices for candidate k: rot * diag(scale) * v + t
    Var pose_vertices(Var verts, const Encoded& enc, int k) const;

    RenderOut render(Var posed_verts, Var tex, Var bg, const RasterParams& rp) const;

    Camera camera;

  private:
    ModelConfig cfg_;
    ParamStore store_;
    TriMesh base_;
    std::vector<std::vector<int>> neighbors_;
    std::vector<Edge> edges_;
    ConditioningSchedule schedule_;

    std::vector<Conv> enc_convs_;
    MLP head_sh_, head_tx_, head_bg_, head_scale_, head_pose_;
    MLP deform_net_;
    Linear tex_seed_, bg_seed_;
    std::vector<Conv> tex_convs_, bg_convs_;
    int tex_up_ = 0, bg_up_ = 0;

    Var encoder_features(Tape& tape, const Array& image);
    Var generator(Tape& tape, Var code, const Linear& seed, const std::vector<Conv>& convs,
                  int n_up);
    PoseSet decode_pose(Tape& tape, Var raw);
};

}  // namespace softmesh
