#pragma once

#include "softmesh/dataset.hpp"
#include "softmesh/scene_model.hpp"

namespace softmesh {

enum class SceneFamily { ellipsoid, two_box };

struct SyntheticSpec {
    SceneFamily family = SceneFamily::ellipsoid;
    int n_instances = 1;
    int n_views = 24;
    int image_size = 64;
    int subdiv = 3;           // ellipsoid tessellation level
    double deform_amp = 0.12;  // radial bump amplitude, fraction of the radius
    double sigma = 2e-5;       // near-hard rasterization for ground truth
    bool white_background = true;
    bool randomize_translation = false;
    double elongation = 0.0;  // two_box: extra half-extent along x
    uint64_t seed = 0;
};

// Renders each instance from n_views azimuths uniformly spaced over 360
// degrees with the synthetic-preset camera, storing images plus full
// ground truth (mesh, pose, silhouette).
Dataset generate_synthetic(const SyntheticSpec& spec);

// Single deformed, textured instance, exposed for fixtures that need the
// mesh and texture directly.
struct SyntheticInstance {
    TriMesh mesh;  // object frame, before pose
    Array texture;
    std::array<double, 3> scale{1.0, 1.0, 1.0};
    std::array<double, 3> translation{0.0, 0.0, 0.0};
};
SyntheticInstance make_instance(const SyntheticSpec& spec, Rng& rng);

// Pose application shared by generation and evaluation: camera-frame
// vertices rot * (scale (*) v) + t with the synthetic elevation.
TriMesh pose_mesh(const TriMesh& mesh, double azim_deg, double elev_deg, double roll_deg,
                  const std::array<double, 3>& scale, const std::array<double, 3>& trans);

}  // namespace softmesh
