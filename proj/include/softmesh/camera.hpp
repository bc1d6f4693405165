#pragma once

#include "softmesh/ops.hpp"

namespace softmesh {

// Fixed pinhole intrinsics. Points are projected from a camera frame in
// which visible geometry sits at positive z, so depth is z itself.
struct Camera {
    double focal = 3.732;
    double near_plane = 1.0;
    double far_plane = 100.0;

    static Camera from_focal(double f);
    static Camera from_fov_deg(double fov_deg);
};

// [N,3] -> {ndc [N,2], depth [N]}. Throws if any point violates
// near < z < far.
std::pair<Var, Var> project(const Camera& cam, Var points);

// Rotation matrices from scalar angles, assembled on the tape.
Var rotation_x(Var angle);
Var rotation_y(Var angle);
Var rotation_z(Var angle);

// roll about z, then elevation about x, then azimuth about y:
// R = Rz(roll) * Rx(elev) * Ry(azim).
Var euler_rotation(Var azim, Var elev, Var roll);
Array euler_rotation_value(double azim, double elev, double roll);

// verts [N,3] -> R * (s .* v) + t applied rowwise. scale may be a scalar
// or per-axis [3]; trans is [3].
Var apply_pose(Var verts, Var rot, Var scale, Var trans);

}  // namespace softmesh
