#include "softmesh/camera.hpp"

#include <cmath>

namespace softmesh {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Camera Camera::from_focal(double f) {
    if (f <= 0.0) throw TensorError("Camera: focal must be positive");
    Camera c;
    c.focal = f;
    return c;
}

Camera Camera::from_fov_deg(double fov_deg) {
    if (fov_deg <= 0.0 || fov_deg >= 180.0)
        throw TensorError("Camera: field of view out of range");
    Camera c;
    c.focal = 1.0 / std::tan(fov_deg * kPi / 360.0);
    return c;
}

std::pair<Var, Var> project(const Camera& cam, Var points) {
    const Array& pv = points.value();
    if (pv.rank() != 2 || pv.dim(1) != 3)
        throw TensorError("project: expected [N,3], got " + shape_str(pv.shape()));
    const int64_t n = pv.dim(0);
    for (int64_t i = 0; i < n; ++i) {
        const double z = pv[3 * i + 2];
        if (z <= cam.near_plane)
            throw TensorError("project: point " + std::to_string(i) + " at depth " +
                              std::to_string(z) + " is behind the near plane " +
                              std::to_string(cam.near_plane));
        if (z >= cam.far_plane)
            throw TensorError("project: point " + std::to_string(i) + " at depth " +
                              std::to_string(z) + " is beyond the far plane");
    }
    Var x = slice(points, 1, 0, 1);
    Var y = slice(points, 1, 1, 1);
    Var z = slice(points, 1, 2, 1);
    Var ndc = concat({mul(div(x, z), cam.focal), mul(div(y, z), cam.focal)}, 1);
    return {ndc, reshape(z, {n})};
}

namespace {

Var as1(Var a) { return reshape(a, {1}); }

Var mat3(std::initializer_list<Var> cells) {
    std::vector<Var> v(cells);
    return reshape(concat(v, 0), {3, 3});
}

}  // namespace

Var rotation_x(Var angle) {
    Var a = as1(angle);
    Var c = cos(a), s = sin(a);
    Var z = mul(a, 0.0), o = add(mul(a, 0.0), 1.0);
    return mat3({o, z, z, z, c, neg(s), z, s, c});
}

Var rotation_y(Var angle) {
    Var a = as1(angle);
    Var c = cos(a), s = sin(a);
    Var z = mul(a, 0.0), o = add(mul(a, 0.0), 1.0);
    return mat3({c, z, s, z, o, z, neg(s), z, c});
}

Var rotation_z(Var angle) {
    Var a = as1(angle);
    Var c = cos(a), s = sin(a);
    Var z = mul(a, 0.0), o = add(mul(a, 0.0), 1.0);
    return mat3({c, neg(s), z, s, c, z, z, z, o});
}

Var euler_rotation(Var azim, Var elev, Var roll) {
    return matmul(rotation_z(roll), matmul(rotation_x(elev), rotation_y(azim)));
}

Array euler_rotation_value(double azim, double elev, double roll) {
    Tape t;
    Var r = euler_rotation(t.leaf(Array::scalar(azim)), t.leaf(Array::scalar(elev)),
                           t.leaf(Array::scalar(roll)));
    return r.value();
}

Var apply_pose(Var verts, Var rot, Var scale, Var trans) {
    if (rot.value().shape() != Shape{3, 3})
        throw TensorError("apply_pose: rotation must be [3,3]");
    Var scaled = mul(verts, scale);
    Var rotated = matmul(scaled, transpose2(rot));
    return add(rotated, reshape(trans, {1, 3}));
}

}  // namespace softmesh
