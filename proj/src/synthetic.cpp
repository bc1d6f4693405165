#include "softmesh/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include "softmesh/rasterizer.hpp"

namespace softmesh {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDeg = kPi / 180.0;

std::string seq_name(const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%03d", prefix, i);
    return buf;
}

// Smooth radial bump field: three random plane waves over the unit sphere.
struct BumpField {
    double w[3][3];
    double freq[3];
    double phase[3];

    explicit BumpField(Rng& rng) {
        for (int j = 0; j < 3; ++j) {
            double n = 0.0;
            for (int c = 0; c < 3; ++c) {
                w[j][c] = rng.normal();
                n += w[j][c] * w[j][c];
            }
            n = std::sqrt(n);
            for (int c = 0; c < 3; ++c) w[j][c] /= n;
            freq[j] = 1.0 + rng.uniform() * 2.0;
            phase[j] = rng.uniform(0.0, 2.0 * kPi);
        }
    }

    double operator()(const double* d) const {
        double g = 0.0;
        for (int j = 0; j < 3; ++j) {
            const double t = w[j][0] * d[0] + w[j][1] * d[1] + w[j][2] * d[2];
            g += std::sin(2.0 * kPi * freq[j] * t + phase[j]);
        }
        return g / 3.0;
    }
};

TriMesh deformed_ellipsoid(const SyntheticSpec& spec, Rng& rng) {
    TriMesh mesh = make_ellipsoid(spec.subdiv, {1.0, 0.7, 0.7}, 0.4);
    TriMesh sphere = make_icosphere(spec.subdiv);
    BumpField bumps(rng);
    for (int64_t i = 0; i < mesh.num_vertices(); ++i) {
        const double* d = sphere.vertices.data() + 3 * i;
        const double factor = 1.0 + spec.deform_amp * bumps(d);
        for (int c = 0; c < 3; ++c) mesh.vertices[3 * i + c] *= factor;
    }
    return mesh;
}

TriMesh merge(const TriMesh& a, const TriMesh& b) {
    TriMesh out;
    const int64_t va = a.num_vertices(), vb = b.num_vertices();
    out.vertices = Array({va + vb, 3});
    out.uv = Array({va + vb, 2});
    for (int64_t i = 0; i < 3 * va; ++i) out.vertices[i] = a.vertices[i];
    for (int64_t i = 0; i < 3 * vb; ++i) out.vertices[3 * va + i] = b.vertices[i];
    for (int64_t i = 0; i < 2 * va; ++i) out.uv[i] = a.uv[i];
    for (int64_t i = 0; i < 2 * vb; ++i) out.uv[2 * va + i] = b.uv[i];
    out.faces = a.faces;
    for (auto f : b.faces) {
        for (int c = 0; c < 3; ++c) f[static_cast<size_t>(c)] += static_cast<int>(va);
        out.faces.push_back(f);
    }
    return out;
}

TriMesh two_box(const SyntheticSpec& spec, Rng& rng) {
    const double e = spec.elongation;
    const double jitter = 0.02 * rng.uniform(-1.0, 1.0);
    TriMesh left = make_box({-0.16 - 0.5 * e, 0.0, 0.0}, {0.16 + 0.5 * e, 0.11, 0.11});
    TriMesh right =
        make_box({0.20 + 0.5 * e, 0.05 + jitter, 0.0}, {0.10, 0.14, 0.09});
    return merge(left, right);
}

Array procedural_texture(int size, Rng& rng) {
    Array tex({size, size, 3});
    double fu[3], fv[3], phase[3], tint[3];
    for (int c = 0; c < 3; ++c) {
        fu[c] = static_cast<double>(1 + rng.uniform_int(3));  // integer keeps the u seam clean
        fv[c] = static_cast<double>(rng.uniform_int(3));
        phase[c] = rng.uniform(0.0, 2.0 * kPi);
        tint[c] = rng.uniform(0.35, 0.65);
    }
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double u = (x + 0.5) / size, v = (y + 0.5) / size;
            for (int c = 0; c < 3; ++c) {
                const double s =
                    std::sin(2.0 * kPi * (fu[c] * u + fv[c] * v) + phase[c]);
                const double val = tint[c] + 0.35 * s;
                tex[(static_cast<int64_t>(y) * size + x) * 3 + c] =
                    std::clamp(val, 0.05, 0.95);
            }
        }
    return tex;
}

Array flat_background(int size, bool white, Rng& rng) {
    Array bg({size, size, 3});
    if (white) {
        for (int64_t i = 0; i < bg.size(); ++i) bg[i] = 1.0;
        return bg;
    }
    double top[3], bottom[3];
    for (int c = 0; c < 3; ++c) {
        top[c] = rng.uniform(0.1, 0.45);
        bottom[c] = rng.uniform(0.55, 0.9);
    }
    for (int y = 0; y < size; ++y) {
        const double t = (y + 0.5) / size;
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < 3; ++c)
                bg[(static_cast<int64_t>(y) * size + x) * 3 + c] =
                    top[c] + t * (bottom[c] - top[c]);
    }
    return bg;
}

}  // namespace

SyntheticInstance make_instance(const SyntheticSpec& spec, Rng& rng) {
    SyntheticInstance inst;
    inst.mesh = spec.family == SceneFamily::ellipsoid ? deformed_ellipsoid(spec, rng)
                                                      : two_box(spec, rng);
    inst.texture = procedural_texture(64, rng);
    inst.translation = {0.0, 0.0, 2.732};
    if (spec.randomize_translation) {
        inst.translation[0] = rng.uniform(-0.3, 0.3);
        inst.translation[1] = rng.uniform(-0.3, 0.3);
        for (int c = 0; c < 3; ++c) inst.scale[c] = rng.uniform(0.85, 1.15);
    }
    return inst;
}

TriMesh pose_mesh(const TriMesh& mesh, double azim_deg, double elev_deg, double roll_deg,
                  const std::array<double, 3>& scale,
                  const std::array<double, 3>& trans) {
    Array rot = euler_rotation_value(azim_deg * kDeg, elev_deg * kDeg, roll_deg * kDeg);
    TriMesh out = mesh;
    for (int64_t i = 0; i < mesh.num_vertices(); ++i) {
        double s[3];
        for (int c = 0; c < 3; ++c) s[c] = scale[c] * mesh.vertices[3 * i + c];
        for (int r = 0; r < 3; ++r)
            out.vertices[3 * i + r] = rot[3 * r + 0] * s[0] + rot[3 * r + 1] * s[1] +
                                      rot[3 * r + 2] * s[2] + trans[r];
    }
    return out;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_views < 1) throw TensorError("generate_synthetic: n_views must be >= 1");
    Dataset ds;
    Rng root(spec.seed);
    Camera cam = Camera::from_focal(3.732);
    RasterParams rp;
    rp.height = rp.width = spec.image_size;
    rp.sigma = spec.sigma;

    int img = 0;
    for (int i = 0; i < spec.n_instances; ++i) {
        Rng rng = root.split(static_cast<uint64_t>(i) + 1);
        SyntheticInstance inst = make_instance(spec, rng);
        Array bg = flat_background(spec.image_size, spec.white_background, rng);
        const std::string mesh_id = seq_name("mesh", i);
        ds.add_gt_mesh(mesh_id, inst.mesh);

        for (int j = 0; j < spec.n_views; ++j) {
            const double azim = 360.0 * j / spec.n_views;
            TriMesh posed = pose_mesh(inst.mesh, azim, 30.0, 0.0, inst.scale,
                                      inst.translation);
            RenderImages r = render_value(posed, inst.texture, bg, cam, rp);
            const std::string id = seq_name("img", img);
            ds.add_image(id, r.image);

            GtRecord gt;
            gt.mesh_id = mesh_id;
            gt.azimuth_deg = azim;
            gt.elevation_deg = 30.0;
            gt.scale = inst.scale;
            gt.translation = inst.translation;
            gt.mask = Array({spec.image_size, spec.image_size});
            for (int64_t p = 0; p < gt.mask.size(); ++p)
                gt.mask[p] = r.mask[p] >= 0.5 ? 1.0 : 0.0;
            ds.add_ground_truth(img, std::move(gt));
            ++img;
        }
    }
    return ds;
}

}  // namespace softmesh
