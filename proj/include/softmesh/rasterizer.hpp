#pragma once

#include <array>

#include "softmesh/camera.hpp"
#include "softmesh/mesh.hpp"
#include "softmesh/ops.hpp"

namespace softmesh {

enum class CompositeMode { layered, softras };

struct RasterParams {
    int height = 64;
    int width = 64;
    double sigma = 1e-4;
    int max_layers = 5;        // L, including the background layer
    double cutoff_mult = 3.0;  // support cutoff rho = cutoff_mult * sqrt(sigma), NDC units
    double min_occ = 1e-12;    // layers below this occupancy never enter the composite
    CompositeMode mode = CompositeMode::layered;
    // softras aggregation constants
    double gamma = 1e-4;
    double d_near = 1.0;
    double d_far = 100.0;
    double bg_eps = 1e-3;      // (d_far - d_bg) / (d_far - d_near)

    double cutoff() const { return cutoff_mult * std::sqrt(sigma); }
};

struct RenderOut {
    Var image;  // [H,W,3]
    Var mask;   // [H,W]
    int degenerate_faces = 0;
};

// Differentiable rasterization of a projected mesh. ndc [V,2] and depth
// [V] come from project(); texture [Th,Tw,3] is sampled at the static
// per-vertex uv (wrap in u, clamp in v); background [H,W,3] fills the
// residual weight. Gradients flow to ndc, depth, texture and background.
RenderOut rasterize(Var ndc, Var depth, const std::vector<std::array<int, 3>>& faces,
                    const Array& uv, Var texture, Var background, const RasterParams& p);

// Full pipeline for camera-frame vertices: project then rasterize.
RenderOut render_mesh(Var cam_verts, const std::vector<std::array<int, 3>>& faces,
                      const Array& uv, Var texture, Var background, const Camera& cam,
                      const RasterParams& p);

// Value-level convenience for data generation and tools.
struct RenderImages {
    Array image;  // [H,W,3]
    Array mask;   // [H,W]
};
RenderImages render_value(const TriMesh& posed_mesh, const Array& texture,
                          const Array& background, const Camera& cam, const RasterParams& p);

// Building blocks exposed for direct unit testing.

// Signed Euclidean distance in NDC: positive inside, negative outside,
// magnitude = distance to the triangle boundary.
double signed_distance(double px, double py, const double* a, const double* b,
                       const double* c);

double occupancy_from_nu(double nu, double sigma);
double occupancy_sr_from_nu(double nu, double sigma);

// Per-pixel composites over explicit layer stacks, front to back.
struct PixelComposite {
    std::array<double, 3> color;
    double mask;
};
PixelComposite composite_layered_px(const std::vector<double>& occs,
                                    const std::vector<std::array<double, 3>>& colors,
                                    const std::array<double, 3>& bg);
PixelComposite composite_sr_px(const std::vector<double>& occs,
                               const std::vector<std::array<double, 3>>& colors,
                               const std::vector<double>& depths,
                               const std::array<double, 3>& bg, double gamma, double d_near,
                               double d_far, double bg_eps);

}  // namespace softmesh
