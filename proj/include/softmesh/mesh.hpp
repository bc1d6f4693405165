#pragma once

#include <array>
#include <string>
#include <vector>

#include "softmesh/array.hpp"
#include "softmesh/rng.hpp"

namespace softmesh {

// Triangle mesh with per-vertex texture coordinates. Vertex positions are
// kept in an Array so they can be fed to the tape directly; topology is
// plain index data.
struct TriMesh {
    Array vertices;                        // [V,3]
    std::vector<std::array<int, 3>> faces;
    Array uv;                              // [V,2], may be empty

    int64_t num_vertices() const { return vertices.size() / 3; }
    int64_t num_faces() const { return static_cast<int64_t>(faces.size()); }
};

struct Edge {
    int v0, v1;    // v0 < v1
    int f0, f1;    // adjacent faces
};

// Unit icosphere. subdiv n gives 10*4^n + 2 vertices and 20*4^n faces.
// uv comes from the spherical parameterization with the vertical along y:
// u = azimuth / 2pi in [0,1), v = (elevation + pi/2) / pi.
TriMesh make_icosphere(int subdiv);

// Icosphere with per-axis scaling applied after the uv assignment, then a
// global scale.
TriMesh make_ellipsoid(int subdiv, const std::array<double, 3>& axis_scale, double scale);

TriMesh make_box(const std::array<double, 3>& center, const std::array<double, 3>& half);

// Unique undirected edges sorted by (v0, v1). Throws unless every edge has
// exactly two adjacent faces.
std::vector<Edge> build_edges(const TriMesh& mesh);

// Sorted unique one-ring neighbors per vertex.
std::vector<std::vector<int>> vertex_neighbors(const std::vector<std::array<int, 3>>& faces,
                                               int64_t num_vertices);

// Unit face normals, [F,3]. Throws on degenerate (near zero area) faces.
Array face_normals(const Array& vertices, const std::vector<std::array<int, 3>>& faces);

double surface_area(const Array& vertices, const std::vector<std::array<int, 3>>& faces);

// Area-weighted point sampling, [n,3].
Array sample_surface(const TriMesh& mesh, int64_t n, Rng& rng);

void save_obj(const std::string& path, const TriMesh& mesh);
TriMesh load_obj(const std::string& path);

}  // namespace softmesh
