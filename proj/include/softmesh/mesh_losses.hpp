#pragma once

#include "softmesh/mesh.hpp"
#include "softmesh/ops.hpp"

namespace softmesh {

// Uniform-Laplacian smoothness: mean over vertices of the squared distance
// between each vertex and the centroid of its one-ring.
Var laplacian_loss(Var vertices, const std::vector<std::vector<int>>& neighbors);

// Mean of (1 - cos) over the dihedral angle of every edge. Throws on
// degenerate faces.
Var normal_consistency_loss(Var vertices, const std::vector<std::array<int, 3>>& faces,
                            const std::vector<Edge>& edges);

// Taped unit face normals, [F,3].
Var face_normals_var(Var vertices, const std::vector<std::array<int, 3>>& faces);

}  // namespace softmesh
