#include "softmesh/mesh_losses.hpp"

namespace softmesh {

Var laplacian_loss(Var vertices, const std::vector<std::vector<int>>& neighbors) {
    Tape& t = *vertices.tape;
    const int64_t v = vertices.value().shape()[0];
    if (static_cast<int64_t>(neighbors.size()) != v)
        throw TensorError("laplacian_loss: adjacency size mismatch");
    std::vector<int64_t> flat, owner;
    Array inv_deg({v, 1});
    for (int64_t i = 0; i < v; ++i) {
        const auto& nb = neighbors[static_cast<size_t>(i)];
        if (nb.empty()) throw TensorError("laplacian_loss: isolated vertex " + std::to_string(i));
        for (int j : nb) {
            flat.push_back(j);
            owner.push_back(i);
        }
        inv_deg[i] = 1.0 / static_cast<double>(nb.size());
    }
    Var ring_sum = scatter_add_rows(gather_rows(vertices, flat), owner, v);
    Var centroid = mul(ring_sum, t.constant(std::move(inv_deg)));
    Var d = sub(centroid, vertices);
    return mul(sum(mul(d, d)), 1.0 / static_cast<double>(v));
}

Var face_normals_var(Var vertices, const std::vector<std::array<int, 3>>& faces) {
    // value-level pass first for the descriptive degenerate-face error
    face_normals(vertices.value(), faces);
    const int64_t f = static_cast<int64_t>(faces.size());
    std::vector<int64_t> i0, i1, i2;
    i0.reserve(static_cast<size_t>(f));
    for (const auto& face : faces) {
        i0.push_back(face[0]);
        i1.push_back(face[1]);
        i2.push_back(face[2]);
    }
    Var a = gather_rows(vertices, i0);
    Var b = gather_rows(vertices, i1);
    Var c = gather_rows(vertices, i2);
    Var n = cross3(sub(b, a), sub(c, a));
    Var len = sqrt(sum(mul(n, n), 1));
    return div(n, reshape(len, {f, 1}));
}

Var normal_consistency_loss(Var vertices, const std::vector<std::array<int, 3>>& faces,
                            const std::vector<Edge>& edges) {
    if (edges.empty()) throw TensorError("normal_consistency_loss: no edges");
    Var n = face_normals_var(vertices, faces);
    std::vector<int64_t> f0, f1;
    f0.reserve(edges.size());
    for (const Edge& e : edges) {
        f0.push_back(e.f0);
        f1.push_back(e.f1);
    }
    Var cosang = sum(mul(gather_rows(n, f0), gather_rows(n, f1)), 1);
    return mean(add(neg(cosang), 1.0));
}

}  // namespace softmesh
