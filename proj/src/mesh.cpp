#include "softmesh/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace softmesh {

namespace {

constexpr double kPi = 3.14159265358979323846;

void assign_sphere_uv(TriMesh& mesh) {
    const int64_t v = mesh.num_vertices();
    mesh.uv = Array({v, 2});
    for (int64_t i = 0; i < v; ++i) {
        const double x = mesh.vertices[3 * i + 0];
        const double y = mesh.vertices[3 * i + 1];
        const double z = mesh.vertices[3 * i + 2];
        double az = std::atan2(x, z);
        if (az < 0.0) az += 2.0 * kPi;
        const double elev = std::asin(std::clamp(y, -1.0, 1.0));
        mesh.uv[2 * i + 0] = az / (2.0 * kPi);
        mesh.uv[2 * i + 1] = (elev + kPi / 2.0) / kPi;
    }
}

void normalize_rows(Array& verts) {
    const int64_t n = verts.size() / 3;
    for (int64_t i = 0; i < n; ++i) {
        double* p = verts.data() + 3 * i;
        const double len = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
        p[0] /= len;
        p[1] /= len;
        p[2] /= len;
    }
}

}  // namespace

TriMesh make_icosphere(int subdiv) {
    if (subdiv < 0) throw TensorError("make_icosphere: negative subdivision");
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<double> verts = {
        -1, t,  0,  1, t,  0,  -1, -t, 0,  1, -t, 0,
        0,  -1, t,  0, 1,  t,  0,  -1, -t, 0, 1,  -t,
        t,  0,  -1, t, 0,  1,  -t, 0,  -1, -t, 0, 1,
    };
    std::vector<std::array<int, 3>> faces = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
        {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
        {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1},
    };

    for (int it = 0; it < subdiv; ++it) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto found = midpoint.find(key);
            if (found != midpoint.end()) return found->second;
            const int idx = static_cast<int>(verts.size() / 3);
            for (int c = 0; c < 3; ++c)
                verts.push_back(0.5 * (verts[3 * a + c] + verts[3 * b + c]));
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            const int m01 = mid(f[0], f[1]);
            const int m12 = mid(f[1], f[2]);
            const int m20 = mid(f[2], f[0]);
            next.push_back({f[0], m01, m20});
            next.push_back({f[1], m12, m01});
            next.push_back({f[2], m20, m12});
            next.push_back({m01, m12, m20});
        }
        faces = std::move(next);
    }

    TriMesh mesh;
    const int64_t nv = static_cast<int64_t>(verts.size() / 3);
    mesh.vertices = Array({nv, 3}, std::move(verts));
    normalize_rows(mesh.vertices);
    mesh.faces = std::move(faces);
    assign_sphere_uv(mesh);
    return mesh;
}

TriMesh make_ellipsoid(int subdiv, const std::array<double, 3>& axis_scale, double scale) {
    TriMesh mesh = make_icosphere(subdiv);
    const int64_t v = mesh.num_vertices();
    for (int64_t i = 0; i < v; ++i)
        for (int c = 0; c < 3; ++c)
            mesh.vertices[3 * i + c] *= axis_scale[static_cast<size_t>(c)] * scale;
    return mesh;
}

TriMesh make_box(const std::array<double, 3>& center, const std::array<double, 3>& half) {
    TriMesh mesh;
    mesh.vertices = Array({8, 3});
    for (int i = 0; i < 8; ++i) {
        mesh.vertices[3 * i + 0] = center[0] + ((i & 1) ? half[0] : -half[0]);
        mesh.vertices[3 * i + 1] = center[1] + ((i & 2) ? half[1] : -half[1]);
        mesh.vertices[3 * i + 2] = center[2] + ((i & 4) ? half[2] : -half[2]);
    }
    mesh.faces = {
        {0, 2, 3}, {0, 3, 1},  // -z
        {4, 5, 7}, {4, 7, 6},  // +z
        {0, 4, 6}, {0, 6, 2},  // -x
        {1, 3, 7}, {1, 7, 5},  // +x
        {0, 1, 5}, {0, 5, 4},  // -y
        {2, 7, 3}, {2, 6, 7},  // +y
    };
    mesh.uv = Array({8, 2});
    for (int i = 0; i < 8; ++i) {
        const double x = mesh.vertices[3 * i + 0] - center[0];
        const double y = mesh.vertices[3 * i + 1] - center[1];
        const double z = mesh.vertices[3 * i + 2] - center[2];
        double az = std::atan2(x, z);
        if (az < 0.0) az += 2.0 * kPi;
        const double r = std::sqrt(x * x + y * y + z * z);
        mesh.uv[2 * i + 0] = az / (2.0 * kPi);
        mesh.uv[2 * i + 1] = (std::asin(std::clamp(y / r, -1.0, 1.0)) + kPi / 2.0) / kPi;
    }
    return mesh;
}

std::vector<Edge> build_edges(const TriMesh& mesh) {
    std::map<std::pair<int, int>, std::vector<int>> adj;
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& face = mesh.faces[f];
        for (int e = 0; e < 3; ++e) {
            const auto key = std::minmax(face[e], face[(e + 1) % 3]);
            adj[key].push_back(static_cast<int>(f));
        }
    }
    std::vector<Edge> edges;
    edges.reserve(adj.size());
    for (const auto& [key, fs] : adj) {
        if (fs.size() != 2)
            throw TensorError("build_edges: edge (" + std::to_string(key.first) + "," +
                              std::to_string(key.second) + ") borders " +
                              std::to_string(fs.size()) + " faces, expected 2");
        edges.push_back(Edge{key.first, key.second, fs[0], fs[1]});
    }
    return edges;
}

std::vector<std::vector<int>> vertex_neighbors(const std::vector<std::array<int, 3>>& faces,
                                               int64_t num_vertices) {
    std::vector<std::vector<int>> nb(static_cast<size_t>(num_vertices));
    for (const auto& f : faces) {
        for (int e = 0; e < 3; ++e) {
            const int a = f[e], b = f[(e + 1) % 3];
            nb[static_cast<size_t>(a)].push_back(b);
            nb[static_cast<size_t>(b)].push_back(a);
        }
    }
    for (auto& v : nb) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    return nb;
}

Array face_normals(const Array& vertices, const std::vector<std::array<int, 3>>& faces) {
    Array out({static_cast<int64_t>(faces.size()), 3});
    for (size_t f = 0; f < faces.size(); ++f) {
        const double* a = vertices.data() + 3 * faces[f][0];
        const double* b = vertices.data() + 3 * faces[f][1];
        const double* c = vertices.data() + 3 * faces[f][2];
        const double e1[3] = {b[0] - a[0], b[1] - a[1], b[2] - a[2]};
        const double e2[3] = {c[0] - a[0], c[1] - a[1], c[2] - a[2]};
        double n[3] = {e1[1] * e2[2] - e1[2] * e2[1], e1[2] * e2[0] - e1[0] * e2[2],
                       e1[0] * e2[1] - e1[1] * e2[0]};
        const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
        if (len < 1e-12)
            throw TensorError("face_normals: degenerate face " + std::to_string(f));
        for (int k = 0; k < 3; ++k) out[3 * static_cast<int64_t>(f) + k] = n[k] / len;
    }
    return out;
}

double surface_area(const Array& vertices, const std::vector<std::array<int, 3>>& faces) {
    double total = 0.0;
    for (const auto& f : faces) {
        const double* a = vertices.data() + 3 * f[0];
        const double* b = vertices.data() + 3 * f[1];
        const double* c = vertices.data() + 3 * f[2];
        const double e1[3] = {b[0] - a[0], b[1] - a[1], b[2] - a[2]};
        const double e2[3] = {c[0] - a[0], c[1] - a[1], c[2] - a[2]};
        const double n[3] = {e1[1] * e2[2] - e1[2] * e2[1], e1[2] * e2[0] - e1[0] * e2[2],
                             e1[0] * e2[1] - e1[1] * e2[0]};
        total += 0.5 * std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    }
    return total;
}

Array sample_surface(const TriMesh& mesh, int64_t n, Rng& rng) {
    const int64_t nf = mesh.num_faces();
    if (nf == 0) throw TensorError("sample_surface: empty mesh");
    std::vector<double> cum(static_cast<size_t>(nf));
    double total = 0.0;
    for (int64_t f = 0; f < nf; ++f) {
        const auto& face = mesh.faces[static_cast<size_t>(f)];
        const double* a = mesh.vertices.data() + 3 * face[0];
        const double* b = mesh.vertices.data() + 3 * face[1];
        const double* c = mesh.vertices.data() + 3 * face[2];
        const double e1[3] = {b[0] - a[0], b[1] - a[1], b[2] - a[2]};
        const double e2[3] = {c[0] - a[0], c[1] - a[1], c[2] - a[2]};
        const double cr[3] = {e1[1] * e2[2] - e1[2] * e2[1], e1[2] * e2[0] - e1[0] * e2[2],
                              e1[0] * e2[1] - e1[1] * e2[0]};
        total += 0.5 * std::sqrt(cr[0] * cr[0] + cr[1] * cr[1] + cr[2] * cr[2]);
        cum[static_cast<size_t>(f)] = total;
    }
    if (total <= 0.0) throw TensorError("sample_surface: zero surface area");

    Array pts({n, 3});
    for (int64_t i = 0; i < n; ++i) {
        const double r = rng.uniform() * total;
        const auto it = std::lower_bound(cum.begin(), cum.end(), r);
        const size_t f = std::min(static_cast<size_t>(it - cum.begin()),
                                  static_cast<size_t>(nf - 1));
        const auto& face = mesh.faces[f];
        const double* a = mesh.vertices.data() + 3 * face[0];
        const double* b = mesh.vertices.data() + 3 * face[1];
        const double* c = mesh.vertices.data() + 3 * face[2];
        const double s = std::sqrt(rng.uniform());
        const double t = rng.uniform();
        const double wa = 1.0 - s, wb = s * (1.0 - t), wc = s * t;
        for (int k = 0; k < 3; ++k)
            pts[3 * i + k] = wa * a[k] + wb * b[k] + wc * c[k];
    }
    return pts;
}

void save_obj(const std::string& path, const TriMesh& mesh) {
    std::ofstream out(path);
    if (!out) throw TensorError("save_obj: cannot write " + path);
    out.precision(17);
    const int64_t v = mesh.num_vertices();
    for (int64_t i = 0; i < v; ++i)
        out << "v " << mesh.vertices[3 * i] << " " << mesh.vertices[3 * i + 1] << " "
            << mesh.vertices[3 * i + 2] << "\n";
    const bool has_uv = mesh.uv.size() == 2 * v;
    if (has_uv)
        for (int64_t i = 0; i < v; ++i)
            out << "vt " << mesh.uv[2 * i] << " " << mesh.uv[2 * i + 1] << "\n";
    for (const auto& f : mesh.faces) {
        if (has_uv)
            out << "f " << f[0] + 1 << "/" << f[0] + 1 << " " << f[1] + 1 << "/" << f[1] + 1
                << " " << f[2] + 1 << "/" << f[2] + 1 << "\n";
        else
            out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
    }
    if (!out) throw TensorError("save_obj: write failed " + path);
}

TriMesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw TensorError("load_obj: cannot open " + path);
    std::vector<double> verts;
    std::vector<double> uv_raw;
    std::vector<std::array<int, 3>> faces;
    std::vector<std::array<int, 3>> face_uv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            double x, y, z;
            if (!(ls >> x >> y >> z))
                throw TensorError("load_obj: bad vertex at line " + std::to_string(lineno));
            verts.insert(verts.end(), {x, y, z});
        } else if (tag == "vt") {
            double u, w;
            if (!(ls >> u >> w))
                throw TensorError("load_obj: bad texcoord at line " + std::to_string(lineno));
            uv_raw.insert(uv_raw.end(), {u, w});
        } else if (tag == "f") {
            std::array<int, 3> fv{}, ft{-1, -1, -1};
            std::string tok;
            int got = 0;
            while (ls >> tok) {
                if (got >= 3)
                    throw TensorError("load_obj: non-triangle face at line " +
                                      std::to_string(lineno));
                const size_t slash = tok.find('/');
                fv[static_cast<size_t>(got)] = std::stoi(tok.substr(0, slash)) - 1;
                if (slash != std::string::npos && slash + 1 < tok.size() &&
                    tok[slash + 1] != '/')
                    ft[static_cast<size_t>(got)] = std::stoi(tok.substr(slash + 1)) - 1;
                ++got;
            }
            if (got != 3)
                throw TensorError("load_obj: face with " + std::to_string(got) +
                                  " vertices at line " + std::to_string(lineno));
            faces.push_back(fv);
            face_uv.push_back(ft);
        }
    }
    const int64_t v = static_cast<int64_t>(verts.size() / 3);
    TriMesh mesh;
    mesh.vertices = Array({v, 3}, std::move(verts));
    for (size_t f = 0; f < faces.size(); ++f)
        for (int k = 0; k < 3; ++k)
            if (faces[f][static_cast<size_t>(k)] < 0 || faces[f][static_cast<size_t>(k)] >= v)
                throw TensorError("load_obj: vertex index out of range in face " +
                                  std::to_string(f));
    mesh.faces = std::move(faces);
    if (!uv_raw.empty()) {
        mesh.uv = Array({v, 2});
        const int64_t nt = static_cast<int64_t>(uv_raw.size() / 2);
        for (size_t f = 0; f < face_uv.size(); ++f)
            for (int k = 0; k < 3; ++k) {
                const int ti = face_uv[f][static_cast<size_t>(k)];
                if (ti < 0) continue;
                if (ti >= nt)
                    throw TensorError("load_obj: texcoord index out of range in face " +
                                      std::to_string(f));
                const int vi = mesh.faces[f][static_cast<size_t>(k)];
                mesh.uv[2 * vi + 0] = uv_raw[2 * static_cast<size_t>(ti) + 0];
                mesh.uv[2 * vi + 1] = uv_raw[2 * static_cast<size_t>(ti) + 1];
            }
    }
    return mesh;
}

}  // namespace softmesh
