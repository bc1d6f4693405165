#include "softmesh/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace softmesh {

namespace {

struct DistInfo {
    double nu;   // signed distance, positive inside
    int edge;    // winning edge (0: a-b, 1: b-c, 2: c-a)
    double t;    // clamped edge parameter of the closest boundary point
    bool inside;
};

double cross2(double ax, double ay, double bx, double by) { return ax * by - ay * bx; }

DistInfo face_distance(double px, double py, const double* a, const double* b,
                       const double* c) {
    const double* vs[3] = {a, b, c};
    double best_d2 = 0.0, best_t = 0.0;
    int best_e = -1;
    for (int e = 0; e < 3; ++e) {
        const double* u = vs[e];
        const double* v = vs[(e + 1) % 3];
        const double ex = v[0] - u[0], ey = v[1] - u[1];
        const double wx = px - u[0], wy = py - u[1];
        const double dd = ex * ex + ey * ey;
        double t = dd > 0.0 ? (wx * ex + wy * ey) / dd : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double qx = wx - t * ex, qy = wy - t * ey;
        const double d2 = qx * qx + qy * qy;
        if (best_e < 0 || d2 < best_d2) {
            best_d2 = d2;
            best_t = t;
            best_e = e;
        }
    }
    const double s0 = cross2(b[0] - a[0], b[1] - a[1], px - a[0], py - a[1]);
    const double s1 = cross2(c[0] - b[0], c[1] - b[1], px - b[0], py - b[1]);
    const double s2 = cross2(a[0] - c[0], a[1] - c[1], px - c[0], py - c[1]);
    const bool inside = (s0 >= 0.0 && s1 >= 0.0 && s2 >= 0.0) ||
                        (s0 <= 0.0 && s1 <= 0.0 && s2 <= 0.0);
    const double d = std::sqrt(best_d2);
    return DistInfo{inside ? d : -d, best_e, best_t, inside};
}

struct TexSample {
    double rgb[3];
    int64_t r0, r1, c0, c1;
    double w00, w01, w10, w11;  // [row][col]
    double dcdu[3], dcdv[3];
};

TexSample sample_texture(const Array& tex, int64_t th, int64_t tw, double u, double v) {
    const double uw = u - std::floor(u);
    const bool v_in = v >= 0.0 && v <= 1.0;
    const double vc = std::clamp(v, 0.0, 1.0);
    const double x = uw * static_cast<double>(tw) - 0.5;
    const double y = vc * static_cast<double>(th) - 0.5;
    const double x0 = std::floor(x), y0 = std::floor(y);
    const double fx = x - x0, fy = y - y0;
    auto wrap = [tw](int64_t i) { return ((i % tw) + tw) % tw; };
    TexSample s;
    s.c0 = wrap(static_cast<int64_t>(x0));
    s.c1 = wrap(static_cast<int64_t>(x0) + 1);
    s.r0 = std::clamp(static_cast<int64_t>(y0), int64_t{0}, th - 1);
    s.r1 = std::clamp(static_cast<int64_t>(y0) + 1, int64_t{0}, th - 1);
    s.w00 = (1 - fx) * (1 - fy);
    s.w01 = fx * (1 - fy);
    s.w10 = (1 - fx) * fy;
    s.w11 = fx * fy;
    for (int ch = 0; ch < 3; ++ch) {
        const double t00 = tex[(s.r0 * tw + s.c0) * 3 + ch];
        const double t01 = tex[(s.r0 * tw + s.c1) * 3 + ch];
        const double t10 = tex[(s.r1 * tw + s.c0) * 3 + ch];
        const double t11 = tex[(s.r1 * tw + s.c1) * 3 + ch];
        s.rgb[ch] = s.w00 * t00 + s.w01 * t01 + s.w10 * t10 + s.w11 * t11;
        s.dcdu[ch] = static_cast<double>(tw) * ((1 - fy) * (t01 - t00) + fy * (t11 - t10));
        s.dcdv[ch] = v_in
                         ? static_cast<double>(th) * ((1 - fx) * (t10 - t00) + fx * (t11 - t01))
                         : 0.0;
    }
    return s;
}

// Barycentrics of (px,py) and their jacobian w.r.t. the three vertices.
void barycentrics(const double* a, const double* b, const double* c, double px, double py,
                  double lam[3], double dlam[3][3][2]) {
    const double A = cross2(b[0] - a[0], b[1] - a[1], c[0] - a[0], c[1] - a[1]);
    const double n0 = cross2(b[0] - px, b[1] - py, c[0] - px, c[1] - py);
    const double n1 = cross2(c[0] - px, c[1] - py, a[0] - px, a[1] - py);
    const double n2 = cross2(a[0] - px, a[1] - py, b[0] - px, b[1] - py);
    lam[0] = n0 / A;
    lam[1] = n1 / A;
    lam[2] = n2 / A;
    const double dA[3][2] = {{b[1] - c[1], c[0] - b[0]},
                             {c[1] - a[1], a[0] - c[0]},
                             {a[1] - b[1], b[0] - a[0]}};
    const double dN[3][3][2] = {
        {{0, 0}, {c[1] - py, px - c[0]}, {py - b[1], b[0] - px}},
        {{py - c[1], c[0] - px}, {0, 0}, {a[1] - py, px - a[0]}},
        {{b[1] - py, px - b[0]}, {py - a[1], a[0] - px}, {0, 0}},
    };
    const double n[3] = {n0, n1, n2};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int d = 0; d < 2; ++d)
                dlam[i][j][d] = (dN[i][j][d] * A - n[i] * dA[j][d]) / (A * A);
}

struct Layer {
    int face;
    double occ;
    double nu;
    double t;
    int edge;
    bool inside;
    double lam[3];
    double depth;
};

struct Ctx {
    RasterParams p;
    std::vector<std::array<int, 3>> faces;
    std::vector<std::array<double, 6>> face_uv;  // seam-unwrapped (u,v) per corner
    std::vector<char> skip;                      // degenerate faces
    int64_t v, th, tw;
    int ndc_id, depth_id, tex_id, bg_id;
    std::vector<std::vector<Layer>> stash;       // per pixel, sorted and truncated
};

double pixel_x(int j, int w) { return (j + 0.5) * 2.0 / w - 1.0; }
double pixel_y(int i, int h) { return 1.0 - (i + 0.5) * 2.0 / h; }

double layer_occupancy(double nu, const RasterParams& p) {
    return p.mode == CompositeMode::layered ? occupancy_from_nu(nu, p.sigma)
                                            : occupancy_sr_from_nu(nu, p.sigma);
}

void rasterize_backward(Tape& tp, int self, const std::shared_ptr<Ctx>& ctx);

}  // namespace

double signed_distance(double px, double py, const double* a, const double* b,
                       const double* c) {
    return face_distance(px, py, a, b, c).nu;
}

double occupancy_from_nu(double nu, double sigma) {
    return std::exp(std::min(0.0, nu / sigma));
}

double occupancy_sr_from_nu(double nu, double sigma) {
    const double x = nu / sigma;
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

PixelComposite composite_layered_px(const std::vector<double>& occs,
                                    const std::vector<std::array<double, 3>>& colors,
                                    const std::array<double, 3>& bg) {
    if (occs.size() != colors.size())
        throw TensorError("composite_layered_px: stack size mismatch");
    PixelComposite out{{0, 0, 0}, 0};
    double trans = 1.0;
    for (size_t l = 0; l < occs.size(); ++l) {
        const double w = trans * occs[l];
        for (int c = 0; c < 3; ++c) out.color[c] += w * colors[l][c];
        trans *= 1.0 - occs[l];
    }
    for (int c = 0; c < 3; ++c) out.color[c] += trans * bg[c];
    out.mask = 1.0 - trans;
    return out;
}

PixelComposite composite_sr_px(const std::vector<double>& occs,
                               const std::vector<std::array<double, 3>>& colors,
                               const std::vector<double>& depths,
                               const std::array<double, 3>& bg, double gamma, double d_near,
                               double d_far, double bg_eps) {
    if (occs.size() != colors.size() || occs.size() != depths.size())
        throw TensorError("composite_sr_px: stack size mismatch");
    double m = bg_eps;
    std::vector<double> dprime(occs.size());
    for (size_t l = 0; l < occs.size(); ++l) {
        dprime[l] = (d_far - depths[l]) / (d_far - d_near);
        m = std::max(m, dprime[l]);
    }
    // shifting every exponent by the max is exact and avoids overflow
    double denom = std::exp((bg_eps - m) / gamma);
    std::vector<double> num(occs.size());
    for (size_t l = 0; l < occs.size(); ++l) {
        num[l] = occs[l] * std::exp((dprime[l] - m) / gamma);
        denom += num[l];
    }
    PixelComposite out{{0, 0, 0}, 0};
    for (size_t l = 0; l < occs.size(); ++l) {
        const double s = num[l] / denom;
        for (int c = 0; c < 3; ++c) out.color[c] += s * colors[l][c];
    }
    const double s_bg = std::exp((bg_eps - m) / gamma) / denom;
    for (int c = 0; c < 3; ++c) out.color[c] += s_bg * bg[c];
    out.mask = 1.0 - s_bg;
    return out;
}

RenderOut rasterize(Var ndc, Var depth, const std::vector<std::array<int, 3>>& faces,
                    const Array& uv, Var texture, Var background, const RasterParams& p) {
    check_same_tape(ndc, depth, "rasterize");
    check_same_tape(ndc, texture, "rasterize");
    check_same_tape(ndc, background, "rasterize");
    Tape& t = *ndc.tape;
    const Array& nv = ndc.value();
    const Array& dv = depth.value();
    const Array& tv = texture.value();
    const Array& bv = background.value();
    const int64_t v = nv.rank() == 2 ? nv.dim(0) : -1;
    if (v < 0 || nv.dim(1) != 2) throw TensorError("rasterize: ndc must be [V,2]");
    if (dv.shape() != Shape{v}) throw TensorError("rasterize: depth must be [V]");
    if (uv.shape() != Shape{v, 2}) throw TensorError("rasterize: uv must be [V,2]");
    if (tv.rank() != 3 || tv.dim(2) != 3) throw TensorError("rasterize: texture must be [Th,Tw,3]");
    if (bv.shape() != Shape{static_cast<int64_t>(p.height), static_cast<int64_t>(p.width), 3})
        throw TensorError("rasterize: background must match the render size");
    if (p.max_layers < 2) throw TensorError("rasterize: need at least one face layer");
    if (p.sigma <= 0.0) throw TensorError("rasterize: sigma must be positive");
    for (const auto& f : faces)
        for (int k = 0; k < 3; ++k)
            if (f[static_cast<size_t>(k)] < 0 || f[static_cast<size_t>(k)] >= v)
                throw TensorError("rasterize: face vertex index out of range");

    const int h = p.height, w = p.width;
    auto ctx = std::make_shared<Ctx>();
    ctx->p = p;
    ctx->faces = faces;
    ctx->v = v;
    ctx->th = tv.dim(0);
    ctx->tw = tv.dim(1);
    ctx->ndc_id = ndc.id;
    ctx->depth_id = depth.id;
    ctx->tex_id = texture.id;
    ctx->bg_id = background.id;

    // seam-aware per-face uv: if the face straddles the u wrap, lift the
    // low side by one period
    ctx->face_uv.resize(faces.size());
    for (size_t f = 0; f < faces.size(); ++f) {
        double us[3], vs[3];
        for (int k = 0; k < 3; ++k) {
            us[k] = uv[2 * faces[f][static_cast<size_t>(k)] + 0];
            vs[k] = uv[2 * faces[f][static_cast<size_t>(k)] + 1];
        }
        const double span = *std::max_element(us, us + 3) - *std::min_element(us, us + 3);
        if (span > 0.5)
            for (double& u : us)
                if (u < 0.5) u += 1.0;
        ctx->face_uv[f] = {us[0], vs[0], us[1], vs[1], us[2], vs[2]};
    }

    int degenerate = 0;
    ctx->skip.assign(faces.size(), 0);
    const double rho = p.cutoff();

    struct Cand {
        Layer layer;
        double rgb[3];
    };
    std::vector<std::vector<Cand>> cands(static_cast<size_t>(h) * w);

    for (size_t f = 0; f < faces.size(); ++f) {
        const double* a = nv.data() + 2 * faces[f][0];
        const double* b = nv.data() + 2 * faces[f][1];
        const double* c = nv.data() + 2 * faces[f][2];
        const double area2 = cross2(b[0] - a[0], b[1] - a[1], c[0] - a[0], c[1] - a[1]);
        if (std::abs(area2) < 1e-12) {
            ctx->skip[f] = 1;
            ++degenerate;
            continue;
        }
        const double xmin = std::min({a[0], b[0], c[0]}) - rho;
        const double xmax = std::max({a[0], b[0], c[0]}) + rho;
        const double ymin = std::min({a[1], b[1], c[1]}) - rho;
        const double ymax = std::max({a[1], b[1], c[1]}) + rho;
        const int j0 = std::max(0, static_cast<int>(std::floor((xmin + 1.0) * w / 2.0 - 0.5)));
        const int j1 = std::min(w - 1, static_cast<int>(std::ceil((xmax + 1.0) * w / 2.0 - 0.5)));
        const int i0 = std::max(0, static_cast<int>(std::floor((1.0 - ymax) * h / 2.0 - 0.5)));
        const int i1 = std::min(h - 1, static_cast<int>(std::ceil((1.0 - ymin) * h / 2.0 - 0.5)));
        const double zs[3] = {dv[faces[f][0]], dv[faces[f][1]], dv[faces[f][2]]};
        const double zc = (zs[0] + zs[1] + zs[2]) / 3.0;
        const auto& fuv = ctx->face_uv[f];

        for (int i = i0; i <= i1; ++i) {
            const double py = pixel_y(i, h);
            for (int j = j0; j <= j1; ++j) {
                const double px = pixel_x(j, w);
                const DistInfo di = face_distance(px, py, a, b, c);
                if (di.nu < -rho) continue;
                Cand cd;
                Layer& L = cd.layer;
                L.face = static_cast<int>(f);
                L.nu = di.nu;
                L.t = di.t;
                L.edge = di.edge;
                L.inside = di.inside;
                L.occ = layer_occupancy(di.nu, p);
                if (L.occ < p.min_occ) continue;
                if (di.inside) {
                    double dlam[3][3][2];
                    barycentrics(a, b, c, px, py, L.lam, dlam);
                    L.depth = L.lam[0] * zs[0] + L.lam[1] * zs[1] + L.lam[2] * zs[2];
                } else {
                    // closest boundary point: the winning edge at parameter t
                    L.lam[0] = L.lam[1] = L.lam[2] = 0.0;
                    L.lam[di.edge] = 1.0 - di.t;
                    L.lam[(di.edge + 1) % 3] = di.t;
                    L.depth = zc;
                }
                const double up = L.lam[0] * fuv[0] + L.lam[1] * fuv[2] + L.lam[2] * fuv[4];
                const double vp = L.lam[0] * fuv[1] + L.lam[1] * fuv[3] + L.lam[2] * fuv[5];
                const TexSample ts = sample_texture(tv, ctx->th, ctx->tw, up, vp);
                for (int ch = 0; ch < 3; ++ch) cd.rgb[ch] = ts.rgb[ch];
                cands[static_cast<size_t>(i) * w + j].push_back(cd);
            }
        }
    }

    Array out({h, w, 4});
    ctx->stash.resize(static_cast<size_t>(h) * w);
    const size_t keep = static_cast<size_t>(p.max_layers - 1);
    for (int64_t pix = 0; pix < static_cast<int64_t>(h) * w; ++pix) {
        auto& cs = cands[static_cast<size_t>(pix)];
        std::stable_sort(cs.begin(), cs.end(), [](const Cand& x, const Cand& y) {
            if (x.layer.depth != y.layer.depth) return x.layer.depth < y.layer.depth;
            return x.layer.face < y.layer.face;
        });
        if (cs.size() > keep) cs.resize(keep);

        const double* bgpx = bv.data() + 3 * pix;
        std::vector<double> occs(cs.size());
        std::vector<std::array<double, 3>> cols(cs.size());
        std::vector<double> deps(cs.size());
        for (size_t l = 0; l < cs.size(); ++l) {
            occs[l] = cs[l].layer.occ;
            cols[l] = {cs[l].rgb[0], cs[l].rgb[1], cs[l].rgb[2]};
            deps[l] = cs[l].layer.depth;
        }
        const std::array<double, 3> bgc = {bgpx[0], bgpx[1], bgpx[2]};
        const PixelComposite pc =
            p.mode == CompositeMode::layered
                ? composite_layered_px(occs, cols, bgc)
                : composite_sr_px(occs, cols, deps, bgc, p.gamma, p.d_near, p.d_far, p.bg_eps);
        for (int ch = 0; ch < 3; ++ch) out[4 * pix + ch] = pc.color[ch];
        out[4 * pix + 3] = pc.mask;

        auto& st = ctx->stash[static_cast<size_t>(pix)];
        st.reserve(cs.size());
        for (const Cand& cd : cs) st.push_back(cd.layer);
    }

    Var fused = t.record(std::move(out), [ctx](Tape& tp, int self) {
        rasterize_backward(tp, self, ctx);
    });
    RenderOut ro;
    ro.image = slice(fused, 2, 0, 3);
    ro.mask = reshape(slice(fused, 2, 3, 1), {h, w});
    ro.degenerate_faces = degenerate;
    return ro;
}

namespace {

void rasterize_backward(Tape& tp, int self, const std::shared_ptr<Ctx>& ctx) {
    const Array& g = tp.grad(self);  // [H,W,4]
    const Array& nv = tp.value(ctx->ndc_id);
    const Array& dv = tp.value(ctx->depth_id);
    const Array& tv = tp.value(ctx->tex_id);
    const Array& bv = tp.value(ctx->bg_id);
    const RasterParams& p = ctx->p;
    const int h = p.height, w = p.width;

    Array g_ndc({ctx->v, 2});
    Array g_depth({ctx->v});
    Array g_tex(tv.shape());
    Array g_bg(bv.shape());

    for (int64_t pix = 0; pix < static_cast<int64_t>(h) * w; ++pix) {
        const auto& st = ctx->stash[static_cast<size_t>(pix)];
        const double* gi = g.data() + 4 * pix;
        const double gm = gi[3];
        const double* bgpx = bv.data() + 3 * pix;
        const size_t m = st.size();
        if (m == 0 && gm == 0.0 && gi[0] == 0.0 && gi[1] == 0.0 && gi[2] == 0.0) continue;

        // recompute layer colors and texture samples
        std::vector<TexSample> samples(m);
        std::vector<double> q(m);
        for (size_t l = 0; l < m; ++l) {
            const Layer& L = st[l];
            const auto& fuv = ctx->face_uv[static_cast<size_t>(L.face)];
            const double up = L.lam[0] * fuv[0] + L.lam[1] * fuv[2] + L.lam[2] * fuv[4];
            const double vp = L.lam[0] * fuv[1] + L.lam[1] * fuv[3] + L.lam[2] * fuv[5];
            samples[l] = sample_texture(tv, ctx->th, ctx->tw, up, vp);
            q[l] = gi[0] * samples[l].rgb[0] + gi[1] * samples[l].rgb[1] +
                   gi[2] * samples[l].rgb[2];
        }
        const double q_bg = gi[0] * bgpx[0] + gi[1] * bgpx[1] + gi[2] * bgpx[2] - gm;

        std::vector<double> d_occ(m, 0.0), d_dep(m, 0.0), wgt(m, 0.0);
        double w_bg = 0.0;

        if (p.mode == CompositeMode::layered) {
            std::vector<double> trans(m + 1);
            trans[0] = 1.0;
            for (size_t l = 0; l < m; ++l) {
                wgt[l] = trans[l] * st[l].occ;
                trans[l + 1] = trans[l] * (1.0 - st[l].occ);
            }
            w_bg = trans[m];
            double r = q_bg;
            for (size_t l = m; l-- > 0;) {
                d_occ[l] = trans[l] * (q[l] - r);
                r = st[l].occ * q[l] + (1.0 - st[l].occ) * r;
            }
        } else {
            double mx = p.bg_eps;
            std::vector<double> dprime(m), num(m), ex(m);
            for (size_t l = 0; l < m; ++l) {
                dprime[l] = (p.d_far - st[l].depth) / (p.d_far - p.d_near);
                mx = std::max(mx, dprime[l]);
            }
            const double n_bg = std::exp((p.bg_eps - mx) / p.gamma);
            double denom = n_bg;
            for (size_t l = 0; l < m; ++l) {
                ex[l] = std::exp((dprime[l] - mx) / p.gamma);
                num[l] = st[l].occ * ex[l];
                denom += num[l];
            }
            w_bg = n_bg / denom;
            double sq = w_bg * q_bg;  // sum of s_j * q_j over all layers incl. background
            for (size_t l = 0; l < m; ++l) {
                wgt[l] = num[l] / denom;
                sq += wgt[l] * q[l];
            }
            for (size_t l = 0; l < m; ++l) {
                const double dn = (q[l] - sq) / denom;
                d_occ[l] = dn * ex[l];
                // d' = (d_far - D) / (d_far - d_near)
                d_dep[l] = dn * num[l] / p.gamma * (-1.0 / (p.d_far - p.d_near));
            }
        }

        for (int ch = 0; ch < 3; ++ch) g_bg[3 * pix + ch] += w_bg * gi[ch];

        const int i = static_cast<int>(pix / w), j = static_cast<int>(pix % w);
        const double px = pixel_x(j, w), py = pixel_y(i, h);

        for (size_t l = 0; l < m; ++l) {
            const Layer& L = st[l];
            const auto& face = ctx->faces[static_cast<size_t>(L.face)];
            const double* a = nv.data() + 2 * face[0];
            const double* b = nv.data() + 2 * face[1];
            const double* c = nv.data() + 2 * face[2];
            const double* vs[3] = {a, b, c};
            const auto& fuv = ctx->face_uv[static_cast<size_t>(L.face)];
            const TexSample& ts = samples[l];

            const double dC[3] = {wgt[l] * gi[0], wgt[l] * gi[1], wgt[l] * gi[2]};

            // texture texels through the bilinear weights
            for (int ch = 0; ch < 3; ++ch) {
                g_tex[(ts.r0 * ctx->tw + ts.c0) * 3 + ch] += dC[ch] * ts.w00;
                g_tex[(ts.r0 * ctx->tw + ts.c1) * 3 + ch] += dC[ch] * ts.w01;
                g_tex[(ts.r1 * ctx->tw + ts.c0) * 3 + ch] += dC[ch] * ts.w10;
                g_tex[(ts.r1 * ctx->tw + ts.c1) * 3 + ch] += dC[ch] * ts.w11;
            }
            const double dup = dC[0] * ts.dcdu[0] + dC[1] * ts.dcdu[1] + dC[2] * ts.dcdu[2];
            const double dvp = dC[0] * ts.dcdv[0] + dC[1] * ts.dcdv[1] + dC[2] * ts.dcdv[2];

            // occupancy -> nu
            double dnu = 0.0;
            if (p.mode == CompositeMode::layered) {
                if (L.nu <= 0.0) dnu = d_occ[l] * L.occ / p.sigma;
            } else {
                dnu = d_occ[l] * L.occ * (1.0 - L.occ) / p.sigma;
            }
            if (dnu != 0.0) {
                const double* u = vs[L.edge];
                const double* vv = vs[(L.edge + 1) % 3];
                const double ex = vv[0] - u[0], ey = vv[1] - u[1];
                const double qx = u[0] + L.t * ex, qy = u[1] + L.t * ey;
                double nx = px - qx, ny = py - qy;
                const double d = std::sqrt(nx * nx + ny * ny);
                if (d > 1e-12) {
                    nx /= d;
                    ny /= d;
                    if (L.inside) {
                        nx = -nx;
                        ny = -ny;
                    }
                } else {
                    // pixel exactly on the boundary: use the outward edge normal
                    nx = ey;
                    ny = -ex;
                    const double* third = vs[(L.edge + 2) % 3];
                    if (nx * (third[0] - u[0]) + ny * (third[1] - u[1]) > 0.0) {
                        nx = -nx;
                        ny = -ny;
                    }
                    const double len = std::sqrt(nx * nx + ny * ny);
                    if (len > 0.0) {
                        nx /= len;
                        ny /= len;
                    }
                }
                // d nu / d endpoint is (1-t) resp. t along the outward normal
                const int iu = face[L.edge], iv = face[(L.edge + 1) % 3];
                g_ndc[2 * iu + 0] += dnu * (1.0 - L.t) * nx;
                g_ndc[2 * iu + 1] += dnu * (1.0 - L.t) * ny;
                g_ndc[2 * iv + 0] += dnu * L.t * nx;
                g_ndc[2 * iv + 1] += dnu * L.t * ny;
            }

            if (L.inside) {
                // color and depth interpolate at the pixel's barycentrics
                double lam[3], dlam[3][3][2];
                barycentrics(a, b, c, px, py, lam, dlam);
                double dl[3];
                for (int k = 0; k < 3; ++k) {
                    dl[k] = dup * fuv[2 * k] + dvp * fuv[2 * k + 1] +
                            d_dep[l] * dv[face[static_cast<size_t>(k)]];
                    g_depth[face[static_cast<size_t>(k)]] += d_dep[l] * lam[k];
                }
                for (int k = 0; k < 3; ++k)
                    for (int vx = 0; vx < 3; ++vx) {
                        g_ndc[2 * face[static_cast<size_t>(vx)] + 0] += dl[k] * dlam[k][vx][0];
                        g_ndc[2 * face[static_cast<size_t>(vx)] + 1] += dl[k] * dlam[k][vx][1];
                    }
            } else {
                // color follows the closest boundary point; depth is the
                // centroid
                for (int k = 0; k < 3; ++k)
                    g_depth[face[static_cast<size_t>(k)]] += d_dep[l] / 3.0;
                const int k0 = L.edge, k1 = (L.edge + 1) % 3;
                const double dt =
                    dup * (fuv[2 * k1] - fuv[2 * k0]) + dvp * (fuv[2 * k1 + 1] - fuv[2 * k0 + 1]);
                if (dt != 0.0) {
                    const double* u = vs[k0];
                    const double* vv = vs[k1];
                    const double ex = vv[0] - u[0], ey = vv[1] - u[1];
                    const double wx = px - u[0], wy = py - u[1];
                    const double dd = ex * ex + ey * ey;
                    const double nn = wx * ex + wy * ey;
                    const double s_raw = dd > 0.0 ? nn / dd : 0.0;
                    if (s_raw >= 0.0 && s_raw <= 1.0 && dd > 0.0) {
                        const double dn_du[2] = {-ex - wx, -ey - wy};
                        const double dn_dv[2] = {wx, wy};
                        const double dd_du[2] = {-2 * ex, -2 * ey};
                        const double dd_dv[2] = {2 * ex, 2 * ey};
                        for (int dcmp = 0; dcmp < 2; ++dcmp) {
                            g_ndc[2 * face[static_cast<size_t>(k0)] + dcmp] +=
                                dt * (dn_du[dcmp] * dd - nn * dd_du[dcmp]) / (dd * dd);
                            g_ndc[2 * face[static_cast<size_t>(k1)] + dcmp] +=
                                dt * (dn_dv[dcmp] * dd - nn * dd_dv[dcmp]) / (dd * dd);
                        }
                    }
                }
            }
        }
    }

    tp.accumulate(ctx->ndc_id, g_ndc);
    tp.accumulate(ctx->depth_id, g_depth);
    tp.accumulate(ctx->tex_id, g_tex);
    tp.accumulate(ctx->bg_id, g_bg);
}

}  // namespace

RenderOut render_mesh(Var cam_verts, const std::vector<std::array<int, 3>>& faces,
                      const Array& uv, Var texture, Var background, const Camera& cam,
                      const RasterParams& p) {
    auto [ndc, depth] = project(cam, cam_verts);
    return rasterize(ndc, depth, faces, uv, texture, background, p);
}

RenderImages render_value(const TriMesh& posed_mesh, const Array& texture,
                          const Array& background, const Camera& cam, const RasterParams& p) {
    Tape t;
    RenderOut ro = render_mesh(t.constant(posed_mesh.vertices), posed_mesh.faces,
                               posed_mesh.uv, t.constant(texture), t.constant(background),
                               cam, p);
    return RenderImages{ro.image.value(), ro.mask.value()};
}

}  // namespace softmesh
