#include "softmesh/losses.hpp"

namespace softmesh {

namespace {

// separable 5-tap binomial [1,4,6,4,1]/16 as a dense 5x5 kernel
Array binomial5x5() {
    const double k[5] = {1, 4, 6, 4, 1};
    Array w({1, 1, 5, 5});
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) w[i * 5 + j] = k[i] * k[j] / 256.0;
    return w;
}

// blur + halve each channel independently; dividing by the local kernel
// mass keeps constants constant at the zero-padded borders
Var pyr_down(Var chw) {
    Tape& t = *chw.tape;
    Array norm_val{Shape{}};
    {
        Tape tmp;
        Var ones = tmp.constant(Array({1, chw.dim(1), chw.dim(2)}, 1.0));
        norm_val = conv2d(ones, tmp.constant(binomial5x5()),
                          tmp.constant(Array({1}, 0.0)), 2, 2).value();
    }
    Var w = t.constant(binomial5x5());
    Var b = t.constant(Array({1}, 0.0));
    Var norm = t.constant(norm_val);
    std::vector<Var> chans;
    for (int64_t c = 0; c < chw.dim(0); ++c)
        chans.push_back(div(conv2d(slice(chw, 0, c, 1), w, b, 2, 2), norm));
    return concat(chans, 0);
}

}  // namespace

std::vector<Var> PyramidFeatures::features(Var image_hwc) const {
    Var level = chw_from_hwc(image_hwc);
    std::vector<Var> out = {level};
    for (int l = 1; l < levels_; ++l) {
        level = pyr_down(level);
        out.push_back(level);
    }
    return out;
}

Var pixel_loss(Var a, Var b) {
    if (a.shape() != b.shape())
        throw TensorError("pixel_loss: shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    Var d = sub(a, b);
    return mean(mul(d, d));
}

Var perceptual_loss(const FeatureExtractor& fx, Var a, Var b) {
    if (a.shape() != b.shape())
        throw TensorError("perceptual_loss: shape mismatch " + shape_str(a.shape()) +
                          " vs " + shape_str(b.shape()));
    std::vector<Var> fa = fx.features(a);
    std::vector<Var> fb = fx.features(b);
    Var total;
    for (size_t l = 0; l < fa.size(); ++l) {
        Var d = sub(fa[l], fb[l]);
        Var term = mean(mul(d, d));
        total = l == 0 ? term : add(total, term);
    }
    return total;
}

Var rec_loss(const FeatureExtractor& fx, Var a, Var b, double lambda_perc) {
    return add(pixel_loss(a, b), mul(perceptual_loss(fx, a, b), lambda_perc));
}

Var regularization_loss(Var verts, const std::vector<std::array<int, 3>>& faces,
                        const std::vector<Edge>& edges,
                        const std::vector<std::vector<int>>& neighbors) {
    return add(normal_consistency_loss(verts, faces, edges), laplacian_loss(verts, neighbors));
}

Var uniformity_loss(Var batch_probs) {
    if (batch_probs.rank() != 2)
        throw TensorError("uniformity_loss: expected [B,K] probabilities, got " +
                          shape_str(batch_probs.shape()));
    const int64_t k = batch_probs.dim(1);
    Var pbar = mean(batch_probs, 0);
    return sum(abs(add(pbar, -1.0 / static_cast<double>(k))));
}

}  // namespace softmesh
