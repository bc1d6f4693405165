#pragma once

#include <memory>
#include <vector>

#include "softmesh/mesh_losses.hpp"
#include "softmesh/ops.hpp"

namespace softmesh {

struct LossWeights {
    double nbr = 1.0;
    double reg = 0.01;
    double perc = 10.0;
    double uni = 0.02;
};

// Pluggable feature maps for the perceptual term.
class FeatureExtractor {
  public:
    virtual ~FeatureExtractor() = default;
    virtual std::vector<Var> features(Var image_hwc) const = 0;
};

// Default features: a 3-level Gaussian pyramid (raw image plus two
// blur-and-halve levels, 5-tap binomial kernel).
class PyramidFeatures : public FeatureExtractor {
  public:
    explicit PyramidFeatures(int levels = 3) : levels_(levels) {}
    std::vector<Var> features(Var image_hwc) const override;

  private:
    int levels_;
};

Var pixel_loss(Var a, Var b);
Var perceptual_loss(const FeatureExtractor& fx, Var a, Var b);
Var rec_loss(const FeatureExtractor& fx, Var a, Var b, double lambda_perc = 10.0);

// normal consistency + laplacian smoothing
Var regularization_loss(Var verts, const std::vector<std::array<int, 3>>& faces,
                        const std::vector<Edge>& edges,
                        const std::vector<std::vector<int>>& neighbors);

// batch_probs [B,K]: sum_k |mean_b p_bk - 1/K|
Var uniformity_loss(Var batch_probs);

}  // namespace softmesh
