#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "softmesh/mesh.hpp"

namespace softmesh {

// translation + continuous 6D rotation + per-axis scale
struct AlignmentParams {
    Array trans{Shape{3}, 0.0};
    Array rot6{Shape{6}, std::vector<double>{1, 0, 0, 0, 1, 0}};
    Array scale{Shape{3}, 1.0};

    Array rotation() const;  // [3,3] via Gram-Schmidt of the two 3-vectors
};

// Center at the bounding-box midpoint and scale uniformly so the largest
// extent becomes 1; the result fits [-0.5, 0.5]^3 exactly.
TriMesh normalize_mesh(const TriMesh& mesh);
Array normalize_points(const Array& pts);

// Exact nearest neighbors over a fixed [N,3] cloud.
class KdTree3 {
  public:
    explicit KdTree3(const Array& pts);
    int64_t nearest(const double* q) const;
    double nearest_dist2(const double* q) const;

  private:
    struct Node {
        int64_t point = -1;
        int axis = 0;
        int left = -1, right = -1;
    };
    int build(std::vector<int64_t>& idx, int64_t lo, int64_t hi, int depth);
    void search(int node, const double* q, int64_t& best, double& best_d2) const;
    std::vector<Node> nodes_;
    int root_ = -1;
    std::vector<double> pts_;
};

enum class ChamferKind { l1, squared };

// 0.5 * [mean_x min_y d(x,y) + mean_y min_x d(x,y)] with d Euclidean for
// l1 and squared Euclidean for the ICP objective.
double chamfer(const Array& p1, const Array& p2, ChamferKind kind);

struct IcpResult {
    AlignmentParams params;
    Array aligned{Shape{}};
    double pre = 0.0;   // squared chamfer at identity
    double post = 0.0;  // squared chamfer at the best iterate
};

// Adaptive-moment gradient descent over the alignment parameters against
// the squared-chamfer objective with per-iteration nearest neighbors; the
// best iterate (including the identity start) is returned.
IcpResult icp_align(const Array& source, const Array& target, int iters = 100,
                    double lr = 0.01);

// binarized intersection over union; two empty masks count as identical
double mask_iou_eval(const Array& a, const Array& b, double threshold = 0.5);

struct EvalRecord {
    std::string id;
    double pre_chamfer_l1 = 0.0;
    double post_chamfer_l1 = 0.0;
    double post_chamfer_l2 = 0.0;
    double iou = -1.0;  // negative: not evaluated
    AlignmentParams align;
    int points = 0;
    int icp_iters = 0;
};

void write_report(const std::string& path, const std::vector<EvalRecord>& records);
std::vector<EvalRecord> read_report(const std::string& path);
void print_summary(std::ostream& os, const std::vector<EvalRecord>& records);

}  // namespace softmesh
