#pragma once

#include <map>
#include <string>
#include <vector>

#include "softmesh/mesh.hpp"

namespace softmesh {

// Per-image ground truth, kept in a sidecar so the training path can load
// a dataset without it. Angles are degrees, translation is camera-frame.
struct GtRecord {
    std::string mesh_id;
    double azimuth_deg = 0.0;
    double elevation_deg = 0.0;
    double roll_deg = 0.0;
    std::array<double, 3> scale{1.0, 1.0, 1.0};
    std::array<double, 3> translation{0.0, 0.0, 0.0};
    Array mask;  // [H,W] binary silhouette
};

class Dataset {
  public:
    int64_t size() const { return static_cast<int64_t>(images_.size()); }
    int image_size() const { return image_size_; }
    const std::vector<Array>& images() const { return images_; }
    const Array& image(int64_t i) const { return images_.at(static_cast<size_t>(i)); }
    const std::string& id(int64_t i) const { return ids_.at(static_cast<size_t>(i)); }

    bool has_ground_truth() const { return !gt_.empty(); }
    const GtRecord& ground_truth(int64_t i) const;
    const TriMesh& gt_mesh(const std::string& mesh_id) const;

    void add_image(const std::string& id, Array image);
    void add_ground_truth(int64_t i, GtRecord gt);
    void add_gt_mesh(const std::string& mesh_id, TriMesh mesh);

    void save(const std::string& dir) const;
    static Dataset load(const std::string& dir, bool with_ground_truth);

  private:
    int image_size_ = 0;
    std::vector<std::string> ids_;
    std::vector<Array> images_;
    std::vector<GtRecord> gt_;  // parallel to images_ when present
    std::map<std::string, TriMesh> meshes_;
};

}  // namespace softmesh
