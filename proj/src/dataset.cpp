#include "softmesh/dataset.hpp"

#include <sys/stat.h>

#include <cerrno>
#include <fstream>
#include <sstream>

#include "softmesh/image.hpp"

namespace softmesh {

namespace {

void make_dir(const std::string& path) {
    if (mkdir(path.c_str(), 0755) != 0 && errno != EEXIST)
        throw TensorError("dataset: cannot create directory " + path);
}

std::string mask_name(const std::string& id) { return "mask_" + id + ".png"; }

}  // namespace

const GtRecord& Dataset::ground_truth(int64_t i) const {
    if (gt_.empty())
        throw TensorError("dataset: ground truth was not loaded");
    return gt_.at(static_cast<size_t>(i));
}

const TriMesh& Dataset::gt_mesh(const std::string& mesh_id) const {
    auto it = meshes_.find(mesh_id);
    if (it == meshes_.end())
        throw TensorError("dataset: unknown ground-truth mesh " + mesh_id);
    return it->second;
}

void Dataset::add_image(const std::string& id, Array image) {
    if (image.rank() != 3 || image.dim(2) != 3 || image.dim(0) != image.dim(1))
        throw TensorError("dataset: expected square [S,S,3] image, got " +
                          shape_str(image.shape()));
    const int s = static_cast<int>(image.dim(0));
    if (image_size_ == 0) image_size_ = s;
    if (s != image_size_)
        throw TensorError("dataset: image size mismatch, " + std::to_string(s) + " vs " +
                          std::to_string(image_size_));
    ids_.push_back(id);
    images_.push_back(std::move(image));
}

void Dataset::add_ground_truth(int64_t i, GtRecord gt) {
    if (i != static_cast<int64_t>(gt_.size()))
        throw TensorError("dataset: ground truth must be added in image order");
    if (i >= size()) throw TensorError("dataset: ground truth for missing image");
    gt_.push_back(std::move(gt));
}

void Dataset::add_gt_mesh(const std::string& mesh_id, TriMesh mesh) {
    meshes_[mesh_id] = std::move(mesh);
}

void Dataset::save(const std::string& dir) const {
    make_dir(dir);
    make_dir(dir + "/images");
    std::ofstream man(dir + "/manifest.txt");
    if (!man) throw TensorError("dataset: cannot write manifest in " + dir);
    man << "softmesh-dataset 1\n";
    man << "image_size " << image_size_ << "\n";
    man << "images " << ids_.size() << "\n";
    for (size_t i = 0; i < ids_.size(); ++i) {
        const std::string file = "images/" + ids_[i] + ".png";
        man << ids_[i] << " " << file << "\n";
        save_png(dir + "/" + file, images_[i]);
    }

    if (gt_.empty()) return;
    make_dir(dir + "/gt");
    std::ofstream side(dir + "/gt/gt.txt");
    side.precision(17);
    for (size_t i = 0; i < gt_.size(); ++i) {
        const GtRecord& g = gt_[i];
        side << ids_[i] << " " << g.mesh_id << " " << g.azimuth_deg << " "
             << g.elevation_deg << " " << g.roll_deg;
        for (double s : g.scale) side << " " << s;
        for (double t : g.translation) side << " " << t;
        side << " " << mask_name(ids_[i]) << "\n";
        Array rgb({g.mask.dim(0), g.mask.dim(1), 3});
        for (int64_t p = 0; p < g.mask.size(); ++p)
            for (int c = 0; c < 3; ++c) rgb[3 * p + c] = g.mask[p];
        save_png(dir + "/gt/" + mask_name(ids_[i]), rgb);
    }
    for (const auto& [mesh_id, mesh] : meshes_)
        save_obj(dir + "/gt/" + mesh_id + ".obj", mesh);
}

Dataset Dataset::load(const std::string& dir, bool with_ground_truth) {
    std::ifstream man(dir + "/manifest.txt");
    if (!man) throw TensorError("dataset: cannot open " + dir + "/manifest.txt");
    std::string magic;
    int version = 0;
    man >> magic >> version;
    if (magic != "softmesh-dataset" || version != 1)
        throw TensorError("dataset: unrecognized manifest in " + dir);
    std::string key;
    int image_size = 0;
    size_t count = 0;
    man >> key >> image_size;
    if (key != "image_size") throw TensorError("dataset: manifest missing image_size");
    man >> key >> count;
    if (key != "images") throw TensorError("dataset: manifest missing image count");

    Dataset ds;
    for (size_t i = 0; i < count; ++i) {
        std::string id, file;
        if (!(man >> id >> file))
            throw TensorError("dataset: manifest truncated at entry " + std::to_string(i));
        ds.add_image(id, load_png(dir + "/" + file));
    }
    if (ds.image_size_ != image_size)
        throw TensorError("dataset: manifest image_size disagrees with images");
    if (!with_ground_truth) return ds;

    std::ifstream side(dir + "/gt/gt.txt");
    if (!side) throw TensorError("dataset: ground truth requested but absent in " + dir);
    for (int64_t i = 0; i < ds.size(); ++i) {
        GtRecord g;
        std::string id, mask_file;
        if (!(side >> id >> g.mesh_id >> g.azimuth_deg >> g.elevation_deg >> g.roll_deg >>
              g.scale[0] >> g.scale[1] >> g.scale[2] >> g.translation[0] >>
              g.translation[1] >> g.translation[2] >> mask_file))
            throw TensorError("dataset: ground-truth sidecar truncated at entry " +
                              std::to_string(i));
        if (id != ds.id(i))
            throw TensorError("dataset: ground-truth order mismatch at " + id);
        Array rgb = load_png(dir + "/gt/" + mask_file);
        g.mask = Array({rgb.dim(0), rgb.dim(1)});
        for (int64_t p = 0; p < g.mask.size(); ++p) g.mask[p] = rgb[3 * p];
        ds.gt_.push_back(std::move(g));
        if (!ds.meshes_.count(ds.gt_.back().mesh_id))
            ds.add_gt_mesh(ds.gt_.back().mesh_id,
                           load_obj(dir + "/gt/" + ds.gt_.back().mesh_id + ".obj"));
    }
    return ds;
}

}  // namespace softmesh
