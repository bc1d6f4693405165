#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "softmesh/evaluation.hpp"

namespace softmesh {

namespace {

using nlohmann::json;

json array_to_json(const Array& a) {
    json out = json::array();
    for (int64_t i = 0; i < a.size(); ++i) out.push_back(a[i]);
    return out;
}

Array array_from_json(const json& j, const Shape& shape) {
    std::vector<double> data;
    data.reserve(static_cast<size_t>(numel(shape)));
    for (const auto& v : j) data.push_back(v.get<double>());
    if (static_cast<int64_t>(data.size()) != numel(shape))
        throw TensorError("report: field has " + std::to_string(data.size()) +
                          " values, expected " + std::to_string(numel(shape)));
    return Array(shape, std::move(data));
}

double mean_of(const std::vector<EvalRecord>& records, double (*get)(const EvalRecord&)) {
    if (records.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : records) s += get(r);
    return s / static_cast<double>(records.size());
}

}  // namespace

void write_report(const std::string& path, const std::vector<EvalRecord>& records) {
    std::ofstream os(path);
    if (!os) throw TensorError("write_report: cannot open " + path);
    os.precision(17);
    for (const auto& r : records) {
        json j;
        j["id"] = r.id;
        j["pre_chamfer_l1"] = r.pre_chamfer_l1;
        j["post_chamfer_l1"] = r.post_chamfer_l1;
        j["post_chamfer_l2"] = r.post_chamfer_l2;
        j["iou"] = r.iou;
        j["trans"] = array_to_json(r.align.trans);
        j["rot6"] = array_to_json(r.align.rot6);
        j["scale"] = array_to_json(r.align.scale);
        j["points"] = r.points;
        j["icp_iters"] = r.icp_iters;
        os << j.dump() << "\n";
    }
    if (!os) throw TensorError("write_report: write failed for " + path);
}

std::vector<EvalRecord> read_report(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw TensorError("read_report: cannot open " + path);
    std::vector<EvalRecord> records;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw TensorError("read_report: malformed line " +
                              std::to_string(records.size() + 1) + " in " + path);
        EvalRecord r;
        r.id = j.at("id").get<std::string>();
        r.pre_chamfer_l1 = j.at("pre_chamfer_l1").get<double>();
        r.post_chamfer_l1 = j.at("post_chamfer_l1").get<double>();
        r.post_chamfer_l2 = j.at("post_chamfer_l2").get<double>();
        r.iou = j.at("iou").get<double>();
        r.align.trans = array_from_json(j.at("trans"), Shape{3});
        r.align.rot6 = array_from_json(j.at("rot6"), Shape{6});
        r.align.scale = array_from_json(j.at("scale"), Shape{3});
        r.points = j.at("points").get<int>();
        r.icp_iters = j.at("icp_iters").get<int>();
        records.push_back(std::move(r));
    }
    return records;
}

void print_summary(std::ostream& os, const std::vector<EvalRecord>& records) {
    os << "instances: " << records.size() << "\n";
    if (records.empty()) return;
    os << "chamfer-l1 pre:  mean " << mean_of(records, [](const EvalRecord& r) {
        return r.pre_chamfer_l1;
    }) << "\n";
    os << "chamfer-l1 post: mean " << mean_of(records, [](const EvalRecord& r) {
        return r.post_chamfer_l1;
    }) << "\n";
    std::vector<double> post;
    post.reserve(records.size());
    for (const auto& r : records) post.push_back(r.post_chamfer_l1);
    std::sort(post.begin(), post.end());
    os << "chamfer-l1 post: median " << post[post.size() / 2] << "\n";
    int with_iou = 0;
    double iou_sum = 0.0;
    for (const auto& r : records) {
        if (r.iou >= 0.0) {
            ++with_iou;
            iou_sum += r.iou;
        }
    }
    if (with_iou > 0)
        os << "mask iou: mean " << iou_sum / with_iou << " over " << with_iou
           << " instances\n";
}

}  // namespace softmesh
