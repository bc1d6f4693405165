#include "softmesh/config.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <sstream>

namespace softmesh {

namespace {

enum class Kind { integer, real, boolean, text, seed, family };

struct Binding {
    std::string section, key;
    Kind kind;
    void* ptr;
};

std::vector<Binding> bindings(RunConfig& c) {
    std::vector<Binding> b;
    auto add = [&](const char* sec, const char* key, Kind kind, void* ptr) {
        b.push_back({sec, key, kind, ptr});
    };
    add("run", "preset", Kind::text, &c.preset);
    add("run", "out_dir", Kind::text, &c.out_dir);

    ModelConfig& m = c.model;
    add("model", "image_size", Kind::integer, &m.image_size);
    add("model", "tex_size", Kind::integer, &m.tex_size);
    add("model", "k", Kind::integer, &m.K);
    add("model", "mesh_subdiv", Kind::integer, &m.mesh_subdiv);
    add("model", "deform_hidden", Kind::integer, &m.deform_hidden);
    add("model", "max_sh", Kind::integer, &m.max_sh);
    add("model", "max_tx", Kind::integer, &m.max_tx);
    add("model", "max_bg", Kind::integer, &m.max_bg);
    add("model", "auto_decoder", Kind::boolean, &m.auto_decoder);
    add("model", "n_images", Kind::integer, &m.n_images);
    add("model", "shared_latents", Kind::boolean, &m.shared_latents);
    add("model", "learn_background", Kind::boolean, &m.learn_background);
    add("model", "fov_camera", Kind::boolean, &m.fov_camera);
    add("model", "progressive", Kind::boolean, &m.progressive);
    add("model", "seed", Kind::seed, &m.seed);

    PoseRanges& p = m.ranges;
    add("pose", "scale_center", Kind::real, &p.scale_center);
    add("pose", "scale_half", Kind::real, &p.scale_half);
    add("pose", "txy_half", Kind::real, &p.txy_half);
    add("pose", "tz_center", Kind::real, &p.tz_center);
    add("pose", "tz_half", Kind::real, &p.tz_half);
    add("pose", "elev_center_deg", Kind::real, &p.elev_center_deg);
    add("pose", "elev_half_deg", Kind::real, &p.elev_half_deg);
    add("pose", "roll_center_deg", Kind::real, &p.roll_center_deg);
    add("pose", "roll_half_deg", Kind::real, &p.roll_half_deg);

    TrainConfig& t = c.train;
    add("train", "batch_size", Kind::integer, &t.batch_size);
    add("train", "lr", Kind::real, &t.lr);
    add("train", "lr_final_div", Kind::real, &t.lr_final_div);
    add("train", "lr_tail_fraction", Kind::real, &t.lr_tail_fraction);
    add("train", "stage1_iters", Kind::integer, &t.stage_iters[0]);
    add("train", "stage2_iters", Kind::integer, &t.stage_iters[1]);
    add("train", "stage3_iters", Kind::integer, &t.stage_iters[2]);
    add("train", "stage4_iters", Kind::integer, &t.stage_iters[3]);
    add("train", "sigma1", Kind::real, &t.sigma[0]);
    add("train", "sigma2", Kind::real, &t.sigma[1]);
    add("train", "sigma3", Kind::real, &t.sigma[2]);
    add("train", "sigma4", Kind::real, &t.sigma[3]);
    add("train", "max_layers", Kind::integer, &t.max_layers);
    add("train", "texture_avg_p", Kind::real, &t.texture_avg_p);
    add("train", "average_texture_stage1", Kind::boolean, &t.average_texture_stage1);
    add("train", "texture_avg_last_stage", Kind::boolean, &t.texture_avg_last_stage);
    add("train", "neighbor_from_stage", Kind::integer, &t.neighbor_from_stage);
    add("train", "lambda_nbr", Kind::real, &t.weights.nbr);
    add("train", "lambda_reg", Kind::real, &t.weights.reg);
    add("train", "lambda_perc", Kind::real, &t.weights.perc);
    add("train", "lambda_uni", Kind::real, &t.weights.uni);
    add("train", "stage1_deform_at", Kind::real, &t.stage1_deform_at);
    add("train", "stage1_scale_at", Kind::real, &t.stage1_scale_at);
    add("train", "bank_capacity", Kind::integer, &t.bank_capacity);
    add("train", "log_every", Kind::integer, &t.log_every);
    add("train", "checkpoint_every", Kind::integer, &t.checkpoint_every);
    add("train", "seed", Kind::seed, &t.seed);

    SyntheticSpec& d = c.data;
    add("data", "family", Kind::family, &d.family);
    add("data", "n_instances", Kind::integer, &d.n_instances);
    add("data", "n_views", Kind::integer, &d.n_views);
    add("data", "image_size", Kind::integer, &d.image_size);
    add("data", "subdiv", Kind::integer, &d.subdiv);
    add("data", "deform_amp", Kind::real, &d.deform_amp);
    add("data", "sigma", Kind::real, &d.sigma);
    add("data", "white_background", Kind::boolean, &d.white_background);
    add("data", "randomize_translation", Kind::boolean, &d.randomize_translation);
    add("data", "elongation", Kind::real, &d.elongation);
    add("data", "seed", Kind::seed, &d.seed);
    return b;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t z = s.find_last_not_of(" \t\r");
    return s.substr(a, z - a + 1);
}

void assign(const Binding& b, const std::string& value) {
    const std::string where = b.section + "." + b.key;
    try {
        switch (b.kind) {
            case Kind::integer:
                *static_cast<int*>(b.ptr) = std::stoi(value);
                break;
            case Kind::real:
                *static_cast<double*>(b.ptr) = std::stod(value);
                break;
            case Kind::boolean:
                if (value == "true" || value == "1")
                    *static_cast<bool*>(b.ptr) = true;
                else if (value == "false" || value == "0")
                    *static_cast<bool*>(b.ptr) = false;
                else
                    throw TensorError("boolean");
                break;
            case Kind::text:
                *static_cast<std::string*>(b.ptr) = value;
                break;
            case Kind::seed:
                *static_cast<uint64_t*>(b.ptr) = std::stoull(value);
                break;
            case Kind::family:
                if (value == "ellipsoid")
                    *static_cast<SceneFamily*>(b.ptr) = SceneFamily::ellipsoid;
                else if (value == "two_box")
                    *static_cast<SceneFamily*>(b.ptr) = SceneFamily::two_box;
                else
                    throw TensorError("family");
                break;
        }
    } catch (const std::exception&) {
        throw TensorError("config: bad value '" + value + "' for " + where);
    }
}

std::string render(const Binding& b) {
    std::ostringstream os;
    os.precision(17);
    switch (b.kind) {
        case Kind::integer: os << *static_cast<int*>(b.ptr); break;
        case Kind::real: os << *static_cast<double*>(b.ptr); break;
        case Kind::boolean: os << (*static_cast<bool*>(b.ptr) ? "true" : "false"); break;
        case Kind::text: os << *static_cast<std::string*>(b.ptr); break;
        case Kind::seed: os << *static_cast<uint64_t*>(b.ptr); break;
        case Kind::family:
            os << (*static_cast<SceneFamily*>(b.ptr) == SceneFamily::ellipsoid
                       ? "ellipsoid"
                       : "two_box");
            break;
    }
    return os.str();
}

}  // namespace

RunConfig RunConfig::from_preset(const std::string& name) {
    RunConfig c;
    c.preset = name;
    if (name == "desk") {
        c.model.mesh_subdiv = 2;
        c.train.stage_iters = {1000, 3000, 3000, 3000};
    } else if (name == "synthetic") {
        c.model.mesh_subdiv = 3;
        c.model.learn_background = false;
        c.train.stage_iters = {50000, 250000, 250000, 250000};
    } else if (name == "real") {
        c.model.mesh_subdiv = 3;
        c.model.ranges = PoseRanges::real();
        c.model.fov_camera = true;
        c.train.stage_iters = {750000, 750000, 750000, 750000};
        c.train.texture_avg_last_stage = false;
        c.data.white_background = false;
    } else {
        throw TensorError("config: unknown preset '" + name + "'");
    }
    c.train.out_dir = c.out_dir;
    return c;
}

RunConfig parse_config(std::istream& is, RunConfig base) {
    std::vector<Binding> reg = bindings(base);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']')
                throw TensorError("config: malformed section at line " +
                                  std::to_string(lineno));
            section = trim(s.substr(1, s.size() - 2));
            continue;
        }
        const size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw TensorError("config: expected key = value at line " +
                              std::to_string(lineno));
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        auto it = std::find_if(reg.begin(), reg.end(), [&](const Binding& b) {
            return b.section == section && b.key == key;
        });
        if (it == reg.end())
            throw TensorError("config: unknown key '" + section + "." + key +
                              "' at line " + std::to_string(lineno));
        assign(*it, value);
    }
    base.train.out_dir = base.out_dir;
    return base;
}

RunConfig load_config(const std::string& path, const RunConfig& base) {
    std::ifstream is(path);
    if (!is) throw TensorError("config: cannot open " + path);
    return parse_config(is, base);
}

void serialize_config(std::ostream& os, const RunConfig& cfg) {
    RunConfig& mut = const_cast<RunConfig&>(cfg);
    std::vector<Binding> reg = bindings(mut);
    std::string section;
    for (const Binding& b : reg) {
        if (b.section != section) {
            if (!section.empty()) os << "\n";
            section = b.section;
            os << "[" << section << "]\n";
        }
        os << b.key << " = " << render(b) << "\n";
    }
}

void save_config(const std::string& path, const RunConfig& cfg) {
    std::ofstream os(path);
    if (!os) throw TensorError("config: cannot write " + path);
    serialize_config(os, cfg);
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const size_t eq = assignment.find('=');
    const size_t dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw TensorError("config: override must look like section.key=value, got '" +
                          assignment + "'");
    const std::string section = trim(assignment.substr(0, dot));
    const std::string key = trim(assignment.substr(dot + 1, eq - dot - 1));
    const std::string value = trim(assignment.substr(eq + 1));
    std::vector<Binding> reg = bindings(cfg);
    auto it = std::find_if(reg.begin(), reg.end(), [&](const Binding& b) {
        return b.section == section && b.key == key;
    });
    if (it == reg.end())
        throw TensorError("config: unknown key '" + section + "." + key + "'");
    assign(*it, value);
    cfg.train.out_dir = cfg.out_dir;
}

}  // namespace softmesh
