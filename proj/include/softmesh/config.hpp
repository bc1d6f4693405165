#pragma once

#include <iosfwd>
#include <string>

#include "softmesh/synthetic.hpp"
#include "softmesh/trainer.hpp"

namespace softmesh {

// Everything a run needs, grouped by the structs it configures. Parsed from
// flat `key = value` files with [section] headers; unknown keys are errors.
struct RunConfig {
    std::string preset = "desk";
    std::string out_dir = "out";
    ModelConfig model;
    PoseRanges& ranges() { return model.ranges; }
    TrainConfig train;
    SyntheticSpec data;

    static RunConfig from_preset(const std::string& name);
};

RunConfig parse_config(std::istream& is, RunConfig base);
RunConfig load_config(const std::string& path, const RunConfig& base);
void serialize_config(std::ostream& os, const RunConfig& cfg);
void save_config(const std::string& path, const RunConfig& cfg);

// single `section.key=value` override, same validation as the file parser
void apply_override(RunConfig& cfg, const std::string& assignment);

}  // namespace softmesh
