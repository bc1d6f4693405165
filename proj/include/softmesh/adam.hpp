#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "softmesh/array.hpp"

namespace softmesh {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are keyed by parameter name;
// a parameter that is skipped in a given step keeps its moments and step
// count untouched.
class Adam {
public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    void step(const std::string& name, Array& param, const Array& grad);

    double lr() const { return cfg_.lr; }
    void set_lr(double lr) { cfg_.lr = lr; }

    struct Slot {
        Array m, v;
        int64_t t = 0;
    };

    std::map<std::string, Slot>& slots() { return slots_; }
    const std::map<std::string, Slot>& slots() const { return slots_; }

private:
    AdamConfig cfg_;
    std::map<std::string, Slot> slots_;
};

}  // namespace softmesh
