#pragma once

#include <functional>
#include <string>
#include <vector>

#include "softmesh/ops.hpp"
#include "softmesh/tape.hpp"

namespace softmesh::oracles {

inline double rel_err(double a, double b, double floor = 1e-6) {
    const double d = std::abs(a - b);
    const double s = std::max({std::abs(a), std::abs(b), floor});
    return d / s;
}

// Builds the computation once for the analytic gradients and 2N more times
// for central differences. `build` must construct the loss from leaves it
// creates on the given tape, in the same order as `inputs`.
using BuildFn = std::function<Var(Tape&, std::vector<Var>&)>;

struct FdReport {
    double max_rel = 0.0;
    std::string where;
};

inline double eval_loss(const std::vector<Array>& inputs, const BuildFn& build) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(inputs.size());
    for (const Array& a : inputs) leaves.push_back(tape.leaf(a));
    return build(tape, leaves).item();
}

inline FdReport fd_check(std::vector<Array> inputs, const BuildFn& build, double h = 1e-5,
                         double floor = 1e-6) {
    FdReport rep;
    std::vector<Array> grads;
    {
        Tape tape;
        std::vector<Var> leaves;
        for (const Array& a : inputs) leaves.push_back(tape.leaf(a));
        Var loss = build(tape, leaves);
        tape.backward(loss);
        for (const Var& v : leaves) grads.push_back(tape.grad_of(v));
    }
    for (size_t k = 0; k < inputs.size(); ++k) {
        for (int64_t i = 0; i < inputs[k].size(); ++i) {
            const double orig = inputs[k][i];
            inputs[k][i] = orig + h;
            const double fp = eval_loss(inputs, build);
            inputs[k][i] = orig - h;
            const double fm = eval_loss(inputs, build);
            inputs[k][i] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double e = rel_err(grads[k][i], fd, floor);
            if (e > rep.max_rel) {
                rep.max_rel = e;
                rep.where = "input " + std::to_string(k) + " elem " + std::to_string(i) +
                            " analytic " + std::to_string(grads[k][i]) + " fd " +
                            std::to_string(fd);
            }
        }
    }
    return rep;
}

}  // namespace softmesh::oracles
