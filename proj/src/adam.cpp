#include "softmesh/adam.hpp"

#include <cmath>

namespace softmesh {

void Adam::step(const std::string& name, Array& param, const Array& grad) {
    if (!param.same_shape(grad))
        throw TensorError("Adam::step: parameter '" + name + "' has shape " +
                          shape_str(param.shape()) + " but gradient has shape " +
                          shape_str(grad.shape()));
    if (!all_finite(grad))
        throw TensorError("Adam::step: non-finite gradient for parameter '" + name + "'");

    Slot& s = slots_[name];
    if (s.t == 0) {
        s.m = Array(param.shape());
        s.v = Array(param.shape());
    }
    s.t += 1;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.t));
    const int64_t n = param.size();
    for (int64_t i = 0; i < n; ++i) {
        const double g = grad[i];
        s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g;
        s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = s.m[i] / c1;
        const double vhat = s.v[i] / c2;
        param[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
}

}  // namespace softmesh
