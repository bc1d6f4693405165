#include "softmesh/array.hpp"

#include <cmath>

namespace softmesh {

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    out += "]";
    return out;
}

bool all_finite(const Array& a) {
    for (double v : a.vec())
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace softmesh
