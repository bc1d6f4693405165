#pragma once

#include <string>

#include "softmesh/array.hpp"

namespace softmesh {

// 8-bit PNG export. Accepts [H,W,3] color or [H,W] grayscale in [0,1];
// values are clamped then rounded half-up.
void save_png(const std::string& path, const Array& image);

// Always returns [H,W,3] in [0,1]; palette, grayscale and 16-bit inputs
// are converted, alpha is dropped.
Array load_png(const std::string& path);

}  // namespace softmesh
