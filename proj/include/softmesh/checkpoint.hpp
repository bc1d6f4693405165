#pragma once

#include <map>
#include <string>

#include "softmesh/array.hpp"

namespace softmesh {

// On-disk format: a directory holding manifest.txt and data.bin. The
// manifest starts with a versioned magic line, then one line per entry:
// name, shape, element offset into data.bin. data.bin is raw
// little-endian doubles in manifest order.
void save_checkpoint(const std::string& dir, const std::map<std::string, Array>& entries);
std::map<std::string, Array> load_checkpoint(const std::string& dir);

}  // namespace softmesh
