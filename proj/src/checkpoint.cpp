#include "softmesh/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace softmesh {

namespace {

constexpr const char* kMagic = "softmesh-ckpt 1";

static_assert(sizeof(double) == 8);

}  // namespace

void save_checkpoint(const std::string& dir, const std::map<std::string, Array>& entries) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir + "/manifest.txt");
    std::ofstream data(dir + "/data.bin", std::ios::binary);
    if (!manifest || !data)
        throw TensorError("save_checkpoint: cannot write to " + dir);
    manifest << kMagic << "\n";
    int64_t offset = 0;
    for (const auto& [name, a] : entries) {
        if (name.empty() || name.find_first_of(" \t\n") != std::string::npos)
            throw TensorError("save_checkpoint: bad entry name '" + name + "'");
        manifest << name << " " << shape_str(a.shape()) << " " << offset << "\n";
        data.write(reinterpret_cast<const char*>(a.data()),
                   static_cast<std::streamsize>(a.size() * sizeof(double)));
        offset += a.size();
    }
    manifest.flush();
    data.flush();
    if (!manifest || !data)
        throw TensorError("save_checkpoint: write failed in " + dir);
}

std::map<std::string, Array> load_checkpoint(const std::string& dir) {
    std::ifstream manifest(dir + "/manifest.txt");
    if (!manifest) throw TensorError("load_checkpoint: missing manifest in " + dir);
    std::string line;
    if (!std::getline(manifest, line) || line != kMagic)
        throw TensorError("load_checkpoint: unrecognized manifest header '" + line + "'");
    std::ifstream data(dir + "/data.bin", std::ios::binary);
    if (!data) throw TensorError("load_checkpoint: missing data.bin in " + dir);

    std::map<std::string, Array> out;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string name, shape_txt;
        int64_t offset = -1;
        if (!(ls >> name >> shape_txt >> offset))
            throw TensorError("load_checkpoint: malformed manifest line '" + line + "'");
        if (shape_txt.size() < 2 || shape_txt.front() != '[' || shape_txt.back() != ']')
            throw TensorError("load_checkpoint: malformed shape '" + shape_txt + "'");
        Shape shape;
        std::istringstream ss(shape_txt.substr(1, shape_txt.size() - 2));
        std::string tok;
        while (std::getline(ss, tok, ','))
            if (!tok.empty()) shape.push_back(std::stoll(tok));
        Array a(shape);
        data.seekg(static_cast<std::streamoff>(offset * static_cast<int64_t>(sizeof(double))));
        data.read(reinterpret_cast<char*>(a.data()),
                  static_cast<std::streamsize>(a.size() * sizeof(double)));
        if (!data)
            throw TensorError("load_checkpoint: data.bin too short for entry '" + name + "'");
        out.emplace(name, std::move(a));
    }
    return out;
}

}  // namespace softmesh
