#include "softmesh/memory_bank.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace softmesh {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kLoDeg = 20.0, kHiDeg = 180.0;
constexpr int kBins = 5;

}  // namespace

double geodesic_angle(const Array& r1, const Array& r2) {
    if (r1.shape() != Shape{3, 3} || r2.shape() != Shape{3, 3})
        throw TensorError("geodesic_angle: expected [3,3] rotations");
    // trace(R1^T R2)
    double tr = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) tr += r1[3 * j + i] * r2[3 * j + i];
    return std::acos(std::clamp((tr - 1.0) / 2.0, -1.0, 1.0));
}

int angle_bin(double angle_rad) {
    const double deg = angle_rad * 180.0 / kPi;
    if (deg < kLoDeg || deg > kHiDeg) return -1;
    const double width = (kHiDeg - kLoDeg) / kBins;
    const int b = static_cast<int>((deg - kLoDeg) / width);
    return std::min(b, kBins - 1);
}

void MemoryBank::push(BankEntry entry) {
    entries_.push_back(std::move(entry));
    if (entries_.size() > capacity_) entries_.pop_front();
}

MemoryBank::Selection MemoryBank::select(const Array& code, const Array& rotation,
                                         CodeSpace space, Rng& rng) const {
    if (entries_.empty()) throw TensorError("MemoryBank: select on empty bank");

    std::vector<std::vector<int>> bins(kBins);
    for (size_t i = 0; i < entries_.size(); ++i) {
        const int b = angle_bin(geodesic_angle(rotation, entries_[i].rotation));
        if (b >= 0) bins[static_cast<size_t>(b)].push_back(static_cast<int>(i));
    }
    std::vector<int> usable;
    for (int b = 0; b < kBins; ++b)
        if (!bins[static_cast<size_t>(b)].empty()) usable.push_back(b);
    if (usable.empty()) return Selection{};

    const int b = usable[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(usable.size())))];
    Selection sel;
    sel.ok = true;
    double best = std::numeric_limits<double>::infinity();
    for (int i : bins[static_cast<size_t>(b)]) {
        const Array& stored =
            space == CodeSpace::shape ? entries_[static_cast<size_t>(i)].z_sh
                                      : entries_[static_cast<size_t>(i)].z_tx;
        if (stored.shape() != code.shape())
            throw TensorError("MemoryBank: code shape mismatch against stored entry");
        double d2 = 0.0;
        for (int64_t j = 0; j < code.size(); ++j) {
            const double d = code[j] - stored[j];
            d2 += d * d;
        }
        if (d2 < best) {
            best = d2;
            sel.index = i;
        }
    }
    return sel;
}

}  // namespace softmesh
