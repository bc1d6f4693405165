#pragma once

#include <deque>

#include "softmesh/array.hpp"
#include "softmesh/rng.hpp"

namespace softmesh {

// One processed training instance. Stored codes serve neighbor search only;
// losses re-derive parameters from the current model state.
struct BankEntry {
    int image_index = -1;
    Array image{Shape{}};
    Array z_sh{Shape{}}, z_tx{Shape{}};
    Array rotation{Shape{}};  // [3,3] of the selected candidate
};

enum class CodeSpace { shape, texture };

// radians between two rotation matrices
double geodesic_angle(const Array& r1, const Array& r2);

// bin index within the eligible [20 deg, 180 deg] range split into 5 equal
// bins; -1 when the angle falls outside
int angle_bin(double angle_rad);

// FIFO ring of the last M instances, searched by viewpoint-binned nearest
// codes.
class MemoryBank {
  public:
    explicit MemoryBank(size_t capacity = 1024) : capacity_(capacity) {}

    void push(BankEntry entry);
    size_t size() const { return entries_.size(); }
    size_t capacity() const { return capacity_; }
    const BankEntry& entry(size_t i) const { return entries_.at(i); }

    struct Selection {
        bool ok = false;  // false: no entry in the eligible viewpoint range
        int index = -1;
    };

    // Pick a uniformly random non-empty viewpoint bin, then the L2-nearest
    // stored code within it. Throws if the bank is empty.
    Selection select(const Array& code, const Array& rotation, CodeSpace space,
                     Rng& rng) const;

  private:
    size_t capacity_;
    std::deque<BankEntry> entries_;
};

}  // namespace softmesh
