#pragma once

#include <map>
#include <string>
#include <vector>

#include "softmesh/ops.hpp"
#include "softmesh/rng.hpp"
#include "softmesh/tape.hpp"

namespace softmesh {

// Named parameter registry. Parameters carry a branch tag so the trainer can
// gate updates per optimization step. bind() attaches the store to a fresh
// tape; var() then hands out one shared leaf per parameter.
class ParamStore {
  public:
    Array& add(const std::string& name, Array init, const std::string& branch);
    bool has(const std::string& name) const { return params_.count(name) != 0; }
    Array& value(const std::string& name);
    const Array& value(const std::string& name) const;
    const std::string& branch(const std::string& name) const;
    std::vector<std::string> names() const;

    void bind(Tape& tape);
    Var var(const std::string& name);
    Array gradient(const std::string& name) const;

    std::map<std::string, Array> state() const;
    void load_state(const std::map<std::string, Array>& state);

  private:
    struct Entry {
        Array value{Shape{}};
        std::string branch;
    };
    std::map<std::string, Entry> params_;
    Tape* tape_ = nullptr;
    std::map<std::string, Var> bound_;
};

struct Linear {
    std::string w, b;
    Linear() = default;
    Linear(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out,
           const std::string& branch, Rng& rng, bool zero_init = false);
    Var operator()(ParamStore& ps, Var x) const;
};

// Perceptron with hidden relu layers; the final layer is linear.
struct MLP {
    std::vector<Linear> layers;
    MLP() = default;
    MLP(ParamStore& ps, const std::string& prefix, int64_t in, int64_t hidden,
        int n_hidden, int64_t out, const std::string& branch, Rng& rng,
        bool zero_last = false);
    Var operator()(ParamStore& ps, Var x) const;
};

struct Conv {
    std::string w, b;
    int stride = 1, pad = 1;
    Conv() = default;
    Conv(ParamStore& ps, const std::string& prefix, int64_t in_ch, int64_t out_ch,
         int kernel, int stride, int pad, const std::string& branch, Rng& rng);
    Var operator()(ParamStore& ps, Var x) const;
};

}  // namespace softmesh
