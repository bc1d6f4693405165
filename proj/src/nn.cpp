#include "softmesh/nn.hpp"

#include <cmath>

namespace softmesh {

Array& ParamStore::add(const std::string& name, Array init, const std::string& branch) {
    if (params_.count(name)) throw TensorError("ParamStore: duplicate parameter " + name);
    if (name.find_first_of(" \t\n") != std::string::npos)
        throw TensorError("ParamStore: parameter name may not contain whitespace: " + name);
    Entry e;
    e.value = std::move(init);
    e.branch = branch;
    return params_.emplace(name, std::move(e)).first->second.value;
}

Array& ParamStore::value(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw TensorError("ParamStore: unknown parameter " + name);
    return it->second.value;
}

const Array& ParamStore::value(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw TensorError("ParamStore: unknown parameter " + name);
    return it->second.value;
}

const std::string& ParamStore::branch(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw TensorError("ParamStore: unknown parameter " + name);
    return it->second.branch;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [k, v] : params_) out.push_back(k);
    return out;
}

void ParamStore::bind(Tape& tape) {
    tape_ = &tape;
    bound_.clear();
}

Var ParamStore::var(const std::string& name) {
    if (!tape_) throw TensorError("ParamStore: var() before bind()");
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Var v = tape_->leaf(value(name));
    bound_.emplace(name, v);
    return v;
}

Array ParamStore::gradient(const std::string& name) const {
    if (!tape_) throw TensorError("ParamStore: gradient() before bind()");
    auto it = bound_.find(name);
    if (it == bound_.end()) return Array(value(name).shape(), 0.0);
    return tape_->grad_of(it->second);
}

std::map<std::string, Array> ParamStore::state() const {
    std::map<std::string, Array> out;
    for (const auto& [k, v] : params_) out.emplace(k, v.value);
    return out;
}

void ParamStore::load_state(const std::map<std::string, Array>& state) {
    for (const auto& [k, v] : state) {
        auto it = params_.find(k);
        if (it == params_.end()) throw TensorError("ParamStore: checkpoint has unknown parameter " + k);
        if (it->second.value.shape() != v.shape())
            throw TensorError("ParamStore: shape mismatch loading " + k + ": have " +
                              shape_str(it->second.value.shape()) + ", checkpoint " +
                              shape_str(v.shape()));
        it->second.value = v;
    }
}

namespace {

Array he_normal(Rng& rng, const Shape& shape, int64_t fan_in) {
    Array w(shape);
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, std);
    return w;
}

}  // namespace

Linear::Linear(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out,
               const std::string& branch, Rng& rng, bool zero_init)
    : w(prefix + ".w"), b(prefix + ".b") {
    ps.add(w, zero_init ? Array({in, out}, 0.0) : he_normal(rng, {in, out}, in), branch);
    ps.add(b, Array({out}, 0.0), branch);
}

Var Linear::operator()(ParamStore& ps, Var x) const {
    const bool vec = x.rank() == 1;
    if (vec) x = reshape(x, {1, x.dim(0)});
    Var y = add(matmul(x, ps.var(w)), ps.var(b));
    if (vec) y = reshape(y, {y.dim(1)});
    return y;
}

MLP::MLP(ParamStore& ps, const std::string& prefix, int64_t in, int64_t hidden,
         int n_hidden, int64_t out, const std::string& branch, Rng& rng, bool zero_last) {
    int64_t cur = in;
    for (int i = 0; i < n_hidden; ++i) {
        layers.emplace_back(ps, prefix + ".h" + std::to_string(i), cur, hidden, branch, rng);
        cur = hidden;
    }
    layers.emplace_back(ps, prefix + ".out", cur, out, branch, rng, zero_last);
}

Var MLP::operator()(ParamStore& ps, Var x) const {
    for (size_t i = 0; i + 1 < layers.size(); ++i) x = relu(layers[i](ps, x));
    return layers.back()(ps, x);
}

Conv::Conv(ParamStore& ps, const std::string& prefix, int64_t in_ch, int64_t out_ch,
           int kernel, int stride_, int pad_, const std::string& branch, Rng& rng)
    : w(prefix + ".w"), b(prefix + ".b"), stride(stride_), pad(pad_) {
    ps.add(w, he_normal(rng, {out_ch, in_ch, kernel, kernel}, in_ch * kernel * kernel),
           branch);
    ps.add(b, Array({out_ch}, 0.0), branch);
}

Var Conv::operator()(ParamStore& ps, Var x) const {
    return conv2d(x, ps.var(w), ps.var(b), stride, pad);
}

}  // namespace softmesh
