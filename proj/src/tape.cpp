#include "softmesh/tape.hpp"

namespace softmesh {

void Tape::backward(const Var& loss) {
    if (backward_done_)
        throw TensorError("Tape::backward called twice; use a fresh tape per step");
    if (loss.tape != this) throw TensorError("Tape::backward: loss lives on another tape");
    if (numel(value(loss.id).shape()) != 1)
        throw TensorError("Tape::backward: loss must be scalar, got shape " +
                          shape_str(value(loss.id).shape()));
    backward_done_ = true;

    grad(loss.id)[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (!n.grad_alloc || !n.backward) continue;
        n.backward(*this, i);
    }
}

void Tape::accumulate(int id, const Array& g) {
    Array& dst = grad(id);
    if (!dst.same_shape(g))
        throw TensorError("Tape::accumulate: gradient shape " + shape_str(g.shape()) +
                          " does not match node shape " + shape_str(dst.shape()));
    double* d = dst.data();
    const double* s = g.data();
    const int64_t n = g.size();
    for (int64_t i = 0; i < n; ++i) d[i] += s[i];
}

}  // namespace softmesh
