#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "softmesh/array.hpp"

namespace softmesh {

class Tape;

// Handle to a node on a tape. Cheap to copy; invalid when default-constructed.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Array& value() const;
    const Shape& shape() const;
    int rank() const;
    int64_t dim(int i) const;
    double item() const { return value().item(); }
};

// Reverse-mode tape. Forward values are computed eagerly as ops are
// recorded; backward() replays the recorded closures in strict reverse
// creation order. One tape per training step; gradients accumulate by
// addition and a second backward() without a fresh tape is an error.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Backward closures receive the tape and the id of their own node, so
    // they can read the incoming gradient via grad(self) and the forward
    // value via value(self).
    using BackwardFn = std::function<void(Tape&, int self)>;

    Var leaf(Array value) { return push(std::move(value), nullptr); }
    Var constant(Array value) { return push(std::move(value), nullptr); }

    Var record(Array value, BackwardFn backward) {
        return push(std::move(value), std::move(backward));
    }

    void backward(const Var& loss);

    const Array& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }

    // Accumulated gradient, allocated as zeros on first touch.
    Array& grad(int id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.grad_alloc) {
            n.grad = Array(n.value.shape());
            n.grad_alloc = true;
        }
        return n.grad;
    }

    bool has_grad(int id) const { return nodes_[static_cast<size_t>(id)].grad_alloc; }

    // Copy of the gradient of v; zeros if v never received one.
    Array grad_of(const Var& v) const {
        const Node& n = nodes_[static_cast<size_t>(v.id)];
        if (!n.grad_alloc) return Array(n.value.shape());
        return n.grad;
    }

    void accumulate(int id, const Array& g);

    size_t num_nodes() const { return nodes_.size(); }
    bool backward_done() const { return backward_done_; }

private:
    struct Node {
        Array value;
        Array grad;
        bool grad_alloc = false;
        BackwardFn backward;
    };

    Var push(Array value, BackwardFn backward) {
        nodes_.push_back(Node{std::move(value), Array(), false, std::move(backward)});
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

inline const Array& Var::value() const { return tape->value(id); }
inline const Shape& Var::shape() const { return tape->value(id).shape(); }
inline int Var::rank() const { return value().rank(); }
inline int64_t Var::dim(int i) const { return value().dim(i); }

}  // namespace softmesh
