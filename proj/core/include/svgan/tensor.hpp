#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "svgan/errors.hpp"

namespace svgan {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

/// One record of the computation graph: the op's output value, the gradient
/// accumulator, links to the parent records, and the closure that pushes this
/// record's gradient into its parents.
template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false; // leaf parameter
    bool tracked = false;       // participates in some backward path
    bool backward_ran = false;  // set on the node backward() was invoked on
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    std::function<void(TensorNode<T>&)> backward_fn;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

/// Value-semantics handle to a graph node. Copies share the node.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape) {
        return filled(std::move(shape), T(0));
    }

    static Tensor filled(Shape shape, T v) {
        auto n = std::make_shared<TensorNode<T>>();
        n->value.assign(shape_size(shape), v);
        n->shape = std::move(shape);
        return Tensor(std::move(n));
    }

    static Tensor from(Shape shape, std::vector<T> data) {
        if (data.size() != shape_size(shape)) {
            throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        }
        auto n = std::make_shared<TensorNode<T>>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        return Tensor(std::move(n));
    }

    static Tensor scalar(T v) { return from({1}, {v}); }

    /// Trainable leaf: gradient accumulates across backward passes until
    /// zero_grad().
    static Tensor param(Shape shape, std::vector<T> data) {
        Tensor t = from(std::move(shape), std::move(data));
        t.node_->requires_grad = true;
        t.node_->tracked = true;
        t.node_->ensure_grad();
        return t;
    }

    bool valid() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->value.size(); }

    std::span<T> data() { return {node_->value.data(), node_->value.size()}; }
    std::span<const T> data() const { return {node_->value.data(), node_->value.size()}; }

    bool requires_grad() const { return node_->requires_grad; }
    bool tracked() const { return node_->tracked; }
    const char* op() const { return node_->op; }

    std::span<const T> grad() const {
        if (node_->grad.size() != node_->value.size()) {
            throw GraphError("grad: no gradient present for this tensor");
        }
        return {node_->grad.data(), node_->grad.size()};
    }

    void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

    /// Toggle gradient tracking for a leaf. Must not be called on op outputs.
    void set_requires_grad(bool on) {
        if (node_->backward_fn) {
            throw GraphError("set_requires_grad: not a leaf tensor");
        }
        node_->requires_grad = on;
        node_->tracked = on;
        if (on) node_->ensure_grad();
    }

    T item() const {
        if (size() != 1) {
            throw ShapeError("item: tensor has shape " + shape_str(shape()) + ", expected a scalar");
        }
        return node_->value[0];
    }

    /// Copy of the value as a fresh untracked leaf; cuts the graph.
    Tensor detach() const {
        auto n = std::make_shared<TensorNode<T>>();
        n->shape = node_->shape;
        n->value = node_->value;
        return Tensor(std::move(n));
    }

    const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

    /// Builds an op node. Tracked iff any parent is tracked; backward_fn is
    /// only retained in that case.
    static Tensor make_op(const char* op, Shape shape, std::vector<T> value,
                          std::vector<std::shared_ptr<TensorNode<T>>> parents,
                          std::function<void(TensorNode<T>&)> backward_fn) {
        auto n = std::make_shared<TensorNode<T>>();
        n->shape = std::move(shape);
        n->value = std::move(value);
        n->op = op;
        for (const auto& p : parents) {
            if (p->tracked) {
                n->tracked = true;
                break;
            }
        }
        if (n->tracked) {
            n->parents = std::move(parents);
            n->backward_fn = std::move(backward_fn);
        }
        return Tensor(std::move(n));
    }

private:
    explicit Tensor(std::shared_ptr<TensorNode<T>> n) : node_(std::move(n)) {}
    std::shared_ptr<TensorNode<T>> node_;
};

/// Reverse-mode sweep from a scalar loss. Each reachable tracked node is
/// visited exactly once in reverse topological order; gradients of shared
/// subexpressions accumulate by summation. Returns the number of nodes
/// visited. Calling backward on the same node twice is an error.
template <typename T>
std::size_t backward(const Tensor<T>& loss) {
    if (!loss.valid()) throw GraphError("backward: empty tensor handle");
    auto root = loss.node();
    if (loss.size() != 1) {
        throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    if (!std::isfinite(static_cast<double>(root->value[0]))) {
        throw NumericError("backward: loss is not finite");
    }
    if (root->backward_ran) {
        throw GraphError("backward: already ran for this loss; rebuild the graph");
    }
    root->backward_ran = true;
    if (!root->tracked) return 0;

    // Iterative post-order DFS over tracked parents.
    std::vector<TensorNode<T>*> order;
    std::unordered_set<TensorNode<T>*> visited;
    struct Frame {
        TensorNode<T>* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({root.get(), 0});
    visited.insert(root.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            TensorNode<T>* p = f.node->parents[f.next_parent++].get();
            if (p->tracked && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    for (TensorNode<T>* n : order) n->ensure_grad();
    root->grad[0] += T(1);

    std::size_t visited_count = 0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode<T>* n = *it;
        ++visited_count;
        if (n->backward_fn) n->backward_fn(*n);
    }
    return visited_count;
}

/// Number of tracked nodes reachable from `t` (including itself). Used by
/// tests to cross-check the backward visit counter.
template <typename T>
std::size_t reachable_tracked_nodes(const Tensor<T>& t) {
    if (!t.valid() || !t.node()->tracked) return 0;
    std::unordered_set<TensorNode<T>*> visited;
    std::vector<TensorNode<T>*> stack{t.node().get()};
    visited.insert(t.node().get());
    while (!stack.empty()) {
        TensorNode<T>* n = stack.back();
        stack.pop_back();
        for (const auto& p : n->parents) {
            if (p->tracked && !visited.count(p.get())) {
                visited.insert(p.get());
                stack.push_back(p.get());
            }
        }
    }
    return visited.size();
}

} // namespace svgan
