#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace chamber::nn {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

inline void check(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

namespace detail {
inline std::atomic<uint64_t>& seq_counter() {
    static std::atomic<uint64_t> c{0};
    return c;
}
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}
} // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

/// RAII switch that disables tape recording (inference / feature extraction).
struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = prev; }
};

template <class T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;   // empty until touched by backward / zero_grad
    bool requires_grad = false;
    bool consumed = false; // set once backward has run through this node
    uint64_t seq = 0;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backward;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

/// Shared handle to a value (and, when part of an active graph, its tape
/// entry). Copies alias the same storage.
template <class T>
class TensorT {
public:
    TensorT() = default;

    static TensorT zeros(Shape shape) { return filled(std::move(shape), T(0)); }

    static TensorT filled(Shape shape, T v) {
        TensorT t;
        t.node_ = std::make_shared<Node<T>>();
        t.node_->shape = std::move(shape);
        t.node_->value.assign(size_t(numel(t.node_->shape)), v);
        t.node_->seq = detail::seq_counter()++;
        return t;
    }

    static TensorT from(Shape shape, std::vector<T> data) {
        check(numel(shape) == int64_t(data.size()),
              "tensor data length " + std::to_string(data.size()) +
                  " does not match shape " + shape_str(shape));
        TensorT t;
        t.node_ = std::make_shared<Node<T>>();
        t.node_->shape = std::move(shape);
        t.node_->value = std::move(data);
        t.node_->seq = detail::seq_counter()++;
        return t;
    }

    static TensorT scalar(T v) { return from({}, {v}); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t size() const { return int64_t(node_->value.size()); }
    int64_t dim(size_t i) const { return node_->shape[i]; }
    size_t rank() const { return node_->shape.size(); }

    std::vector<T>& data() { return node_->value; }
    const std::vector<T>& data() const { return node_->value; }
    std::vector<T>& grad() { return node_->grad; }
    const std::vector<T>& grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }

    bool requires_grad() const { return node_->requires_grad; }
    TensorT& set_requires_grad(bool rg = true) {
        node_->requires_grad = rg;
        return *this;
    }

    void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }
    void drop_grad() { node_->grad.clear(); }

    T item() const {
        check(node_->value.size() == 1, "item() on non-scalar tensor " + shape_str(node_->shape));
        return node_->value[0];
    }

    std::shared_ptr<Node<T>> node() const { return node_; }

    /// Records an op result on the tape (when grad mode is on and some input
    /// needs gradients). `backward` reads node.grad and accumulates into the
    /// parents' grads.
    static TensorT op_result(Shape shape, std::vector<T> value,
                             std::vector<TensorT> inputs,
                             std::function<void(Node<T>&)> backward) {
        TensorT out = from(std::move(shape), std::move(value));
        bool needs = false;
        if (grad_enabled())
            for (const auto& in : inputs)
                if (in.defined() && in.requires_grad()) needs = true;
        if (needs) {
            out.node_->requires_grad = true;
            out.node_->parents.reserve(inputs.size());
            for (auto& in : inputs) out.node_->parents.push_back(in.node_);
            out.node_->backward = std::move(backward);
        }
        return out;
    }

private:
    std::shared_ptr<Node<T>> node_;
};

/// Reverse pass from a scalar loss. Visits the recorded subgraph in exact
/// reverse construction order and consumes it: a second call on the same
/// graph is a contract error.
template <class T>
void backward(TensorT<T> loss) {
    check(loss.defined() && loss.size() == 1,
          "backward expects a scalar loss, got " +
              (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    auto root = loss.node();
    check(!root->consumed, "backward called twice on a consumed graph");
    if (!root->requires_grad) {
        root->consumed = true;
        return; // nothing reachable requires gradients
    }

    // Collect the reachable recorded subgraph.
    std::vector<std::shared_ptr<Node<T>>> order;
    std::vector<Node<T>*> stack{root.get()};
    std::vector<std::shared_ptr<Node<T>>> keep{root};
    root->consumed = true;
    order.push_back(root);
    while (!stack.empty()) {
        Node<T>* n = stack.back();
        stack.pop_back();
        for (auto& p : n->parents) {
            if (!p->consumed && p->requires_grad && (p->backward || !p->parents.empty())) {
                p->consumed = true;
                order.push_back(p);
                stack.push_back(p.get());
            }
        }
    }
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) { return a->seq > b->seq; });

    root->ensure_grad();
    std::fill(root->grad.begin(), root->grad.end(), T(0));
    root->grad[0] = T(1);

    for (auto& n : order) {
        if (n->backward && !n->grad.empty()) n->backward(*n);
        // Consume: release the tape entry, keep values and leaf grads.
        n->backward = nullptr;
        n->parents.clear();
    }
}

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

} // namespace chamber::nn
