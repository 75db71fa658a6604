#pragma once

#include <cstring>
#include <functional>
#include <memory>
#include <numeric>

#include "tsc/common.hpp"

namespace tsc {

namespace detail {

template <typename S>
struct TensorNode {
    std::vector<int64_t> shape;
    std::vector<S> data;
    std::vector<S> grad;  // empty until a backward pass touches this node
    bool requires_grad = false;

    int64_t numel() const {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        return n;
    }

    // Lazily sized; grad always matches data in shape.
    std::vector<S>& ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), S(0));
        return grad;
    }
};

}  // namespace detail

// Value-like handle on a shared dense buffer. Copies alias the same storage,
// which is what every op and optimizer in this codebase relies on.
template <typename S>
class Tensor {
public:
    using Node = detail::TensorNode<S>;

    Tensor() : node_(std::make_shared<Node>()) {}

    explicit Tensor(std::vector<int64_t> shape, S fill = S(0)) : node_(std::make_shared<Node>()) {
        node_->shape = std::move(shape);
        check_shape(node_->shape);
        node_->data.assign(static_cast<size_t>(node_->numel()), fill);
    }

    Tensor(std::vector<int64_t> shape, std::vector<S> data) : node_(std::make_shared<Node>()) {
        node_->shape = std::move(shape);
        check_shape(node_->shape);
        if (node_->numel() != static_cast<int64_t>(data.size()))
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(node_->shape));
        node_->data = std::move(data);
    }

    static Tensor scalar(S v) { return Tensor({1}, std::vector<S>{v}); }

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape), S(0)); }

    static Tensor full(std::vector<int64_t> shape, S v) { return Tensor(std::move(shape), v); }

    static Tensor uniform(std::vector<int64_t> shape, Rng& rng, double lo, double hi) {
        Tensor t(std::move(shape));
        for (auto& v : t.node_->data) v = static_cast<S>(rng.uniform(lo, hi));
        return t;
    }

    static Tensor normal(std::vector<int64_t> shape, Rng& rng, double mean, double stddev) {
        Tensor t(std::move(shape));
        for (auto& v : t.node_->data) v = static_cast<S>(mean + stddev * rng.normal());
        return t;
    }

    const std::vector<int64_t>& shape() const { return node_->shape; }
    int64_t dim(size_t i) const { return node_->shape.at(i); }
    size_t rank() const { return node_->shape.size(); }
    int64_t numel() const { return node_->numel(); }

    std::vector<S>& data() { return node_->data; }
    const std::vector<S>& data() const { return node_->data; }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        node_->requires_grad = v;
        if (!v) node_->grad.clear();
        return *this;
    }

    bool has_grad() const { return !node_->grad.empty(); }
    std::vector<S>& grad() {
        if (node_->grad.empty()) throw Error("tensor has no gradient buffer");
        return node_->grad;
    }
    const std::vector<S>& grad() const {
        if (node_->grad.empty()) throw Error("tensor has no gradient buffer");
        return node_->grad;
    }
    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), S(0));
    }

    S item() const {
        if (numel() != 1)
            throw ShapeError("item() on non-scalar tensor of shape " + shape_str(shape()));
        return node_->data[0];
    }

    S at(std::initializer_list<int64_t> idx) const {
        return node_->data[static_cast<size_t>(flat_index(idx))];
    }
    S& at(std::initializer_list<int64_t> idx) {
        return node_->data[static_cast<size_t>(flat_index(idx))];
    }

    bool same_storage(const Tensor& other) const { return node_ == other.node_; }

    std::shared_ptr<Node> node() const { return node_; }

    bool all_finite() const {
        for (S v : node_->data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

private:
    static void check_shape(const std::vector<int64_t>& shape) {
        for (int64_t d : shape)
            if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
    }

    int64_t flat_index(std::initializer_list<int64_t> idx) const {
        if (idx.size() != rank())
            throw ShapeError("index rank " + std::to_string(idx.size()) +
                             " does not match tensor shape " + shape_str(shape()));
        int64_t flat = 0;
        size_t i = 0;
        for (int64_t v : idx) {
            flat = flat * node_->shape[i] + v;
            ++i;
        }
        return flat;
    }

    std::shared_ptr<Node> node_;
};

// Ordered record of op backward rules for one forward computation.
// Ops append during the forward pass while a tape is active on this thread;
// execution order is a topological order of the DAG, so replaying the
// records in reverse visits every node after all of its consumers.
//
// Scoped: constructing a tape makes it the active one for the current
// thread, destroying it restores the previous tape. One training step runs
// on one thread; tapes are never shared.
template <typename S>
class GradientTape {
public:
    GradientTape() : prev_(active_ref()) { active_ref() = this; }
    ~GradientTape() { active_ref() = prev_; }

    GradientTape(const GradientTape&) = delete;
    GradientTape& operator=(const GradientTape&) = delete;

    static GradientTape* active() { return active_ref(); }

    void record(std::function<void()> backward_rule) {
        records_.push_back(std::move(backward_rule));
    }

    size_t size() const { return records_.size(); }

    // Seeds d(loss)/d(loss)=1 and replays all recorded rules in reverse.
    void backward(const Tensor<S>& loss) {
        if (loss.numel() != 1)
            throw ShapeError("backward expects a scalar loss, got shape " +
                             shape_str(loss.shape()));
        loss.node()->ensure_grad()[0] += S(1);
        for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
        records_.clear();
    }

private:
    static GradientTape*& active_ref() {
        thread_local GradientTape* active = nullptr;
        return active;
    }

    std::vector<std::function<void()>> records_;
    GradientTape* prev_;
};

namespace detail {

// True when the result of an op over these inputs should be tracked.
template <typename S>
bool tracking(std::initializer_list<const Tensor<S>*> inputs) {
    if (GradientTape<S>::active() == nullptr) return false;
    for (const Tensor<S>* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

}  // namespace detail

}  // namespace tsc
