#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "omvp/tensor/tensor.hpp"

namespace omvp::tensor {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while its graph lives.
struct Var {
    Graph* graph = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
};

/// Records primitive applications in evaluation order so that gradients can be pulled
/// back in one reverse sweep. A graph built with `record == false` only evaluates.
class Graph {
public:
    using Backward = std::function<void(Graph&, const Tensor& upstream)>;

    explicit Graph(bool record = true) : record_(record) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool recording() const { return record_; }
    std::size_t size() const { return nodes_.size(); }

    Var constant(Tensor value) {
        nodes_.push_back(Node{std::move(value), nullptr, {}, false, {}});
        return {this, nodes_.size() - 1};
    }

    /// Leaf backed by caller-owned storage, which must outlive the graph.
    Var leaf(const Tensor& storage, bool requires_grad = true) {
        nodes_.push_back(Node{{}, &storage, {}, requires_grad && record_, {}});
        return {this, nodes_.size() - 1};
    }

    const Tensor& value(std::size_t id) const {
        const Node& n = nodes_[id];
        return n.external ? *n.external : n.value;
    }
    const Tensor& value(Var v) const { return value(v.id); }

    bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
    bool needs_grad(Var v) const { return needs_grad(v.id); }

    /// Adds a node computed from `inputs`. `back` is dropped when no input needs a
    /// gradient or the graph does not record.
    Var push(Tensor value, std::initializer_list<Var> inputs, Backward back) {
        bool needs = false;
        if (record_)
            for (const Var& v : inputs) needs = needs || nodes_[v.id].needs_grad;
        return push_node(std::move(value), needs, std::move(back));
    }
    Var push(Tensor value, const std::vector<Var>& inputs, Backward back) {
        bool needs = false;
        if (record_)
            for (const Var& v : inputs) needs = needs || nodes_[v.id].needs_grad;
        return push_node(std::move(value), needs, std::move(back));
    }

    /// Accumulation buffer for the gradient of node `id`, allocated on first use.
    Tensor& grad_buffer(std::size_t id) {
        Node& n = nodes_[id];
        if (n.grad.size() == 0) {
            const Tensor& v = value(id);
            n.grad = Tensor(v.shape(), 0.0);
        }
        return n.grad;
    }

    /// Gradient of the last backward() output with respect to leaf `v`; zeros if `v`
    /// did not influence it.
    Tensor grad(Var v) const {
        const Node& n = nodes_[v.id];
        if (n.grad.size() == 0) return Tensor(value(v).shape(), 0.0);
        return n.grad;
    }

    void backward(Var out) {
        const Tensor& y = value(out);
        if (y.size() != 1) throw ContractError("backward: output must be a scalar, got shape " + shape_string(y.shape()));
        if (!record_) throw ContractError("backward: graph was built without recording");
        for (auto& n : nodes_) n.grad = Tensor();
        grad_buffer(out.id)[0] = 1.0;
        for (std::size_t i = out.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.back || n.grad.size() == 0) continue;
            n.back(*this, n.grad);
            n.grad = Tensor();  // interior gradients are not kept
        }
    }

private:
    struct Node {
        Tensor value;
        const Tensor* external = nullptr;
        Tensor grad;
        bool needs_grad = false;
        Backward back;
    };

    Var push_node(Tensor value, bool needs, Backward back) {
        nodes_.push_back(Node{std::move(value), nullptr, {}, needs, needs ? std::move(back) : Backward{}});
        return {this, nodes_.size() - 1};
    }

    bool record_;
    std::deque<Node> nodes_;  // stable addresses: value() references survive later pushes
};

inline const Tensor& Var::value() const { return graph->value(id); }

}  // namespace omvp::tensor
