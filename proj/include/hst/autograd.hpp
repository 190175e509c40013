#pragma once

// Define-by-run reverse-mode automatic differentiation over dense tensors.
//
// A Graph records nodes in creation order, which is also a valid topological
// order. Each op node is evaluated eagerly when it is added; forward() replays
// every op node from the current leaf values, so a caller may overwrite a leaf
// with set_value() and re-evaluate (grad_check relies on this).
//
// All reductions accumulate left to right in index order, so results are
// bit-identical across calls and independent of batch composition.

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hst/tensor.hpp"

namespace hst {

using NodeId = std::size_t;

// Raised when op inputs have incompatible shapes; the message names the node.
class ShapeError : public std::invalid_argument {
public:
    ShapeError(NodeId node, std::string_view op, const std::string& detail);
    NodeId node() const { return node_; }

private:
    NodeId node_;
};

class Op {
public:
    virtual ~Op() = default;
    virtual std::string_view name() const = 0;
    // Throws std::invalid_argument on bad input shapes.
    virtual Tensor forward(std::span<const Tensor* const> inputs) const = 0;
    // Accumulates into grad_inputs[i] (same shape as inputs[i]); entries are
    // null for inputs that do not need a gradient.
    virtual void backward(std::span<const Tensor* const> inputs, const Tensor& output,
                          const Tensor& grad_output, std::span<Tensor* const> grad_inputs) const = 0;
};

class GradientMap {
public:
    explicit GradientMap(std::vector<std::optional<Tensor>> grads) : grads_(std::move(grads)) {}
    bool contains(NodeId id) const { return id < grads_.size() && grads_[id].has_value(); }
    const Tensor& at(NodeId id) const;

private:
    std::vector<std::optional<Tensor>> grads_;
};

class Graph {
public:
    NodeId parameter(Tensor value);
    NodeId constant(Tensor value);
    NodeId apply(std::unique_ptr<Op> op, std::vector<NodeId> inputs);

    void set_value(NodeId leaf, Tensor value);
    const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
    bool is_parameter(NodeId id) const { return nodes_.at(id).trainable; }
    // "leaf" for parameters and constants.
    std::string_view op_name(NodeId id) const { return nodes_.at(id).op ? nodes_.at(id).op->name() : "leaf"; }
    const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }
    const std::vector<NodeId>& parameters() const { return parameters_; }
    std::size_t size() const { return nodes_.size(); }

    // Re-evaluates every op node from the current leaf values.
    const Tensor& forward(NodeId output);

    // Gradients of a single-element loss with respect to every node that
    // depends on a parameter.
    GradientMap backward(NodeId loss) const;

private:
    struct Node {
        std::unique_ptr<Op> op;
        std::vector<NodeId> inputs;
        Tensor value;
        bool trainable = false;
        bool requires_grad = false;
    };

    Tensor evaluate(NodeId id, const Node& node) const;

    std::vector<Node> nodes_;
    std::vector<NodeId> parameters_;
};

// Op builders. Shapes: "[m,k]" means rank 2. Batched ops take a leading batch axis.
namespace ops {

NodeId matmul(Graph& g, NodeId a, NodeId b);                               // [m,k]x[k,n]
NodeId batch_matmul(Graph& g, NodeId a, NodeId b, bool transpose_b = false);  // [B,m,k]x[B,k,n]
NodeId transpose(Graph& g, NodeId a);                                       // [m,n] -> [n,m]
NodeId swap_leading(Graph& g, NodeId a);                                    // [a,b,c] -> [b,a,c]
NodeId reshape(Graph& g, NodeId a, Shape shape);
NodeId slice_rows(Graph& g, NodeId a, std::size_t start, std::size_t count);
NodeId repeat_batch(Graph& g, NodeId a, std::size_t batch);  // [...] -> [batch, ...]
NodeId broadcast_scalar(Graph& g, NodeId scalar, Shape shape);

NodeId add(Graph& g, NodeId a, NodeId b);
NodeId sub(Graph& g, NodeId a, NodeId b);
NodeId mul(Graph& g, NodeId a, NodeId b);
NodeId add_bias(Graph& g, NodeId a, NodeId bias);  // bias broadcast over the last axis
NodeId scale(Graph& g, NodeId a, double factor);
NodeId add_constant(Graph& g, NodeId a, double offset);

NodeId relu(Graph& g, NodeId a);
NodeId sigmoid(Graph& g, NodeId a);
NodeId log(Graph& g, NodeId a);
NodeId softmax(Graph& g, NodeId a);  // over the last axis

NodeId sum(Graph& g, NodeId a);
NodeId mean(Graph& g, NodeId a);
NodeId sum_last(Graph& g, NodeId a);
NodeId weighted_sum(Graph& g, NodeId a, Tensor weights);  // scalar sum(w * a), w constant

NodeId normalize_rows(Graph& g, NodeId a);    // L2 over the last axis; zero rows stay zero
NodeId cosine(Graph& g, NodeId a, NodeId b);  // row-wise over the last axis, clamped to [-1,1]

// out[p] = u[pairs[p].first] + v[pairs[p].second] for row-major [rows,h] inputs.
NodeId pair_sum(Graph& g, NodeId u, NodeId v, std::vector<std::pair<std::size_t, std::size_t>> pairs);

}  // namespace ops

}  // namespace hst
