#pragma once

#include "nclust/diff/params.hpp"
#include "nclust/diff/tensor.hpp"

#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace nclust::diff {

enum class OpKind {
    constant,
    param,
    matmul,
    add,
    sub,
    mul,
    scale,
    concat,
    relu,
    softmax_rows,
    segment_softmax,
    gather_rows,
    segment_weighted_sum,
    affine,
    cross_entropy,
    bce_with_logits,
    mean_rows,
    sum,
};

std::string_view op_name(OpKind kind);

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
public:
    Var() = default;
    Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

    Graph& graph() const { return *graph_; }
    std::size_t id() const noexcept { return id_; }
    const Tensor& value() const;
    /// Gradient after Graph::backward; empty if the node received none.
    const Tensor& grad() const;
    const std::vector<std::size_t>& shape() const { return value().shape(); }

private:
    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

/// Tape of operations in topological (creation) order. Reverse-mode
/// differentiation walks the tape backwards from a scalar loss and
/// accumulates leaf gradients into the referenced Params.
class Graph {
public:
    /// Called with the node's output gradient; accumulates into inputs.
    using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

    explicit Graph(bool check_finite = true) : check_finite_(check_finite) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Tensor value);
    /// Leaf bound to a Param. Repeated calls with the same Param return the
    /// same node.
    Var param(Param& p);

    std::size_t size() const noexcept { return nodes_.size(); }
    OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }
    const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }
    const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
    const Tensor& grad(std::size_t id) const { return nodes_.at(id).grad; }

    /// Seeds d(loss)/d(loss) = 1 and propagates to every ancestor. Param
    /// leaves add their gradient into Param::grad (trainable params only).
    void backward(Var loss);

    /// Appends an op node. Used by the op library.
    Var record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward);
    /// Gradient buffer of `id`, allocated as zeros on first use.
    Tensor& grad_buffer(std::size_t id);
    bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }

private:
    struct Node {
        OpKind kind;
        std::vector<std::size_t> inputs;
        Tensor value;
        Tensor grad;
        BackwardFn backward;
        Param* param = nullptr;
        bool needs_grad = false;
    };

    std::deque<Node> nodes_;
    std::unordered_map<const Param*, std::size_t> param_nodes_;
    bool check_finite_;
};

// Op library. Shapes are checked eagerly; mismatches throw ShapeError
// naming both operand shapes.

Var matmul(Var a, Var b);
/// Element-wise; `b` may also be a 1×C row or an R×1 column broadcast over `a`.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, Real factor);
/// Column-wise concatenation of equally tall operands.
Var concat(std::span<const Var> parts);
Var relu(Var a);
Var softmax_rows(Var a);
/// Softmax of a K×1 column within each segment id in [0, num_segments).
Var segment_softmax(Var logits, std::span<const std::size_t> segments, std::size_t num_segments);
Var gather_rows(Var a, std::span<const std::size_t> index);
/// out[s] = Σ_{k: segments[k]=s} weights[k]·values[k]; values K×C, weights K×1.
Var segment_weighted_sum(Var values, Var weights, std::span<const std::size_t> segments,
                         std::size_t num_segments);
/// x·W + b with b a 1×out row.
Var affine(Var x, Var weight, Var bias);
/// Mean over rows of −log softmax(logits)[label].
Var cross_entropy(Var logits, std::span<const std::size_t> labels);
/// Mean over all entries of the numerically stable sigmoid cross-entropy.
Var bce_with_logits(Var logits, const Tensor& targets);
Var mean_rows(Var a);
Var sum(Var a);

} // namespace nclust::diff
