#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sculpt/params.hpp"
#include "sculpt/tensor.hpp"

namespace sculpt {

// Primitive set of the reverse-mode engine. Input and Param are leaves.
enum class Op {
    Input,
    Param,
    MatMul,
    Conv2d,
    Add,
    Relu,
    SoftmaxCrossEntropy,
    Mul,
    Sum,
    Reshape,
    MeanPool,
};

const char* op_name(Op op);

using NodeId = std::size_t;

struct Node {
    Op op = Op::Input;
    std::vector<NodeId> inputs;
    std::string name;           // optional for interior nodes, required for leaves
    std::size_t segment = 0;    // Param: index into the ParamLayout
    std::vector<long> target;   // Reshape: target shape, one entry may be -1
    std::size_t padding = 0;    // Conv2d: symmetric zero padding (stride is always 1)
    std::size_t window = 0;     // MeanPool: non-overlapping square window
};

// Topologically ordered computation graph. Builders append nodes, so every
// node's inputs precede it by construction.
class Graph {
public:
    NodeId input(const std::string& name);
    NodeId param(const ParamLayout& layout, const std::string& segment_name);
    NodeId matmul(NodeId a, NodeId b);
    NodeId conv2d(NodeId x, NodeId kernel, std::size_t padding);
    NodeId add(NodeId a, NodeId b);
    NodeId relu(NodeId x);
    NodeId softmax_cross_entropy(NodeId logits, NodeId labels);
    NodeId mul(NodeId a, NodeId b);
    NodeId sum(NodeId x);
    NodeId reshape(NodeId x, std::vector<long> target);
    NodeId mean_pool(NodeId x, std::size_t window);

    void set_name(NodeId id, std::string name);
    NodeId find(const std::string& name) const;

    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    const Node& node(NodeId id) const { return nodes_.at(id); }
    std::size_t size() const noexcept { return nodes_.size(); }

    // Human-readable identifier for error messages, e.g. "#4 matmul 'fc1'".
    std::string describe(NodeId id) const;

private:
    NodeId push(Node n);
    std::vector<Node> nodes_;
};

using Bindings = std::map<std::string, Tensor>;

// Values of every node after a forward pass, indexed by NodeId.
struct Tape {
    std::vector<Tensor> values;
};

// Forward pass over the whole graph. Shape problems raise ShapeError naming the
// node, non-finite intermediates raise OverflowError naming the node, and a
// softmax label outside [0, classes) raises DataError.
Tape forward(const Graph& graph, const Bindings& inputs, const ParamVector& params);

// Evaluates only the ancestors of `targets`; other tape slots hold placeholders.
Tape forward(const Graph& graph, const Bindings& inputs, const ParamVector& params,
             std::span<const NodeId> targets);

// Forward pass returning the named outputs.
std::map<std::string, Tensor> eval_graph(const Graph& graph, const Bindings& inputs,
                                         const ParamVector& params,
                                         const std::vector<std::string>& outputs);

// Reverse pass from a scalar node. Parameters with no path to the loss get 0.
ParamVector backward(const Graph& graph, const Tape& tape, NodeId loss, const ParamLayout& layout);

struct ValueAndGrad {
    double loss = 0.0;
    ParamVector grad;
    Tape tape;
};

ValueAndGrad value_and_grad(const Graph& graph, const Bindings& inputs, const ParamVector& params,
                            NodeId loss);

using LossFn = std::function<double(const ParamVector&)>;

// Central differences per coordinate: (L(θ+eps·e_i) − L(θ−eps·e_i)) / (2·eps).
ParamVector finite_difference_gradient(const LossFn& loss_fn, const ParamVector& params, double eps);

// Sum by recursive halving; keeps the rounding error of long reductions O(log n).
double pairwise_sum(std::span<const double> v);

}  // namespace sculpt
