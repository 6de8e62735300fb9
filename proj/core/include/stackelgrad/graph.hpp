#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "stackelgrad/tensor.hpp"

namespace stackelgrad::ad {

using NodeId = std::int32_t;

enum class Op : std::uint8_t {
    Leaf,        // bound input or parameter
    Constant,    // fixed value, never receives a gradient
    MatMul,      // (m x k) * (k x n)
    Add,         // elementwise, same shape
    Sub,
    Mul,
    AddRow,      // (m x n) + row vector (n); the only broadcast
    Scale,       // p0 * x
    Relu,
    Tanh,
    Exp,
    Log,
    Clamp,       // clamp(x, p0, p1)
    LogSoftmax,  // rowwise, max-subtraction trick
    Sum,         // full reduction to scalar
    Mean,
    Gather,      // per-row column pick: out[i] = x[i, idx[i]]
    MaxElem,     // elementwise max of two tensors; ties route grad to lhs
    KlRows,      // rowwise KL between two log-probability matrices
    StopGrad,    // identity forward, blocks backward
};

const char* op_name(Op op);

struct Node {
    Op op;
    NodeId a = -1;
    NodeId b = -1;
    Tensor value;
    double p0 = 0.0;  // scale factor / clamp lo
    double p1 = 0.0;  // clamp hi
    std::vector<std::uint32_t> indices;  // gather columns, one per row
    std::string name;                    // leaves only, for diagnostics
};

// Gradients of one backward pass, keyed by leaf node id. Leaves that are not
// reachable from the root hold exact zeros.
class GradientMap {
public:
    const Tensor& at(NodeId leaf) const;
    bool contains(NodeId leaf) const { return grads_.count(leaf) != 0; }
    std::size_t size() const { return grads_.size(); }

    void insert(NodeId leaf, Tensor g) { grads_.emplace(leaf, std::move(g)); }

private:
    std::unordered_map<NodeId, Tensor> grads_;
};

// Append-only tape of op records in topological order. Values are computed
// eagerly as nodes are added and cached for backward; rebinding leaves and
// calling forward() re-evaluates the whole tape in creation order, so a given
// graph + bindings always reduces in the same order.
class Graph {
public:
    NodeId leaf(Tensor v, std::string name = "");
    NodeId constant(Tensor v);

    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId add_row(NodeId a, NodeId row);
    NodeId scale(NodeId a, double c);
    NodeId relu(NodeId a);
    NodeId tanh(NodeId a);
    NodeId exp(NodeId a);
    NodeId log(NodeId a);
    NodeId clamp(NodeId a, double lo, double hi);
    NodeId log_softmax(NodeId a);
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);
    NodeId gather(NodeId a, const std::vector<std::uint32_t>& cols);
    NodeId max_elem(NodeId a, NodeId b);
    NodeId kl_rows(NodeId log_p, NodeId log_q);
    NodeId stop_grad(NodeId a);

    // The reference is into node storage: adding any node may invalidate it.
    // Copy out anything needed across subsequent graph construction.
    const Tensor& value(NodeId id) const { return node(id).value; }
    const Node& node(NodeId id) const;
    std::size_t size() const { return nodes_.size(); }

    // Replace a leaf's value (shape must match) without touching the tape.
    void bind(NodeId leaf, const Tensor& v);

    // Recompute every non-leaf value in creation order.
    void forward();

    // Reverse pass from a scalar root; each node is visited exactly once.
    GradientMap backward(NodeId root) const;

private:
    NodeId push(Node n);
    Tensor eval(const Node& n) const;
    void check_finite(const Node& n, const Tensor& v) const;
    std::string describe(NodeId id) const;

    std::vector<Node> nodes_;
};

}  // namespace stackelgrad::ad
