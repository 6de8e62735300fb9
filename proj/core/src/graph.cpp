#include "stackelgrad/graph.hpp"

#include <algorithm>
#include <cmath>

namespace stackelgrad::ad {

const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Constant: return "constant";
        case Op::MatMul: return "matmul";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::AddRow: return "add_row";
        case Op::Scale: return "scale";
        case Op::Relu: return "relu";
        case Op::Tanh: return "tanh";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Clamp: return "clamp";
        case Op::LogSoftmax: return "log_softmax";
        case Op::Sum: return "sum";
        case Op::Mean: return "mean";
        case Op::Gather: return "gather";
        case Op::MaxElem: return "max_elem";
        case Op::KlRows: return "kl_rows";
        case Op::StopGrad: return "stop_grad";
    }
    return "?";
}

const Tensor& GradientMap::at(NodeId leaf) const {
    auto it = grads_.find(leaf);
    if (it == grads_.end())
        throw ContractError("gradient map: node " + std::to_string(leaf) + " is not a leaf");
    return it->second;
}

const Node& Graph::node(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw ContractError("graph: node id " + std::to_string(id) + " out of range");
    return nodes_[static_cast<std::size_t>(id)];
}

std::string Graph::describe(NodeId id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    std::string s = std::string(op_name(n.op)) + "#" + std::to_string(id);
    if (!n.name.empty()) s += " (" + n.name + ")";
    return s;
}

void Graph::check_finite(const Node& n, const Tensor& v) const {
    if (v.all_finite()) return;
    std::string s = std::string(op_name(n.op)) + "#" + std::to_string(nodes_.size());
    if (!n.name.empty()) s += " (" + n.name + ")";
    throw NumericError("forward: non-finite value out of node " + s);
}

NodeId Graph::push(Node n) {
    n.value = eval(n);
    check_finite(n, n.value);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::leaf(Tensor v, std::string name) {
    Node n;
    n.op = Op::Leaf;
    n.name = std::move(name);
    n.value = std::move(v);
    check_finite(n, n.value);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::constant(Tensor v) {
    Node n;
    n.op = Op::Constant;
    n.value = std::move(v);
    check_finite(n, n.value);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

void Graph::bind(NodeId id, const Tensor& v) {
    Node& n = nodes_.at(static_cast<std::size_t>(id));
    if (n.op != Op::Leaf)
        throw ContractError("graph: bind on non-leaf " + describe(id));
    if (n.value.shape != v.shape)
        throw ShapeError("graph: bind shape " + v.shape_str() + " != leaf shape " +
                         n.value.shape_str() + " at " + describe(id));
    n.value = v;
}

void Graph::forward() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        Node& n = nodes_[i];
        if (n.op == Op::Leaf || n.op == Op::Constant) continue;
        n.value = eval(n);
        if (!n.value.all_finite())
            throw NumericError("forward: non-finite value out of node " +
                               describe(static_cast<NodeId>(i)));
    }
}

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

}  // namespace

NodeId Graph::matmul(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require(va.rank() == 2 && vb.rank() == 2 && va.shape[1] == vb.shape[0],
            "matmul: incompatible shapes " + va.shape_str() + " x " + vb.shape_str());
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
    require(value(a).same_shape(value(b)),
            "add: shape mismatch " + value(a).shape_str() + " vs " + value(b).shape_str());
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
    require(value(a).same_shape(value(b)),
            "sub: shape mismatch " + value(a).shape_str() + " vs " + value(b).shape_str());
    Node n;
    n.op = Op::Sub;
    n.a = a;
    n.b = b;
    return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
    require(value(a).same_shape(value(b)),
            "mul: shape mismatch " + value(a).shape_str() + " vs " + value(b).shape_str());
    Node n;
    n.op = Op::Mul;
    n.a = a;
    n.b = b;
    return push(std::move(n));
}

NodeId Graph::add_row(NodeId a, NodeId row) {
    const Tensor& va = value(a);
    const Tensor& vr = value(row);
    require(va.rank() == 2 && vr.rank() == 1 && vr.shape[0] == va.shape[1],
            "add_row: " + va.shape_str() + " + row " + vr.shape_str());
    Node n;
    n.op = Op::AddRow;
    n.a = a;
    n.b = row;
    return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double c) {
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.p0 = c;
    return push(std::move(n));
}

NodeId Graph::relu(NodeId a) {
    Node n;
    n.op = Op::Relu;
    n.a = a;
    return push(std::move(n));
}

NodeId Graph::tanh(NodeId a) {
    Node n;
    n.op = Op::Tanh;
    n.a = a;
    return push(std::move(n));
}

NodeId Graph::exp(NodeId a) {
    Node n;
    n.op = Op::Exp;
    n.a = a;
    return push(std::move(n));
}

NodeId Graph::log(NodeId a) {
    Node n;
    n.op = Op::Log;
    n.a = a;
    return push(std::move(n));
}

NodeId Graph::clamp(NodeId a, double lo, double hi) {
    if (lo > hi) throw ContractError("clamp: lo > hi");
    Node n;
    n.op = Op::Clamp;
    n.a = a;
    n.p0 = lo;
    n.p1 = hi;
    return push(std::move(n));
}

NodeId Graph::log_softmax(NodeId a) {
    const Tensor& va = value(a);
    require(va.rank() == 1 || va.rank() == 2, "log_softmax: rank must be 1 or 2");
    Node n;
    n.op = Op::LogSoftmax;
    n.a = a;
    return push(std::move(n));
}

NodeId Graph::sum(NodeId a) {
    Node n;
    n.op = Op::Sum;
    n.a = a;
    return push(std::move(n));
}

NodeId Graph::mean(NodeId a) {
    Node n;
    n.op = Op::Mean;
    n.a = a;
    return push(std::move(n));
}

NodeId Graph::gather(NodeId a, const std::vector<std::uint32_t>& cols) {
    const Tensor& va = value(a);
    require(va.rank() == 2, "gather: input must be 2-D");
    require(cols.size() == va.shape[0], "gather: one column index per row required");
    for (std::uint32_t c : cols)
        require(c < va.shape[1], "gather: column index " + std::to_string(c) + " out of range");
    Node n;
    n.op = Op::Gather;
    n.a = a;
    n.indices = cols;
    return push(std::move(n));
}

NodeId Graph::max_elem(NodeId a, NodeId b) {
    require(value(a).same_shape(value(b)),
            "max_elem: shape mismatch " + value(a).shape_str() + " vs " + value(b).shape_str());
    Node n;
    n.op = Op::MaxElem;
    n.a = a;
    n.b = b;
    return push(std::move(n));
}

NodeId Graph::kl_rows(NodeId log_p, NodeId log_q) {
    const Tensor& vp = value(log_p);
    require(vp.rank() == 2 && vp.same_shape(value(log_q)),
            "kl_rows: inputs must be equal-shape 2-D log-probability matrices");
    Node n;
    n.op = Op::KlRows;
    n.a = log_p;
    n.b = log_q;
    return push(std::move(n));
}

NodeId Graph::stop_grad(NodeId a) {
    Node n;
    n.op = Op::StopGrad;
    n.a = a;
    return push(std::move(n));
}

Tensor Graph::eval(const Node& n) const {
    switch (n.op) {
        case Op::Leaf:
        case Op::Constant:
            return n.value;

        case Op::MatMul: {
            const Tensor& A = value(n.a);
            const Tensor& B = value(n.b);
            std::size_t m = A.shape[0], k = A.shape[1], c = B.shape[1];
            Tensor out({m, c});
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t l = 0; l < k; ++l) {
                    double a = A.data[i * k + l];
                    if (a == 0.0) continue;
                    const double* brow = &B.data[l * c];
                    double* orow = &out.data[i * c];
                    for (std::size_t j = 0; j < c; ++j) orow[j] += a * brow[j];
                }
            return out;
        }

        case Op::Add: {
            Tensor out = value(n.a);
            const Tensor& B = value(n.b);
            for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
            return out;
        }

        case Op::Sub: {
            Tensor out = value(n.a);
            const Tensor& B = value(n.b);
            for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= B.data[i];
            return out;
        }

        case Op::Mul: {
            Tensor out = value(n.a);
            const Tensor& B = value(n.b);
            for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= B.data[i];
            return out;
        }

        case Op::AddRow: {
            Tensor out = value(n.a);
            const Tensor& r = value(n.b);
            std::size_t cols = out.shape[1];
            for (std::size_t i = 0; i < out.shape[0]; ++i)
                for (std::size_t j = 0; j < cols; ++j) out.data[i * cols + j] += r.data[j];
            return out;
        }

        case Op::Scale: {
            Tensor out = value(n.a);
            for (double& v : out.data) v *= n.p0;
            return out;
        }

        case Op::Relu: {
            Tensor out = value(n.a);
            for (double& v : out.data) v = v > 0.0 ? v : 0.0;
            return out;
        }

        case Op::Tanh: {
            Tensor out = value(n.a);
            for (double& v : out.data) v = std::tanh(v);
            return out;
        }

        case Op::Exp: {
            Tensor out = value(n.a);
            for (double& v : out.data) v = std::exp(v);
            return out;
        }

        case Op::Log: {
            Tensor out = value(n.a);
            for (double& v : out.data) v = std::log(v);
            return out;
        }

        case Op::Clamp: {
            Tensor out = value(n.a);
            for (double& v : out.data) v = std::min(std::max(v, n.p0), n.p1);
            return out;
        }

        case Op::LogSoftmax: {
            const Tensor& A = value(n.a);
            Tensor out = A;
            std::size_t rows = A.rank() == 2 ? A.shape[0] : 1;
            std::size_t cols = A.rank() == 2 ? A.shape[1] : A.shape[0];
            for (std::size_t i = 0; i < rows; ++i) {
                const double* z = &A.data[i * cols];
                double m = z[0];
                for (std::size_t j = 1; j < cols; ++j) m = std::max(m, z[j]);
                double s = 0.0;
                for (std::size_t j = 0; j < cols; ++j) s += std::exp(z[j] - m);
                double lse = m + std::log(s);
                for (std::size_t j = 0; j < cols; ++j) out.data[i * cols + j] = z[j] - lse;
            }
            return out;
        }

        case Op::Sum: {
            const Tensor& A = value(n.a);
            double s = 0.0;
            for (double v : A.data) s += v;
            return Tensor::scalar(s);
        }

        case Op::Mean: {
            const Tensor& A = value(n.a);
            double s = 0.0;
            for (double v : A.data) s += v;
            return Tensor::scalar(s / static_cast<double>(A.data.size()));
        }

        case Op::Gather: {
            const Tensor& A = value(n.a);
            std::size_t rows = A.shape[0], cols = A.shape[1];
            Tensor out({rows});
            for (std::size_t i = 0; i < rows; ++i) out.data[i] = A.data[i * cols + n.indices[i]];
            return out;
        }

        case Op::MaxElem: {
            Tensor out = value(n.a);
            const Tensor& B = value(n.b);
            for (std::size_t i = 0; i < out.data.size(); ++i)
                out.data[i] = std::max(out.data[i], B.data[i]);
            return out;
        }

        case Op::KlRows: {
            const Tensor& P = value(n.a);
            const Tensor& Q = value(n.b);
            std::size_t rows = P.shape[0], cols = P.shape[1];
            Tensor out({rows});
            for (std::size_t i = 0; i < rows; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < cols; ++j) {
                    std::size_t k = i * cols + j;
                    s += std::exp(P.data[k]) * (P.data[k] - Q.data[k]);
                }
                out.data[i] = s;
            }
            return out;
        }

        case Op::StopGrad:
            return value(n.a);
    }
    throw ContractError("eval: unknown op");
}

GradientMap Graph::backward(NodeId root) const {
    const Node& r = node(root);
    if (!r.value.is_scalar())
        throw ContractError("backward: root " + describe(root) + " is not scalar");

    std::vector<Tensor> grads(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        grads[i] = Tensor::zeros(nodes_[i].value.shape);
    grads[static_cast<std::size_t>(root)].data[0] = 1.0;

    for (NodeId id = root; id >= 0; --id) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        const Tensor& g = grads[static_cast<std::size_t>(id)];
        switch (n.op) {
            case Op::Leaf:
            case Op::Constant:
            case Op::StopGrad:
                break;  // stop_grad drops g on purpose

            case Op::MatMul: {
                const Tensor& A = value(n.a);
                const Tensor& B = value(n.b);
                Tensor& ga = grads[static_cast<std::size_t>(n.a)];
                Tensor& gb = grads[static_cast<std::size_t>(n.b)];
                std::size_t m = A.shape[0], k = A.shape[1], c = B.shape[1];
                // dA = g * B^T
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t l = 0; l < k; ++l) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < c; ++j)
                            s += g.data[i * c + j] * B.data[l * c + j];
                        ga.data[i * k + l] += s;
                    }
                // dB = A^T * g
                for (std::size_t l = 0; l < k; ++l)
                    for (std::size_t i = 0; i < m; ++i) {
                        double a = A.data[i * k + l];
                        if (a == 0.0) continue;
                        for (std::size_t j = 0; j < c; ++j)
                            gb.data[l * c + j] += a * g.data[i * c + j];
                    }
                break;
            }

            case Op::Add: {
                Tensor& ga = grads[static_cast<std::size_t>(n.a)];
                Tensor& gb = grads[static_cast<std::size_t>(n.b)];
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    ga.data[i] += g.data[i];
                    gb.data[i] += g.data[i];
                }
                break;
            }

            case Op::Sub: {
                Tensor& ga = grads[static_cast<std::size_t>(n.a)];
                Tensor& gb = grads[static_cast<std::size_t>(n.b)];
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    ga.data[i] += g.data[i];
                    gb.data[i] -= g.data[i];
                }
                break;
            }

            case Op::Mul: {
                const Tensor& A = value(n.a);
                const Tensor& B = value(n.b);
                Tensor& ga = grads[static_cast<std::size_t>(n.a)];
                Tensor& gb = grads[static_cast<std::size_t>(n.b)];
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    ga.data[i] += g.data[i] * B.data[i];
                    gb.data[i] += g.data[i] * A.data[i];
                }
                break;
            }

            case Op::AddRow: {
                Tensor& ga = grads[static_cast<std::size_t>(n.a)];
                Tensor& gr = grads[static_cast<std::size_t>(n.b)];
                std::size_t rows = n.value.shape[0], cols = n.value.shape[1];
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j) {
                        ga.data[i * cols + j] += g.data[i * cols + j];
                        gr.data[j] += g.data[i * cols + j];
                    }
                break;
            }

            case Op::Scale: {
                Tensor& ga = grads[static_cast<std::size_t>(n.a)];
                for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += n.p0 * g.data[i];
                break;
            }

            case Op::Relu: {
                const Tensor& A = value(n.a);
                Tensor& ga = grads[static_cast<std::size_t>(n.a)];
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    if (A.data[i] > 0.0) ga.data[i] += g.data[i];
                break;
            }

            case Op::Tanh: {
                Tensor& ga = grads[static_cast<std::size_t>(n.a)];
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    double y = n.value.data[i];
                    ga.data[i] += g.data[i] * (1.0 - y * y);
                }
                break;
            }

            case Op::Exp: {
                Tensor& ga = grads[static_cast<std::size_t>(n.a)];
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    ga.data[i] += g.data[i] * n.value.data[i];
                break;
            }

            case Op::Log: {
                const Tensor& A = value(n.a);
                Tensor& ga = grads[static_cast<std::size_t>(n.a)];
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    ga.data[i] += g.data[i] / A.data[i];
                break;
            }

            case Op::Clamp: {
                const Tensor& A = value(n.a);
                Tensor& ga = grads[static_cast<std::size_t>(n.a)];
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    if (A.data[i] >= n.p0 && A.data[i] <= n.p1) ga.data[i] += g.data[i];
                break;
            }

            case Op::LogSoftmax: {
                Tensor& ga = grads[static_cast<std::size_t>(n.a)];
                std::size_t rows = n.value.rank() == 2 ? n.value.shape[0] : 1;
                std::size_t cols = n.value.rank() == 2 ? n.value.shape[1] : n.value.shape[0];
                for (std::size_t i = 0; i < rows; ++i) {
                    double gs = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) gs += g.data[i * cols + j];
                    for (std::size_t j = 0; j < cols; ++j) {
                        std::size_t k = i * cols + j;
                        ga.data[k] += g.data[k] - std::exp(n.value.data[k]) * gs;
                    }
                }
                break;
            }

            case Op::Sum: {
                Tensor& ga = grads[static_cast<std::size_t>(n.a)];
                for (double& v : ga.data) v += g.data[0];
                break;
            }

            case Op::Mean: {
                Tensor& ga = grads[static_cast<std::size_t>(n.a)];
                double s = g.data[0] / static_cast<double>(ga.data.size());
                for (double& v : ga.data) v += s;
                break;
            }

            case Op::Gather: {
                Tensor& ga = grads[static_cast<std::size_t>(n.a)];
                std::size_t cols = value(n.a).shape[1];
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    ga.data[i * cols + n.indices[i]] += g.data[i];
                break;
            }

            case Op::MaxElem: {
                const Tensor& A = value(n.a);
                const Tensor& B = value(n.b);
                Tensor& ga = grads[static_cast<std::size_t>(n.a)];
                Tensor& gb = grads[static_cast<std::size_t>(n.b)];
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    if (A.data[i] >= B.data[i])
                        ga.data[i] += g.data[i];
                    else
                        gb.data[i] += g.data[i];
                }
                break;
            }

            case Op::KlRows: {
                const Tensor& P = value(n.a);
                const Tensor& Q = value(n.b);
                Tensor& gp = grads[static_cast<std::size_t>(n.a)];
                Tensor& gq = grads[static_cast<std::size_t>(n.b)];
                std::size_t rows = P.shape[0], cols = P.shape[1];
                for (std::size_t i = 0; i < rows; ++i) {
                    double gi = g.data[i];
                    if (gi == 0.0) continue;
                    for (std::size_t j = 0; j < cols; ++j) {
                        std::size_t k = i * cols + j;
                        double p = std::exp(P.data[k]);
                        gp.data[k] += gi * p * (P.data[k] - Q.data[k] + 1.0);
                        gq.data[k] -= gi * p;
                    }
                }
                break;
            }
        }
    }

    GradientMap out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].op == Op::Leaf)
            out.insert(static_cast<NodeId>(i), std::move(grads[i]));
    return out;
}

}  // namespace stackelgrad::ad
