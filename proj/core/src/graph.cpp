#include "sculpt/graph.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "sculpt/errors.hpp"

namespace sculpt {

const char* op_name(Op op) {
    switch (op) {
        case Op::Input: return "input";
        case Op::Param: return "param";
        case Op::MatMul: return "matmul";
        case Op::Conv2d: return "conv2d";
        case Op::Add: return "add";
        case Op::Relu: return "relu";
        case Op::SoftmaxCrossEntropy: return "softmax_cross_entropy";
        case Op::Mul: return "mul";
        case Op::Sum: return "sum";
        case Op::Reshape: return "reshape";
        case Op::MeanPool: return "mean_pool";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Graph construction

NodeId Graph::push(Node n) {
    for (NodeId in : n.inputs) {
        if (in >= nodes_.size()) throw ContractError("graph input refers to a node that does not exist yet");
    }
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

NodeId Graph::input(const std::string& name) {
    Node n;
    n.op = Op::Input;
    n.name = name;
    return push(std::move(n));
}

NodeId Graph::param(const ParamLayout& layout, const std::string& segment_name) {
    auto idx = layout.find(segment_name);
    if (!idx) throw ContractError("unknown parameter segment '" + segment_name + "'");
    Node n;
    n.op = Op::Param;
    n.name = segment_name;
    n.segment = *idx;
    return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) { return push({Op::MatMul, {a, b}}); }

NodeId Graph::conv2d(NodeId x, NodeId kernel, std::size_t padding) {
    Node n{Op::Conv2d, {x, kernel}};
    n.padding = padding;
    return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) { return push({Op::Add, {a, b}}); }
NodeId Graph::relu(NodeId x) { return push({Op::Relu, {x}}); }
NodeId Graph::softmax_cross_entropy(NodeId logits, NodeId labels) {
    return push({Op::SoftmaxCrossEntropy, {logits, labels}});
}
NodeId Graph::mul(NodeId a, NodeId b) { return push({Op::Mul, {a, b}}); }
NodeId Graph::sum(NodeId x) { return push({Op::Sum, {x}}); }

NodeId Graph::reshape(NodeId x, std::vector<long> target) {
    Node n{Op::Reshape, {x}};
    n.target = std::move(target);
    return push(std::move(n));
}

NodeId Graph::mean_pool(NodeId x, std::size_t window) {
    if (window == 0) throw ContractError("mean_pool window must be positive");
    Node n{Op::MeanPool, {x}};
    n.window = window;
    return push(std::move(n));
}

void Graph::set_name(NodeId id, std::string name) { nodes_.at(id).name = std::move(name); }

NodeId Graph::find(const std::string& name) const {
    for (NodeId i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].name == name) return i;
    }
    throw ContractError("graph has no node named '" + name + "'");
}

std::string Graph::describe(NodeId id) const {
    const Node& n = nodes_.at(id);
    std::string s = "#" + std::to_string(id) + " " + op_name(n.op);
    if (!n.name.empty()) s += " '" + n.name + "'";
    return s;
}

double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

// ---------------------------------------------------------------------------
// Kernels

namespace {

// Maps each flat index of `big` to the flat index of `small` under right-aligned
// broadcasting where every small dimension equals the big one or is 1.
std::optional<std::vector<std::size_t>> broadcast_map(const Shape& big, const Shape& small) {
    if (small.size() > big.size()) return std::nullopt;
    const std::size_t lead = big.size() - small.size();
    Shape sdims(big.size(), 1);
    for (std::size_t i = 0; i < small.size(); ++i) {
        if (small[i] != big[lead + i] && small[i] != 1) return std::nullopt;
        sdims[lead + i] = small[i];
    }
    std::vector<std::size_t> sstride(big.size(), 0);
    std::size_t acc = 1;
    for (std::size_t i = big.size(); i-- > 0;) {
        sstride[i] = sdims[i] == 1 ? 0 : acc;
        acc *= sdims[i];
    }
    const std::size_t n = shape_numel(big);
    std::vector<std::size_t> map(n);
    std::vector<std::size_t> idx(big.size(), 0);
    std::size_t off = 0;
    for (std::size_t f = 0; f < n; ++f) {
        map[f] = off;
        for (std::size_t d = big.size(); d-- > 0;) {
            ++idx[d];
            off += sstride[d];
            if (idx[d] < big[d]) break;
            off -= sstride[d] * idx[d];
            idx[d] = 0;
        }
    }
    return map;
}

struct Broadcast {
    bool same = false;
    std::vector<std::size_t> map;
};

Broadcast make_broadcast(const Graph& g, NodeId id, const Tensor& a, const Tensor& b) {
    Broadcast bc;
    if (a.shape() == b.shape()) {
        bc.same = true;
        return bc;
    }
    auto m = broadcast_map(a.shape(), b.shape());
    if (!m) {
        throw ShapeError(g.describe(id) + ": cannot broadcast " + shape_string(b.shape()) + " onto " +
                         shape_string(a.shape()));
    }
    bc.map = std::move(*m);
    return bc;
}

void check_rank(const Graph& g, NodeId id, const Tensor& t, std::size_t rank, const char* role) {
    if (t.rank() != rank) {
        throw ShapeError(g.describe(id) + ": " + role + " must have rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
    }
}

Tensor matmul_fwd(const Graph& g, NodeId id, const Tensor& a, const Tensor& b) {
    check_rank(g, id, a, 2, "left operand");
    check_rank(g, id, b, 2, "right operand");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw ShapeError(g.describe(id) + ": inner dimensions differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
    }
    Tensor out({m, n});
    const double* A = a.data().data();
    const double* B = b.data().data();
    double* C = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            if (av == 0.0) continue;
            const double* brow = B + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return out;
}

struct ConvDims {
    std::size_t n, ci, h, w, co, kh, kw, ho, wo, pad;
};

ConvDims conv_dims(const Graph& g, NodeId id, const Tensor& x, const Tensor& k, std::size_t pad) {
    check_rank(g, id, x, 4, "conv input");
    check_rank(g, id, k, 4, "conv kernel");
    ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), k.dim(0), k.dim(2), k.dim(3), 0, 0, pad};
    if (k.dim(1) != d.ci) {
        throw ShapeError(g.describe(id) + ": kernel expects " + std::to_string(k.dim(1)) + " input channels, got " +
                         std::to_string(d.ci));
    }
    if (d.h + 2 * pad < d.kh || d.w + 2 * pad < d.kw) {
        throw ShapeError(g.describe(id) + ": kernel larger than padded input");
    }
    d.ho = d.h + 2 * pad - d.kh + 1;
    d.wo = d.w + 2 * pad - d.kw + 1;
    return d;
}

// Calls f(out_index, in_index, kernel_index) for every valid tap.
template <class F>
void conv_taps(const ConvDims& d, F&& f) {
    for (std::size_t b = 0; b < d.n; ++b)
        for (std::size_t o = 0; o < d.co; ++o)
            for (std::size_t y = 0; y < d.ho; ++y)
                for (std::size_t xo = 0; xo < d.wo; ++xo) {
                    const std::size_t oi = ((b * d.co + o) * d.ho + y) * d.wo + xo;
                    for (std::size_t c = 0; c < d.ci; ++c)
                        for (std::size_t ky = 0; ky < d.kh; ++ky) {
                            const long iy = static_cast<long>(y + ky) - static_cast<long>(d.pad);
                            if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
                            for (std::size_t kx = 0; kx < d.kw; ++kx) {
                                const long ix = static_cast<long>(xo + kx) - static_cast<long>(d.pad);
                                if (ix < 0 || ix >= static_cast<long>(d.w)) continue;
                                const std::size_t ii = ((b * d.ci + c) * d.h + static_cast<std::size_t>(iy)) * d.w +
                                                       static_cast<std::size_t>(ix);
                                const std::size_t ki = ((o * d.ci + c) * d.kh + ky) * d.kw + kx;
                                f(oi, ii, ki);
                            }
                        }
                }
}

Shape reshape_target(const Graph& g, NodeId id, const Tensor& x, const std::vector<long>& target) {
    Shape out(target.size());
    std::size_t known = 1;
    std::optional<std::size_t> infer;
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (target[i] == -1) {
            if (infer) throw ShapeError(g.describe(id) + ": more than one inferred dimension");
            infer = i;
        } else if (target[i] <= 0) {
            throw ShapeError(g.describe(id) + ": reshape dimensions must be positive");
        } else {
            out[i] = static_cast<std::size_t>(target[i]);
            known *= out[i];
        }
    }
    if (infer) {
        if (x.numel() % known != 0) {
            throw ShapeError(g.describe(id) + ": cannot reshape " + shape_string(x.shape()));
        }
        out[*infer] = x.numel() / known;
    }
    if (shape_numel(out) != x.numel()) {
        throw ShapeError(g.describe(id) + ": cannot reshape " + shape_string(x.shape()) + " to " +
                         shape_string(out));
    }
    return out;
}

std::size_t checked_label(const Graph& g, NodeId id, double v, std::size_t classes) {
    if (!(v >= 0.0) || v != std::floor(v) || v >= static_cast<double>(classes)) {
        throw DataError(g.describe(id) + ": label " + std::to_string(v) + " outside [0, " +
                        std::to_string(classes) + ")");
    }
    return static_cast<std::size_t>(v);
}

Tensor softmax_xent_fwd(const Graph& g, NodeId id, const Tensor& logits, const Tensor& labels) {
    check_rank(g, id, logits, 2, "logits");
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    if (labels.numel() != n) {
        throw ShapeError(g.describe(id) + ": " + std::to_string(labels.numel()) + " labels for " +
                         std::to_string(n) + " rows");
    }
    std::vector<double> per(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t y = checked_label(g, id, labels[i], c);
        const double* row = logits.data().data() + i * c;
        const double mx = *std::max_element(row, row + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        per[i] = std::log(z) + mx - row[y];
    }
    return Tensor::scalar(pairwise_sum(per) / static_cast<double>(n));
}

Tensor forward_node(const Graph& g, NodeId id, const std::vector<Tensor>& v, const Bindings& inputs,
                    const ParamVector& params) {
    const Node& node = g.node(id);
    auto in = [&](std::size_t k) -> const Tensor& { return v[node.inputs[k]]; };
    switch (node.op) {
        case Op::Input: {
            auto it = inputs.find(node.name);
            if (it == inputs.end()) throw ContractError(g.describe(id) + ": input is not bound");
            return it->second;
        }
        case Op::Param: {
            if (node.segment >= params.layout.segment_count()) {
                throw ContractError(g.describe(id) + ": parameter segment missing from layout");
            }
            const auto& seg = params.layout.segment(node.segment);
            auto s = params.segment(node.segment);
            return Tensor(seg.shape, std::vector<double>(s.begin(), s.end()));
        }
        case Op::MatMul: return matmul_fwd(g, id, in(0), in(1));
        case Op::Conv2d: {
            const ConvDims d = conv_dims(g, id, in(0), in(1), node.padding);
            Tensor out({d.n, d.co, d.ho, d.wo});
            const double* X = in(0).data().data();
            const double* K = in(1).data().data();
            double* O = out.data().data();
            conv_taps(d, [&](std::size_t oi, std::size_t ii, std::size_t ki) { O[oi] += X[ii] * K[ki]; });
            return out;
        }
        case Op::Add:
        case Op::Mul: {
            const Tensor& a = in(0);
            const Tensor& b = in(1);
            const Broadcast bc = make_broadcast(g, id, a, b);
            Tensor out(a.shape());
            const bool add = node.op == Op::Add;
            for (std::size_t i = 0; i < a.numel(); ++i) {
                const double bv = bc.same ? b[i] : b[bc.map[i]];
                out[i] = add ? a[i] + bv : a[i] * bv;
            }
            return out;
        }
        case Op::Relu: {
            Tensor out(in(0).shape());
            for (std::size_t i = 0; i < out.numel(); ++i) out[i] = in(0)[i] > 0.0 ? in(0)[i] : 0.0;
            return out;
        }
        case Op::SoftmaxCrossEntropy: return softmax_xent_fwd(g, id, in(0), in(1));
        case Op::Sum: return Tensor::scalar(pairwise_sum(in(0).data()));
        case Op::Reshape: return in(0).reshaped(reshape_target(g, id, in(0), node.target));
        case Op::MeanPool: {
            const Tensor& x = in(0);
            if (x.rank() < 2) throw ShapeError(g.describe(id) + ": mean_pool needs rank >= 2");
            const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1), k = node.window;
            if (h % k != 0 || w % k != 0) {
                throw ShapeError(g.describe(id) + ": window " + std::to_string(k) + " does not tile " +
                                 shape_string(x.shape()));
            }
            Shape os = x.shape();
            os[os.size() - 2] = h / k;
            os[os.size() - 1] = w / k;
            Tensor out(os);
            const std::size_t planes = x.numel() / (h * w);
            const double scale = 1.0 / static_cast<double>(k * k);
            for (std::size_t p = 0; p < planes; ++p)
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t xx = 0; xx < w; ++xx)
                        out[(p * (h / k) + y / k) * (w / k) + xx / k] += x[(p * h + y) * w + xx] * scale;
            return out;
        }
    }
    throw ContractError(g.describe(id) + ": unknown op");
}

void accumulate(std::optional<Tensor>& slot, const Tensor& delta) {
    if (!slot) {
        slot = delta;
        return;
    }
    for (std::size_t i = 0; i < delta.numel(); ++i) (*slot)[i] += delta[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// Forward / backward

Tape forward(const Graph& graph, const Bindings& inputs, const ParamVector& params) {
    Tape tape;
    tape.values.reserve(graph.size());
    for (NodeId id = 0; id < graph.size(); ++id) {
        Tensor t = forward_node(graph, id, tape.values, inputs, params);
        if (!t.all_finite()) throw OverflowError(graph.describe(id) + ": non-finite value");
        tape.values.push_back(std::move(t));
    }
    return tape;
}

Tape forward(const Graph& graph, const Bindings& inputs, const ParamVector& params,
             std::span<const NodeId> targets) {
    std::vector<char> live(graph.size(), 0);
    for (NodeId t : targets) {
        if (t >= graph.size()) throw ContractError("forward: target node out of range");
        live[t] = 1;
    }
    for (NodeId id = graph.size(); id-- > 0;) {
        if (!live[id]) continue;
        for (NodeId in : graph.node(id).inputs) live[in] = 1;
    }
    Tape tape;
    tape.values.reserve(graph.size());
    for (NodeId id = 0; id < graph.size(); ++id) {
        if (!live[id]) {
            tape.values.emplace_back();
            continue;
        }
        Tensor t = forward_node(graph, id, tape.values, inputs, params);
        if (!t.all_finite()) throw OverflowError(graph.describe(id) + ": non-finite value");
        tape.values.push_back(std::move(t));
    }
    return tape;
}

std::map<std::string, Tensor> eval_graph(const Graph& graph, const Bindings& inputs, const ParamVector& params,
                                         const std::vector<std::string>& outputs) {
    std::vector<NodeId> ids;
    for (const auto& name : outputs) ids.push_back(graph.find(name));
    Tape tape = forward(graph, inputs, params, ids);
    std::map<std::string, Tensor> out;
    for (std::size_t i = 0; i < outputs.size(); ++i) out.emplace(outputs[i], std::move(tape.values[ids[i]]));
    return out;
}

ParamVector backward(const Graph& graph, const Tape& tape, NodeId loss, const ParamLayout& layout) {
    if (loss >= graph.size() || tape.values.size() != graph.size()) {
        throw ContractError("backward: tape does not match graph");
    }
    const Tensor& lv = tape.values[loss];
    if (lv.rank() != 0 || lv.numel() != 1) {
        throw ContractError("backward: loss node " + graph.describe(loss) + " is not a scalar, shape " +
                            shape_string(lv.shape()));
    }

    // Only nodes downstream of a parameter carry gradient.
    std::vector<char> needs(graph.size(), 0);
    for (NodeId id = 0; id <= loss; ++id) {
        const Node& n = graph.node(id);
        if (n.op == Op::Param) {
            needs[id] = 1;
        } else if (n.op != Op::Input) {
            for (NodeId in : n.inputs) needs[id] |= needs[in];
        }
    }

    std::vector<std::optional<Tensor>> grads(graph.size());
    grads[loss] = Tensor::scalar(1.0);
    ParamVector out(layout);

    for (NodeId id = loss + 1; id-- > 0;) {
        if (!needs[id] || !grads[id]) continue;
        const Node& node = graph.node(id);
        const Tensor& gy = *grads[id];
        auto val = [&](std::size_t k) -> const Tensor& { return tape.values[node.inputs[k]]; };
        auto want = [&](std::size_t k) { return needs[node.inputs[k]] != 0; };
        auto slot = [&](std::size_t k) -> std::optional<Tensor>& { return grads[node.inputs[k]]; };

        switch (node.op) {
            case Op::Input: break;
            case Op::Param: {
                const auto& seg = layout.segment(node.segment);
                for (std::size_t i = 0; i < seg.size; ++i) out.values[seg.offset + i] += gy[i];
                break;
            }
            case Op::MatMul: {
                const Tensor& a = val(0);
                const Tensor& b = val(1);
                const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
                if (want(0)) {
                    Tensor da(a.shape());
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                            double s = 0.0;
                            for (std::size_t j = 0; j < n; ++j) s += gy[i * n + j] * b[p * n + j];
                            da[i * k + p] = s;
                        }
                    accumulate(slot(0), da);
                }
                if (want(1)) {
                    Tensor db(b.shape());
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                            const double av = a[i * k + p];
                            if (av == 0.0) continue;
                            for (std::size_t j = 0; j < n; ++j) db[p * n + j] += av * gy[i * n + j];
                        }
                    accumulate(slot(1), db);
                }
                break;
            }
            case Op::Conv2d: {
                const ConvDims d = conv_dims(graph, id, val(0), val(1), node.padding);
                const double* X = val(0).data().data();
                const double* K = val(1).data().data();
                if (want(0)) {
                    Tensor dx(val(0).shape());
                    double* DX = dx.data().data();
                    conv_taps(d, [&](std::size_t oi, std::size_t ii, std::size_t ki) { DX[ii] += gy[oi] * K[ki]; });
                    accumulate(slot(0), dx);
                }
                if (want(1)) {
                    Tensor dk(val(1).shape());
                    double* DK = dk.data().data();
                    conv_taps(d, [&](std::size_t oi, std::size_t ii, std::size_t ki) { DK[ki] += gy[oi] * X[ii]; });
                    accumulate(slot(1), dk);
                }
                break;
            }
            case Op::Add:
            case Op::Mul: {
                const Tensor& a = val(0);
                const Tensor& b = val(1);
                const Broadcast bc = make_broadcast(graph, id, a, b);
                const bool add = node.op == Op::Add;
                if (want(0)) {
                    Tensor da(a.shape());
                    for (std::size_t i = 0; i < a.numel(); ++i) {
                        da[i] = add ? gy[i] : gy[i] * (bc.same ? b[i] : b[bc.map[i]]);
                    }
                    accumulate(slot(0), da);
                }
                if (want(1)) {
                    Tensor db(b.shape());
                    for (std::size_t i = 0; i < a.numel(); ++i) {
                        const std::size_t j = bc.same ? i : bc.map[i];
                        db[j] += add ? gy[i] : gy[i] * a[i];
                    }
                    accumulate(slot(1), db);
                }
                break;
            }
            case Op::Relu: {
                if (!want(0)) break;
                Tensor dx(val(0).shape());
                for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] = val(0)[i] > 0.0 ? gy[i] : 0.0;
                accumulate(slot(0), dx);
                break;
            }
            case Op::SoftmaxCrossEntropy: {
                if (!want(0)) break;
                const Tensor& logits = val(0);
                const Tensor& labels = val(1);
                const std::size_t n = logits.dim(0), c = logits.dim(1);
                const double scale = gy.item() / static_cast<double>(n);
                Tensor dl(logits.shape());
                for (std::size_t i = 0; i < n; ++i) {
                    const double* row = logits.data().data() + i * c;
                    const double mx = *std::max_element(row, row + c);
                    double z = 0.0;
                    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
                    for (std::size_t j = 0; j < c; ++j) dl[i * c + j] = std::exp(row[j] - mx) / z * scale;
                    dl[i * c + static_cast<std::size_t>(labels[i])] -= scale;
                }
                accumulate(slot(0), dl);
                break;
            }
            case Op::Sum: {
                if (!want(0)) break;
                accumulate(slot(0), Tensor(val(0).shape(), gy.item()));
                break;
            }
            case Op::Reshape: {
                if (!want(0)) break;
                accumulate(slot(0), gy.reshaped(val(0).shape()));
                break;
            }
            case Op::MeanPool: {
                if (!want(0)) break;
                const Tensor& x = val(0);
                const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1), k = node.window;
                const std::size_t planes = x.numel() / (h * w);
                const double scale = 1.0 / static_cast<double>(k * k);
                Tensor dx(x.shape());
                for (std::size_t p = 0; p < planes; ++p)
                    for (std::size_t y = 0; y < h; ++y)
                        for (std::size_t xx = 0; xx < w; ++xx)
                            dx[(p * h + y) * w + xx] = gy[(p * (h / k) + y / k) * (w / k) + xx / k] * scale;
                accumulate(slot(0), dx);
                break;
            }
        }
        grads[id].reset();
    }
    return out;
}

ValueAndGrad value_and_grad(const Graph& graph, const Bindings& inputs, const ParamVector& params, NodeId loss) {
    ValueAndGrad r;
    r.tape = forward(graph, inputs, params);
    r.loss = r.tape.values.at(loss).item();
    r.grad = backward(graph, r.tape, loss, params.layout);
    return r;
}

ParamVector finite_difference_gradient(const LossFn& loss_fn, const ParamVector& params, double eps) {
    if (!(eps > 0.0)) throw ContractError("finite_difference_gradient: eps must be positive");
    ParamVector grad(params.layout);
    ParamVector probe = params;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double orig = params.values[i];
        probe.values[i] = orig + eps;
        const double up = loss_fn(probe);
        probe.values[i] = orig - eps;
        const double down = loss_fn(probe);
        probe.values[i] = orig;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw OverflowError("finite_difference_gradient: non-finite loss at coordinate " + std::to_string(i));
        }
        grad.values[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

}  // namespace sculpt
