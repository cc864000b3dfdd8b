// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0

#include "tpl/graph.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>
#include <utility>

namespace tpl {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMat>;
using MapC = Eigen::Map<const RowMat>;

MapC cmap(const Tensor& t) {
    return MapC(t.values.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::Leaf: return "leaf";
        case OpKind::MatMul: return "matmul";
        case OpKind::Add: return "add";
        case OpKind::AddRowBcast: return "add_row_broadcast";
        case OpKind::Mul: return "mul";
        case OpKind::Scale: return "scale";
        case OpKind::ConcatRows: return "concat_rows";
        case OpKind::ConcatCols: return "concat_cols";
        case OpKind::SliceRows: return "slice_rows";
        case OpKind::SliceCols: return "slice_cols";
        case OpKind::MeanAxis: return "mean_axis";
        case OpKind::LayerNorm: return "layer_norm";
        case OpKind::Gelu: return "gelu";
        case OpKind::SoftmaxRows: return "softmax_rows";
        case OpKind::L2NormRows: return "l2_normalize_rows";
        case OpKind::CosineSim: return "cosine_similarity";
        case OpKind::Log: return "log";
        case OpKind::Exp: return "exp";
        case OpKind::Sum: return "sum";
        case OpKind::Reshape: return "reshape";
        case OpKind::GatherRows: return "gather_rows";
    }
    return "?";
}

const Graph::Node& Graph::node(NodeId id) const { return nodes_[id]; }
Graph::Node& Graph::node(NodeId id) { return nodes_[id]; }

void Graph::check_id(NodeId id, const char* op) const {
    if (id >= nodes_.size()) {
        throw Error(strf(op, ": node id ", id, " out of range (graph has ", nodes_.size(),
                         " nodes)"));
    }
}

NodeId Graph::push(Node n) {
    if (backward_done_) throw Error("graph: cannot record ops after backward");
    for (NodeId in : n.inputs) {
        if (node(in).needs_grad) {
            n.needs_grad = true;
            break;
        }
    }
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

std::vector<double>& Graph::grad_buffer(Node& n) {
    if (n.grad.empty()) n.grad.assign(n.value.numel(), 0.0);
    return n.grad;
}

NodeId Graph::leaf(Tensor t) {
    if (!t.all_finite()) throw NumericError("leaf: non-finite input values");
    Node n;
    n.op = OpKind::Leaf;
    n.needs_grad = t.requires_grad;
    n.value = std::move(t);
    if (backward_done_) throw Error("graph: cannot record ops after backward");
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::constant(Tensor t) {
    t.requires_grad = false;
    return leaf(std::move(t));
}

NodeId Graph::matmul(NodeId a, NodeId b, bool trans_a, bool trans_b) {
    check_id(a, "matmul");
    check_id(b, "matmul");
    const Tensor& A = node(a).value;
    const Tensor& B = node(b).value;
    const std::size_t m = trans_a ? A.cols() : A.rows();
    const std::size_t k = trans_a ? A.rows() : A.cols();
    const std::size_t k2 = trans_b ? B.cols() : B.rows();
    const std::size_t nn = trans_b ? B.rows() : B.cols();
    if (k != k2) {
        throw ShapeError(strf("matmul: inner dimensions disagree for ", A.shape_str(),
                              trans_a ? "^T" : "", " * ", B.shape_str(), trans_b ? "^T" : ""));
    }
    Node n;
    n.op = OpKind::MatMul;
    n.inputs = {a, b};
    n.ta = trans_a;
    n.tb = trans_b;
    n.value = Tensor::zeros({m, nn});
    MapM mC(n.value.values.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(nn));
    MapC mA = cmap(A);
    MapC mB = cmap(B);
    if (!trans_a && !trans_b) mC.noalias() = mA * mB;
    else if (trans_a && !trans_b) mC.noalias() = mA.transpose() * mB;
    else if (!trans_a && trans_b) mC.noalias() = mA * mB.transpose();
    else mC.noalias() = mA.transpose() * mB.transpose();
    return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
    check_id(a, "add");
    check_id(b, "add");
    const Tensor& A = node(a).value;
    const Tensor& B = node(b).value;
    if (A.rows() != B.rows() || A.cols() != B.cols()) {
        throw ShapeError(strf("add: shape mismatch ", A.shape_str(), " vs ", B.shape_str()));
    }
    Node n;
    n.op = OpKind::Add;
    n.inputs = {a, b};
    n.value = A;
    n.value.requires_grad = false;
    n.value.grad.reset();
    for (std::size_t i = 0; i < B.numel(); ++i) n.value.values[i] += B.values[i];
    return push(std::move(n));
}

NodeId Graph::add_row_broadcast(NodeId a, NodeId row) {
    check_id(a, "add_row_broadcast");
    check_id(row, "add_row_broadcast");
    const Tensor& A = node(a).value;
    const Tensor& R = node(row).value;
    if (R.rows() != 1 || R.cols() != A.cols()) {
        throw ShapeError(strf("add_row_broadcast: shape mismatch ", A.shape_str(), " vs ",
                              R.shape_str()));
    }
    Node n;
    n.op = OpKind::AddRowBcast;
    n.inputs = {a, row};
    n.value = A;
    n.value.requires_grad = false;
    n.value.grad.reset();
    const std::size_t rows = A.rows(), cols = A.cols();
    for (std::size_t r = 0; r < rows; ++r) {
        double* out = n.value.values.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) out[c] += R.values[c];
    }
    return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
    check_id(a, "mul");
    check_id(b, "mul");
    const Tensor& A = node(a).value;
    const Tensor& B = node(b).value;
    if (A.rows() != B.rows() || A.cols() != B.cols()) {
        throw ShapeError(strf("mul: shape mismatch ", A.shape_str(), " vs ", B.shape_str()));
    }
    Node n;
    n.op = OpKind::Mul;
    n.inputs = {a, b};
    n.value = A;
    n.value.requires_grad = false;
    n.value.grad.reset();
    for (std::size_t i = 0; i < B.numel(); ++i) n.value.values[i] *= B.values[i];
    return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double s) {
    check_id(a, "scale");
    Node n;
    n.op = OpKind::Scale;
    n.inputs = {a};
    n.s = s;
    n.value = node(a).value;
    n.value.requires_grad = false;
    n.value.grad.reset();
    for (double& v : n.value.values) v *= s;
    return push(std::move(n));
}

NodeId Graph::concat_rows(std::span<const NodeId> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    std::size_t rows = 0;
    const std::size_t cols = node(parts[0]).value.cols();
    for (NodeId id : parts) {
        check_id(id, "concat_rows");
        const Tensor& t = node(id).value;
        if (t.cols() != cols) {
            throw ShapeError(strf("concat_rows: column mismatch ", t.shape_str(), " vs [*, ",
                                  cols, "]"));
        }
        rows += t.rows();
    }
    Node n;
    n.op = OpKind::ConcatRows;
    n.inputs.assign(parts.begin(), parts.end());
    n.value = Tensor::zeros({rows, cols});
    std::size_t r = 0;
    for (NodeId id : parts) {
        const Tensor& t = node(id).value;
        std::memcpy(n.value.values.data() + r * cols, t.values.data(),
                    t.numel() * sizeof(double));
        r += t.rows();
    }
    return push(std::move(n));
}

NodeId Graph::concat_cols(std::span<const NodeId> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t rows = node(parts[0]).value.rows();
    std::size_t cols = 0;
    for (NodeId id : parts) {
        check_id(id, "concat_cols");
        const Tensor& t = node(id).value;
        if (t.rows() != rows) {
            throw ShapeError(strf("concat_cols: row mismatch ", t.shape_str(), " vs [", rows,
                                  ", *]"));
        }
        cols += t.cols();
    }
    Node n;
    n.op = OpKind::ConcatCols;
    n.inputs.assign(parts.begin(), parts.end());
    n.value = Tensor::zeros({rows, cols});
    std::size_t c0 = 0;
    for (NodeId id : parts) {
        const Tensor& t = node(id).value;
        const std::size_t pc = t.cols();
        for (std::size_t r = 0; r < rows; ++r) {
            std::memcpy(n.value.values.data() + r * cols + c0, t.values.data() + r * pc,
                        pc * sizeof(double));
        }
        c0 += pc;
    }
    return push(std::move(n));
}

NodeId Graph::slice_rows(NodeId a, std::size_t begin, std::size_t end) {
    check_id(a, "slice_rows");
    const Tensor& A = node(a).value;
    if (begin >= end || end > A.rows()) {
        throw ShapeError(strf("slice_rows: range [", begin, ", ", end, ") invalid for ",
                              A.shape_str()));
    }
    Node n;
    n.op = OpKind::SliceRows;
    n.inputs = {a};
    n.i0 = begin;
    n.i1 = end;
    const std::size_t cols = A.cols();
    n.value = Tensor::zeros({end - begin, cols});
    std::memcpy(n.value.values.data(), A.values.data() + begin * cols,
                (end - begin) * cols * sizeof(double));
    return push(std::move(n));
}

NodeId Graph::slice_cols(NodeId a, std::size_t begin, std::size_t end) {
    check_id(a, "slice_cols");
    const Tensor& A = node(a).value;
    if (begin >= end || end > A.cols()) {
        throw ShapeError(strf("slice_cols: range [", begin, ", ", end, ") invalid for ",
                              A.shape_str()));
    }
    Node n;
    n.op = OpKind::SliceCols;
    n.inputs = {a};
    n.i0 = begin;
    n.i1 = end;
    const std::size_t rows = A.rows(), cols = A.cols(), w = end - begin;
    n.value = Tensor::zeros({rows, w});
    for (std::size_t r = 0; r < rows; ++r) {
        std::memcpy(n.value.values.data() + r * w, A.values.data() + r * cols + begin,
                    w * sizeof(double));
    }
    return push(std::move(n));
}

NodeId Graph::mean_axis(NodeId a, int axis) {
    check_id(a, "mean_axis");
    if (axis != 0 && axis != 1) throw ShapeError(strf("mean_axis: axis ", axis, " not in {0,1}"));
    const Tensor& A = node(a).value;
    const std::size_t rows = A.rows(), cols = A.cols();
    Node n;
    n.op = OpKind::MeanAxis;
    n.inputs = {a};
    n.i0 = static_cast<std::size_t>(axis);
    if (axis == 0) {
        n.value = Tensor::zeros({1, cols});
        for (std::size_t r = 0; r < rows; ++r) {
            const double* src = A.values.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) n.value.values[c] += src[c];
        }
        const double inv = 1.0 / static_cast<double>(rows);
        for (double& v : n.value.values) v *= inv;
    } else {
        n.value = Tensor::zeros({rows, 1});
        const double inv = 1.0 / static_cast<double>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            const double* src = A.values.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) acc += src[c];
            n.value.values[r] = acc * inv;
        }
    }
    return push(std::move(n));
}

NodeId Graph::layer_norm(NodeId x, NodeId gain, NodeId bias, double eps) {
    check_id(x, "layer_norm");
    check_id(gain, "layer_norm");
    check_id(bias, "layer_norm");
    const Tensor& X = node(x).value;
    const Tensor& G = node(gain).value;
    const Tensor& B = node(bias).value;
    const std::size_t rows = X.rows(), cols = X.cols();
    if (G.numel() != cols || B.numel() != cols) {
        throw ShapeError(strf("layer_norm: gain/bias ", G.shape_str(), "/", B.shape_str(),
                              " do not match row width of ", X.shape_str()));
    }
    Node n;
    n.op = OpKind::LayerNorm;
    n.inputs = {x, gain, bias};
    n.s = eps;
    n.value = Tensor::zeros({rows, cols});
    n.saved.resize(rows * cols + rows);  // x-hat rows, then per-row rstd
    for (std::size_t r = 0; r < rows; ++r) {
        const double* src = X.values.data() + r * cols;
        double mean = 0.0;
        for (std::size_t c = 0; c < cols; ++c) mean += src[c];
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double d = src[c] - mean;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        const double rstd = 1.0 / std::sqrt(var + eps);
        n.saved[rows * cols + r] = rstd;
        double* xh = n.saved.data() + r * cols;
        double* out = n.value.values.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) {
            xh[c] = (src[c] - mean) * rstd;
            out[c] = xh[c] * G.values[c] + B.values[c];
        }
    }
    return push(std::move(n));
}

NodeId Graph::gelu(NodeId a) {
    check_id(a, "gelu");
    Node n;
    n.op = OpKind::Gelu;
    n.inputs = {a};
    n.value = node(a).value;
    n.value.requires_grad = false;
    n.value.grad.reset();
    for (double& v : n.value.values) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    return push(std::move(n));
}

NodeId Graph::softmax_rows(NodeId a) {
    check_id(a, "softmax_rows");
    const Tensor& A = node(a).value;
    const std::size_t rows = A.rows(), cols = A.cols();
    Node n;
    n.op = OpKind::SoftmaxRows;
    n.inputs = {a};
    n.value = Tensor::zeros({rows, cols});
    for (std::size_t r = 0; r < rows; ++r) {
        const double* src = A.values.data() + r * cols;
        double* out = n.value.values.data() + r * cols;
        double mx = src[0];
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, src[c]);
        double denom = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            out[c] = std::exp(src[c] - mx);
            denom += out[c];
        }
        const double inv = 1.0 / denom;
        for (std::size_t c = 0; c < cols; ++c) out[c] *= inv;
    }
    return push(std::move(n));
}

NodeId Graph::l2_normalize_rows(NodeId a) {
    check_id(a, "l2_normalize_rows");
    const Tensor& A = node(a).value;
    const std::size_t rows = A.rows(), cols = A.cols();
    Node n;
    n.op = OpKind::L2NormRows;
    n.inputs = {a};
    n.value = Tensor::zeros({rows, cols});
    n.value.shape = A.shape;  // keep rank-1 inputs rank-1
    n.saved.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* src = A.values.data() + r * cols;
        double* out = n.value.values.data() + r * cols;
        double sq = 0.0;
        for (std::size_t c = 0; c < cols; ++c) sq += src[c] * src[c];
        const double norm = std::sqrt(sq);
        if (!(norm > 0.0)) throw NumericError("l2_normalize_rows: zero-norm row");
        n.saved[r] = norm;
        const double inv = 1.0 / norm;
        for (std::size_t c = 0; c < cols; ++c) out[c] = src[c] * inv;
    }
    return push(std::move(n));
}

NodeId Graph::cosine_similarity(NodeId a, NodeId b) {
    check_id(a, "cosine_similarity");
    check_id(b, "cosine_similarity");
    const Tensor& A = node(a).value;
    const Tensor& B = node(b).value;
    if (A.numel() != B.numel() || (A.rows() != 1 && A.cols() != 1) ||
        (B.rows() != 1 && B.cols() != 1)) {
        throw ShapeError(strf("cosine_similarity: expected two vectors, got ", A.shape_str(),
                              " vs ", B.shape_str()));
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < A.numel(); ++i) {
        dot += A.values[i] * B.values[i];
        na += A.values[i] * A.values[i];
        nb += B.values[i] * B.values[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (!(na > 0.0) || !(nb > 0.0)) throw NumericError("cosine_similarity: zero-norm vector");
    Node n;
    n.op = OpKind::CosineSim;
    n.inputs = {a, b};
    n.value = Tensor::scalar(dot / (na * nb));
    n.saved = {na, nb};
    return push(std::move(n));
}

NodeId Graph::log(NodeId a) {
    check_id(a, "log");
    const Tensor& A = node(a).value;
    for (double v : A.values) {
        if (!(v > 0.0)) throw NumericError(strf("log: non-positive input ", v));
    }
    Node n;
    n.op = OpKind::Log;
    n.inputs = {a};
    n.value = A;
    n.value.requires_grad = false;
    n.value.grad.reset();
    for (double& v : n.value.values) v = std::log(v);
    return push(std::move(n));
}

NodeId Graph::exp(NodeId a) {
    check_id(a, "exp");
    Node n;
    n.op = OpKind::Exp;
    n.inputs = {a};
    n.value = node(a).value;
    n.value.requires_grad = false;
    n.value.grad.reset();
    for (double& v : n.value.values) {
        v = std::exp(v);
        if (!std::isfinite(v)) throw NumericError("exp: overflow to non-finite value");
    }
    return push(std::move(n));
}

NodeId Graph::sum(NodeId a) {
    check_id(a, "sum");
    const Tensor& A = node(a).value;
    double acc = 0.0;
    for (double v : A.values) acc += v;
    Node n;
    n.op = OpKind::Sum;
    n.inputs = {a};
    n.value = Tensor::scalar(acc);
    return push(std::move(n));
}

NodeId Graph::reshape(NodeId a, std::vector<std::size_t> shape) {
    check_id(a, "reshape");
    const Tensor& A = node(a).value;
    std::size_t prod = 1;
    for (std::size_t e : shape) prod *= e;
    if (shape.empty() || prod != A.numel()) {
        throw ShapeError(strf("reshape: cannot view ", A.shape_str(), " as ", shape_str(shape)));
    }
    Node n;
    n.op = OpKind::Reshape;
    n.inputs = {a};
    n.value = Tensor(std::move(shape), A.values);
    return push(std::move(n));
}

NodeId Graph::gather_rows(NodeId table, std::vector<std::size_t> ids) {
    check_id(table, "gather_rows");
    const Tensor& T = node(table).value;
    if (ids.empty()) throw ShapeError("gather_rows: empty index list");
    const std::size_t rows = T.rows(), cols = T.cols();
    for (std::size_t id : ids) {
        if (id >= rows) {
            throw ShapeError(strf("gather_rows: index ", id, " out of range for ",
                                  T.shape_str()));
        }
    }
    Node n;
    n.op = OpKind::GatherRows;
    n.inputs = {table};
    n.value = Tensor::zeros({ids.size(), cols});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        std::memcpy(n.value.values.data() + i * cols, T.values.data() + ids[i] * cols,
                    cols * sizeof(double));
    }
    n.ids = std::move(ids);
    return push(std::move(n));
}

const Tensor& Graph::value(NodeId id) const {
    check_id(id, "value");
    return node(id).value;
}

bool Graph::has_grad(NodeId id) const {
    check_id(id, "has_grad");
    return !node(id).grad.empty();
}

const std::vector<double>& Graph::grad(NodeId id) const {
    check_id(id, "grad");
    if (node(id).grad.empty()) {
        throw Error(strf("grad: node ", id, " has no gradient (backward not run or unused node)"));
    }
    return node(id).grad;
}

Tensor Graph::grad_tensor(NodeId id) const {
    Tensor g(node(id).value.shape, grad(id));
    return g;
}

void Graph::backward(NodeId loss) {
    if (nodes_.empty()) throw Error("backward: no forward pass recorded");
    check_id(loss, "backward");
    if (backward_done_) throw Error("backward: already run on this graph");
    const Tensor& lv = node(loss).value;
    if (lv.numel() != 1) {
        throw ShapeError(strf("backward: loss must be scalar, got ", lv.shape_str()));
    }
    if (!std::isfinite(lv.values[0])) throw NumericError("backward: loss is non-finite");
    backward_done_ = true;
    if (node(loss).needs_grad) {
        grad_buffer(node(loss))[0] = 1.0;
        for (NodeId id = loss + 1; id-- > 0;) {
            if (!node(id).grad.empty() && node(id).op != OpKind::Leaf) backward_node(id);
        }
    }
    // Every requires-grad leaf reports a gradient, zero if unused by the loss.
    for (Node& n : nodes_) {
        if (n.op == OpKind::Leaf && n.value.requires_grad && n.grad.empty()) {
            n.grad.assign(n.value.numel(), 0.0);
        }
    }
}

void Graph::backward_node(NodeId id) {
    Node& n = node(id);
    const std::vector<double>& gy = n.grad;
    const std::size_t rows = n.value.rows(), cols = n.value.cols();

    auto want = [&](std::size_t slot) { return node(n.inputs[slot]).needs_grad; };
    auto gbuf = [&](std::size_t slot) -> std::vector<double>& {
        return grad_buffer(node(n.inputs[slot]));
    };

    switch (n.op) {
        case OpKind::Leaf:
            break;
        case OpKind::MatMul: {
            const Tensor& A = node(n.inputs[0]).value;
            const Tensor& B = node(n.inputs[1]).value;
            MapC mA = cmap(A);
            MapC mB = cmap(B);
            MapC mdC(gy.data(), static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
            if (want(0)) {
                MapM mgA(gbuf(0).data(), static_cast<Eigen::Index>(A.rows()),
                         static_cast<Eigen::Index>(A.cols()));
                if (!n.ta && !n.tb) mgA.noalias() += mdC * mB.transpose();
                else if (!n.ta && n.tb) mgA.noalias() += mdC * mB;
                else if (n.ta && !n.tb) mgA.noalias() += mB * mdC.transpose();
                else mgA.noalias() += mB.transpose() * mdC.transpose();
            }
            if (want(1)) {
                MapM mgB(gbuf(1).data(), static_cast<Eigen::Index>(B.rows()),
                         static_cast<Eigen::Index>(B.cols()));
                if (!n.ta && !n.tb) mgB.noalias() += mA.transpose() * mdC;
                else if (n.ta && !n.tb) mgB.noalias() += mA * mdC;
                else if (!n.ta && n.tb) mgB.noalias() += mdC.transpose() * mA;
                else mgB.noalias() += mdC.transpose() * mA.transpose();
            }
            break;
        }
        case OpKind::Add: {
            for (int slot = 0; slot < 2; ++slot) {
                if (!want(slot)) continue;
                std::vector<double>& g = gbuf(slot);
                for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
            }
            break;
        }
        case OpKind::AddRowBcast: {
            if (want(0)) {
                std::vector<double>& g = gbuf(0);
                for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
            }
            if (want(1)) {
                std::vector<double>& g = gbuf(1);
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* src = gy.data() + r * cols;
                    for (std::size_t c = 0; c < cols; ++c) g[c] += src[c];
                }
            }
            break;
        }
        case OpKind::Mul: {
            const Tensor& A = node(n.inputs[0]).value;
            const Tensor& B = node(n.inputs[1]).value;
            if (want(0)) {
                std::vector<double>& g = gbuf(0);
                for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * B.values[i];
            }
            if (want(1)) {
                std::vector<double>& g = gbuf(1);
                for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * A.values[i];
            }
            break;
        }
        case OpKind::Scale: {
            if (want(0)) {
                std::vector<double>& g = gbuf(0);
                for (std::size_t i = 0; i < gy.size(); ++i) g[i] += n.s * gy[i];
            }
            break;
        }
        case OpKind::ConcatRows: {
            std::size_t r = 0;
            for (std::size_t slot = 0; slot < n.inputs.size(); ++slot) {
                const Tensor& part = node(n.inputs[slot]).value;
                if (want(slot)) {
                    std::vector<double>& g = gbuf(slot);
                    const double* src = gy.data() + r * cols;
                    for (std::size_t i = 0; i < part.numel(); ++i) g[i] += src[i];
                }
                r += part.rows();
            }
            break;
        }
        case OpKind::ConcatCols: {
            std::size_t c0 = 0;
            for (std::size_t slot = 0; slot < n.inputs.size(); ++slot) {
                const Tensor& part = node(n.inputs[slot]).value;
                const std::size_t pc = part.cols();
                if (want(slot)) {
                    std::vector<double>& g = gbuf(slot);
                    for (std::size_t r = 0; r < rows; ++r) {
                        const double* src = gy.data() + r * cols + c0;
                        double* dst = g.data() + r * pc;
                        for (std::size_t c = 0; c < pc; ++c) dst[c] += src[c];
                    }
                }
                c0 += pc;
            }
            break;
        }
        case OpKind::SliceRows: {
            if (want(0)) {
                std::vector<double>& g = gbuf(0);
                double* dst = g.data() + n.i0 * cols;
                for (std::size_t i = 0; i < gy.size(); ++i) dst[i] += gy[i];
            }
            break;
        }
        case OpKind::SliceCols: {
            if (want(0)) {
                const Tensor& A = node(n.inputs[0]).value;
                const std::size_t acols = A.cols();
                std::vector<double>& g = gbuf(0);
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* src = gy.data() + r * cols;
                    double* dst = g.data() + r * acols + n.i0;
                    for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
                }
            }
            break;
        }
        case OpKind::MeanAxis: {
            if (!want(0)) break;
            const Tensor& A = node(n.inputs[0]).value;
            const std::size_t arows = A.rows(), acols = A.cols();
            std::vector<double>& g = gbuf(0);
            if (n.i0 == 0) {
                const double inv = 1.0 / static_cast<double>(arows);
                for (std::size_t r = 0; r < arows; ++r) {
                    double* dst = g.data() + r * acols;
                    for (std::size_t c = 0; c < acols; ++c) dst[c] += gy[c] * inv;
                }
            } else {
                const double inv = 1.0 / static_cast<double>(acols);
                for (std::size_t r = 0; r < arows; ++r) {
                    double* dst = g.data() + r * acols;
                    const double gr = gy[r] * inv;
                    for (std::size_t c = 0; c < acols; ++c) dst[c] += gr;
                }
            }
            break;
        }
        case OpKind::LayerNorm: {
            const Tensor& G = node(n.inputs[1]).value;
            const double* xh = n.saved.data();
            const double* rstd = n.saved.data() + rows * cols;
            for (std::size_t r = 0; r < rows; ++r) {
                const double* gyr = gy.data() + r * cols;
                const double* xhr = xh + r * cols;
                double h1 = 0.0, h2 = 0.0;
                for (std::size_t c = 0; c < cols; ++c) {
                    const double dxh = gyr[c] * G.values[c];
                    h1 += dxh;
                    h2 += dxh * xhr[c];
                }
                const double invc = 1.0 / static_cast<double>(cols);
                h1 *= invc;
                h2 *= invc;
                if (want(0)) {
                    double* dst = gbuf(0).data() + r * cols;
                    for (std::size_t c = 0; c < cols; ++c) {
                        const double dxh = gyr[c] * G.values[c];
                        dst[c] += rstd[r] * (dxh - h1 - xhr[c] * h2);
                    }
                }
                if (want(1)) {
                    double* dst = gbuf(1).data();
                    for (std::size_t c = 0; c < cols; ++c) dst[c] += gyr[c] * xhr[c];
                }
                if (want(2)) {
                    double* dst = gbuf(2).data();
                    for (std::size_t c = 0; c < cols; ++c) dst[c] += gyr[c];
                }
            }
            break;
        }
        case OpKind::Gelu: {
            if (want(0)) {
                const Tensor& A = node(n.inputs[0]).value;
                std::vector<double>& g = gbuf(0);
                for (std::size_t i = 0; i < gy.size(); ++i) {
                    const double x = A.values[i];
                    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                    g[i] += gy[i] * (cdf + x * pdf);
                }
            }
            break;
        }
        case OpKind::SoftmaxRows: {
            if (want(0)) {
                std::vector<double>& g = gbuf(0);
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* y = n.value.values.data() + r * cols;
                    const double* gr = gy.data() + r * cols;
                    double dot = 0.0;
                    for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * y[c];
                    double* dst = g.data() + r * cols;
                    for (std::size_t c = 0; c < cols; ++c) dst[c] += y[c] * (gr[c] - dot);
                }
            }
            break;
        }
        case OpKind::L2NormRows: {
            if (want(0)) {
                std::vector<double>& g = gbuf(0);
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* y = n.value.values.data() + r * cols;
                    const double* gr = gy.data() + r * cols;
                    double dot = 0.0;
                    for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * y[c];
                    const double inv = 1.0 / n.saved[r];
                    double* dst = g.data() + r * cols;
                    for (std::size_t c = 0; c < cols; ++c) dst[c] += (gr[c] - y[c] * dot) * inv;
                }
            }
            break;
        }
        case OpKind::CosineSim: {
            const Tensor& A = node(n.inputs[0]).value;
            const Tensor& B = node(n.inputs[1]).value;
            const double na = n.saved[0], nb = n.saved[1];
            const double c = n.value.values[0];
            const double g0 = gy[0];
            if (want(0)) {
                std::vector<double>& g = gbuf(0);
                const double ib = 1.0 / (na * nb), ia2 = 1.0 / (na * na);
                for (std::size_t i = 0; i < A.numel(); ++i) {
                    g[i] += g0 * (B.values[i] * ib - c * A.values[i] * ia2);
                }
            }
            if (want(1)) {
                std::vector<double>& g = gbuf(1);
                const double ia = 1.0 / (na * nb), ib2 = 1.0 / (nb * nb);
                for (std::size_t i = 0; i < B.numel(); ++i) {
                    g[i] += g0 * (A.values[i] * ia - c * B.values[i] * ib2);
                }
            }
            break;
        }
        case OpKind::Log: {
            if (want(0)) {
                const Tensor& A = node(n.inputs[0]).value;
                std::vector<double>& g = gbuf(0);
                for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] / A.values[i];
            }
            break;
        }
        case OpKind::Exp: {
            if (want(0)) {
                std::vector<double>& g = gbuf(0);
                for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * n.value.values[i];
            }
            break;
        }
        case OpKind::Sum: {
            if (want(0)) {
                std::vector<double>& g = gbuf(0);
                const double g0 = gy[0];
                for (double& v : g) v += g0;
            }
            break;
        }
        case OpKind::Reshape: {
            if (want(0)) {
                std::vector<double>& g = gbuf(0);
                for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
            }
            break;
        }
        case OpKind::GatherRows: {
            if (want(0)) {
                std::vector<double>& g = gbuf(0);
                for (std::size_t i = 0; i < n.ids.size(); ++i) {
                    const double* src = gy.data() + i * cols;
                    double* dst = g.data() + n.ids[i] * cols;
                    for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
                }
            }
            break;
        }
    }
}

}  // namespace tpl
