// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over dense tensors.
//
// A Graph is a tape of op records built by one forward pass. Node ids are
// indices into the tape; creation order is topological order, so backward()
// is a single reverse sweep. Leaves with requires_grad receive populated
// gradients after backward(); interior gradients are kept only while needed.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tpl/tensor.hpp"

namespace tpl {

using NodeId = std::uint32_t;

enum class OpKind : std::uint8_t {
    Leaf,
    MatMul,
    Add,
    AddRowBcast,
    Mul,
    Scale,
    ConcatRows,
    ConcatCols,
    SliceRows,
    SliceCols,
    MeanAxis,
    LayerNorm,
    Gelu,
    SoftmaxRows,
    L2NormRows,
    CosineSim,
    Log,
    Exp,
    Sum,
    Reshape,
    GatherRows,
};

const char* op_name(OpKind k);

class Graph {
public:
    Graph() { nodes_.reserve(1024); }

    // Leaves. Values must be finite; requires_grad is taken from the tensor.
    NodeId leaf(Tensor t);
    NodeId constant(Tensor t);  // leaf with requires_grad forced off

    // Matrix product with optional transposes: op(a) * op(b).
    NodeId matmul(NodeId a, NodeId b, bool trans_a = false, bool trans_b = false);
    NodeId add(NodeId a, NodeId b);                  // same shape
    NodeId add_row_broadcast(NodeId a, NodeId row);  // (m x n) + (1 x n)
    NodeId mul(NodeId a, NodeId b);                  // Hadamard
    NodeId scale(NodeId a, double s);
    NodeId concat_rows(std::span<const NodeId> parts);
    NodeId concat_cols(std::span<const NodeId> parts);
    NodeId slice_rows(NodeId a, std::size_t begin, std::size_t end);
    NodeId slice_cols(NodeId a, std::size_t begin, std::size_t end);
    NodeId mean_axis(NodeId a, int axis);  // 0: over rows, 1: over cols
    NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, double eps = 1e-5);
    NodeId gelu(NodeId a);
    NodeId softmax_rows(NodeId a);
    NodeId l2_normalize_rows(NodeId a);
    NodeId cosine_similarity(NodeId a, NodeId b);  // vectors -> scalar
    NodeId log(NodeId a);
    NodeId exp(NodeId a);
    NodeId sum(NodeId a);  // -> 1 x 1
    NodeId reshape(NodeId a, std::vector<std::size_t> shape);
    NodeId gather_rows(NodeId table, std::vector<std::size_t> ids);

    // Reverse sweep from a scalar loss. May be called once per graph.
    void backward(NodeId loss);

    const Tensor& value(NodeId id) const;
    bool has_grad(NodeId id) const;
    const std::vector<double>& grad(NodeId id) const;
    Tensor grad_tensor(NodeId id) const;  // grad with the node's shape

    std::size_t size() const { return nodes_.size(); }
    bool backward_done() const { return backward_done_; }

private:
    struct Node {
        OpKind op = OpKind::Leaf;
        std::vector<NodeId> inputs;
        Tensor value;
        std::vector<double> grad;  // empty until first contribution
        bool needs_grad = false;
        // Op-specific state.
        double s = 0.0;               // Scale factor / LayerNorm eps
        std::size_t i0 = 0, i1 = 0;   // slice bounds / axis
        bool ta = false, tb = false;  // MatMul transposes
        std::vector<double> saved;    // LayerNorm x-hat+rstd, L2 norms, cosine stash
        std::vector<std::size_t> ids; // GatherRows indices
    };

    const Node& node(NodeId id) const;
    Node& node(NodeId id);
    NodeId push(Node n);
    void check_id(NodeId id, const char* op) const;
    std::vector<double>& grad_buffer(Node& n);
    void backward_node(NodeId id);

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

}  // namespace tpl
