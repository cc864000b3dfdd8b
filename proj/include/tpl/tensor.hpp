// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensor of 64-bit floats with an optional gradient slot.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include "tpl/common.hpp"

namespace tpl {

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::optional<std::vector<double>> grad;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> v);

    std::size_t numel() const { return values.size(); }
    std::size_t rank() const { return shape.size(); }

    // 2-D view: rank-1 tensors read as a single row.
    std::size_t rows() const;
    std::size_t cols() const;

    double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

    bool all_finite() const;
    std::string shape_str() const;

    void zero_grad();
    // Accumulate g (same length as values) into grad, allocating on demand.
    void accumulate_grad(const std::vector<double>& g);

    static Tensor zeros(std::vector<std::size_t> s);
    static Tensor full(std::vector<std::size_t> s, double v);
    static Tensor scalar(double v);
    static Tensor row(std::vector<double> v);                   // 1 x n
    static Tensor matrix(std::size_t r, std::size_t c, std::vector<double> v);
    static Tensor randn(std::vector<std::size_t> s, Rng& rng, double stddev, double mean = 0.0);
};

bool same_shape(const Tensor& a, const Tensor& b);
std::string shape_str(const std::vector<std::size_t>& s);

}  // namespace tpl
