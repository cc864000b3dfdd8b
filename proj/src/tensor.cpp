// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0

#include "tpl/tensor.hpp"

#include <cmath>
#include <numeric>

namespace tpl {

namespace {
std::size_t product(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> v)
    : shape(std::move(s)), values(std::move(v)) {
    if (shape.empty() || product(shape) != values.size()) {
        throw ShapeError(strf("tensor: shape ", tpl::shape_str(shape), " does not match ",
                              values.size(), " values"));
    }
    for (std::size_t e : shape) {
        if (e == 0) throw ShapeError("tensor: zero extent in shape " + tpl::shape_str(shape));
    }
}

std::size_t Tensor::rows() const {
    if (shape.size() == 1) return 1;
    if (shape.size() == 2) return shape[0];
    throw ShapeError("tensor: rank-" + std::to_string(shape.size()) + " tensor has no 2-D view");
}

std::size_t Tensor::cols() const {
    if (shape.size() == 1) return shape[0];
    if (shape.size() == 2) return shape[1];
    throw ShapeError("tensor: rank-" + std::to_string(shape.size()) + " tensor has no 2-D view");
}

bool Tensor::all_finite() const {
    for (double v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const { return tpl::shape_str(shape); }

void Tensor::zero_grad() { grad.reset(); }

void Tensor::accumulate_grad(const std::vector<double>& g) {
    if (g.size() != values.size()) {
        throw ShapeError(strf("grad size ", g.size(), " does not match tensor of ",
                              values.size(), " values"));
    }
    if (!grad) grad.emplace(values.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) (*grad)[i] += g[i];
}

Tensor Tensor::zeros(std::vector<std::size_t> s) {
    std::vector<double> v(product(s), 0.0);
    return Tensor(std::move(s), std::move(v));
}

Tensor Tensor::full(std::vector<std::size_t> s, double value) {
    std::vector<double> v(product(s), value);
    return Tensor(std::move(s), std::move(v));
}

Tensor Tensor::scalar(double v) { return Tensor({1, 1}, {v}); }

Tensor Tensor::row(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({1, n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t r, std::size_t c, std::vector<double> v) {
    return Tensor({r, c}, std::move(v));
}

Tensor Tensor::randn(std::vector<std::size_t> s, Rng& rng, double stddev, double mean) {
    std::vector<double> v(product(s));
    for (double& x : v) x = rng.normal(mean, stddev);
    return Tensor(std::move(s), std::move(v));
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

std::string shape_str(const std::vector<std::size_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace tpl
