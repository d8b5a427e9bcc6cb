// Copyright 2026 The FRDet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "frdet/error.hpp"

namespace frdet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape);

// Thread-local switch that disables graph recording (inference, finite
// differences). Ops still compute values, they just do not attach backward
// closures.
class GradMode {
public:
    static bool enabled() noexcept { return enabled_flag(); }
    static void set_enabled(bool on) noexcept { enabled_flag() = on; }

private:
    static bool& enabled_flag() noexcept {
        thread_local bool flag = true;
        return flag;
    }
};

class NoGradGuard {
public:
    NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
    ~NoGradGuard() { GradMode::set_enabled(previous_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

namespace detail {

template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until something writes a gradient
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void()> backward_fn;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
};

}  // namespace detail

/// Dense row-major tensor with an optional gradient buffer.
///
/// Tensor is a handle: copies share the same storage and graph node. Use
/// clone() for a deep copy. Activations are NCHW, conv kernels are
/// (Cout, Cin, Kh, Kw).
template <typename T>
class Tensor {
public:
    using value_type = T;
    using Node = detail::TensorNode<T>;

    Tensor() : node_(std::make_shared<Node>()) {}

    explicit Tensor(Shape shape, T fill = T(0)) : node_(std::make_shared<Node>()) {
        node_->data.assign(shape_numel(shape), fill);
        node_->shape = std::move(shape);
    }

    Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<Node>()) {
        if (values.size() != shape_numel(shape)) {
            throw ShapeError("tensor of shape " + shape_to_string(shape) + " needs " +
                             std::to_string(shape_numel(shape)) + " values, got " +
                             std::to_string(values.size()));
        }
        node_->shape = std::move(shape);
        node_->data = std::move(values);
    }

    const Shape& shape() const noexcept { return node_->shape; }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t rank() const noexcept { return node_->shape.size(); }
    std::size_t numel() const noexcept { return node_->data.size(); }

    std::span<T> values() noexcept { return node_->data; }
    std::span<const T> values() const noexcept { return node_->data; }
    T* data() noexcept { return node_->data.data(); }
    const T* data() const noexcept { return node_->data.data(); }

    // Gradient accessors allocate a zero buffer on first use. Like the handle
    // itself, they are shallow-const.
    std::span<T> grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    bool has_grad() const noexcept { return node_->grad.size() == node_->data.size() && numel() > 0; }
    void zero_grad() const { node_->grad.assign(node_->data.size(), T(0)); }

    T& operator[](std::size_t i) { return node_->data[i]; }
    const T& operator[](std::size_t i) const { return node_->data[i]; }

    // NCHW element access.
    T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return node_->data[offset(n, c, h, w)];
    }
    const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return node_->data[offset(n, c, h, w)];
    }

    bool requires_grad() const noexcept { return node_->requires_grad; }
    Tensor& set_requires_grad(bool on = true) {
        node_->requires_grad = on;
        return *this;
    }

    Tensor clone() const {
        Tensor copy(node_->shape, node_->data);
        copy.node_->requires_grad = node_->requires_grad;
        return copy;
    }

    // Copy of the values without graph history.
    Tensor detach() const { return Tensor(node_->shape, node_->data); }

    bool same_storage(const Tensor& other) const noexcept { return node_ == other.node_; }

    /// Reverse-mode sweep from this tensor. A scalar is seeded with 1;
    /// otherwise pass a seed of matching size. The recorded graph is released
    /// afterwards, leaf gradients are kept.
    void backward();
    void backward(std::span<const T> seed);

    // Used by op implementations to attach history.
    const std::shared_ptr<Node>& node() const noexcept { return node_; }

    static Tensor from_node(std::shared_ptr<Node> node) {
        Tensor t;
        t.node_ = std::move(node);
        return t;
    }

private:
    std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        const auto& s = node_->shape;
        return ((n * s[1] + c) * s[2] + h) * s[3] + w;
    }

    std::shared_ptr<Node> node_;
};

/// Returns true when every element is finite.
template <typename T>
bool all_finite(const Tensor<T>& t);

/// Throws NumericError naming `what` if t holds NaN/Inf.
template <typename T>
void require_finite(const Tensor<T>& t, const std::string& what);

}  // namespace frdet
