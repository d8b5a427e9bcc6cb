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

#include "frdet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace frdet {

std::string shape_to_string(const Shape& shape) {
    std::string out = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + ")";
}

namespace {

template <typename T>
std::vector<detail::TensorNode<T>*> topo_order(detail::TensorNode<T>* root) {
    // Iterative post-order DFS; graphs here are a few hundred nodes deep.
    std::vector<detail::TensorNode<T>*> order;
    std::unordered_set<detail::TensorNode<T>*> seen;
    std::vector<std::pair<detail::TensorNode<T>*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            auto* parent = node->parents[next++].get();
            if (seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    std::reverse(order.begin(), order.end());
    return order;
}

}  // namespace

template <typename T>
void Tensor<T>::backward() {
    if (numel() != 1) {
        throw ShapeError("backward() without a seed needs a scalar, got shape " +
                         shape_to_string(shape()));
    }
    const T one(1);
    backward(std::span<const T>(&one, 1));
}

template <typename T>
void Tensor<T>::backward(std::span<const T> seed) {
    if (seed.size() != numel()) {
        throw ShapeError("backward seed has " + std::to_string(seed.size()) +
                         " elements, tensor has " + std::to_string(numel()));
    }
    auto& root = *node_;
    root.ensure_grad();
    for (std::size_t i = 0; i < seed.size(); ++i) root.grad[i] += seed[i];

    auto order = topo_order(node_.get());
    for (auto* node : order) {
        if (node->backward_fn) node->backward_fn();
    }
    // Release the recorded graph; only leaves keep their gradients. Closures
    // and parent links own other nodes in `order`, so they are destroyed only
    // after the sweep.
    std::vector<std::function<void()>> closures;
    std::vector<std::vector<std::shared_ptr<detail::TensorNode<T>>>> links;
    for (auto* node : order) {
        if (node->backward_fn) {
            closures.push_back(std::move(node->backward_fn));
            node->backward_fn = nullptr;
            links.push_back(std::move(node->parents));
            node->parents.clear();
            if (node != node_.get()) std::vector<T>().swap(node->grad);
        }
    }
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
    return std::all_of(t.values().begin(), t.values().end(),
                       [](T v) { return std::isfinite(v); });
}

template <typename T>
void require_finite(const Tensor<T>& t, const std::string& what) {
    if (!all_finite(t)) throw NumericError("non-finite value in " + what);
}

template class Tensor<float>;
template class Tensor<double>;
template bool all_finite(const Tensor<float>&);
template bool all_finite(const Tensor<double>&);
template void require_finite(const Tensor<float>&, const std::string&);
template void require_finite(const Tensor<double>&, const std::string&);

}  // namespace frdet
