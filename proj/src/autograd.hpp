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

// Internal helpers for op implementations.

#include <initializer_list>
#include <memory>
#include <utility>

#include "frdet/tensor.hpp"

namespace frdet::detail {

template <typename T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> inputs) {
    if (!GradMode::enabled()) return false;
    for (const auto* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

/// Attaches `fn` as the backward closure of `out`. The closure receives the
/// output node so it can read its gradient; parent grads are reached through
/// the captured tensors.
template <typename T, typename Fn>
void attach_backward(Tensor<T>& out, std::initializer_list<const Tensor<T>*> inputs, Fn&& fn) {
    auto& node = *out.node();
    node.requires_grad = true;
    for (const auto* t : inputs) {
        if (t->requires_grad()) node.parents.push_back(t->node());
    }
    TensorNode<T>* self = out.node().get();
    node.backward_fn = [self, fn = std::forward<Fn>(fn)]() mutable { fn(*self); };
}

// Gradient buffer of a parent, or nullptr when it does not take gradients.
template <typename T>
T* grad_or_null(const Tensor<T>& t) {
    return t.requires_grad() ? t.grad().data() : nullptr;
}

}  // namespace frdet::detail
