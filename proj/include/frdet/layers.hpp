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

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "frdet/ops.hpp"

namespace frdet {

/// Shape-only description of a convolution block: conv, optionally followed
/// by batch norm and leaky ReLU. Blocks without batch norm are linear.
struct ConvSpec {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 1;
    int stride = 1;
    bool batch_norm = true;

    std::int64_t conv_params() const {
        return std::int64_t{kernel} * kernel * in_channels * out_channels + out_channels;
    }
    // Conv weights and bias plus BN scale, shift, running mean, running var.
    std::int64_t total_params() const { return conv_params() + (batch_norm ? 4 * out_channels : 0); }

    bool operator==(const ConvSpec&) const = default;
};

template <typename T>
struct ConvLayer {
    ConvParams<T> conv;
    std::optional<BatchNormParams<T>> bn;
};

template <typename T>
ConvLayer<T> make_conv_layer(const ConvSpec& spec);

template <typename T>
std::vector<ConvLayer<T>> make_conv_layers(std::span<const ConvSpec> specs);

/// conv -> [batch_norm -> leaky_relu]
template <typename T>
Tensor<T> apply_conv_layer(ConvLayer<T>& layer, const Tensor<T>& input, bool training);

}  // namespace frdet
