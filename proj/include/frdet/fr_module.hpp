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

#include <array>
#include <cstdint>
#include <span>

#include "frdet/layers.hpp"

namespace frdet {

inline constexpr int kDefaultSqueezeExponent = 4;

/// Fire-Residual module hyperparameters.
///
/// Squeeze width is C / 2^k and the two expand branches split C evenly, so
/// the concatenated expand output has exactly C channels and can be added
/// back onto the input.
struct FRConfig {
    int input_channels = 0;
    int squeeze_exponent = kDefaultSqueezeExponent;
    int squeeze = 0;
    int expand1x1 = 0;
    int expand3x3 = 0;

    /// Derives squeeze/expand widths from C and k. Throws ConfigError when
    /// 2^k does not divide C or C is odd.
    static FRConfig make(int input_channels, int squeeze_exponent = kDefaultSqueezeExponent);

    /// Checks the three design rules on an explicitly filled config.
    void validate() const;
};

/// Weights plus biases of a KxK convolution from C to N channels.
std::int64_t conv_param_count(std::int64_t in_channels, std::int64_t kernels, int kernel_size);

/// Conv weights and biases of one FR module (batch norm excluded).
std::int64_t fr_param_count(const FRConfig& config);

/// Conv weights and biases of the darknet residual block it replaces:
/// 1x1 C -> C/2 followed by 3x3 C/2 -> C.
std::int64_t darknet_block_param_count(std::int64_t channels);

struct FRModule {
    FRConfig config;
    bool residual = true;
    ConvSpec squeeze;
    ConvSpec expand1x1;
    ConvSpec expand3x3;

    std::array<ConvSpec, 3> convs() const { return {squeeze, expand1x1, expand3x3}; }
};

/// Squeeze 1x1 (C -> s), parallel expand 1x1 (s -> e1) and 3x3 (s -> e3),
/// channel concat, then the identity skip. Every conv is followed by batch
/// norm and leaky ReLU; nothing is applied after the addition.
FRModule build_fr_module(const FRConfig& config, bool residual = true);

/// Runs one module. `layers` holds the squeeze, expand1x1 and expand3x3
/// parameters in that order.
template <typename T>
Tensor<T> fr_forward(const FRModule& module, std::span<ConvLayer<T>> layers, const Tensor<T>& input,
                     bool training);

}  // namespace frdet
