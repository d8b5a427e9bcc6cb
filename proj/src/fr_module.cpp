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

#include "frdet/fr_module.hpp"

#include <string>

namespace frdet {

FRConfig FRConfig::make(int input_channels, int squeeze_exponent) {
    if (input_channels <= 0) {
        throw ConfigError("FR module: input channels must be positive, got C=" +
                          std::to_string(input_channels));
    }
    if (squeeze_exponent < 1 || squeeze_exponent > 30) {
        throw ConfigError("FR module: squeeze exponent k must be in [1,30], got k=" +
                          std::to_string(squeeze_exponent));
    }
    const int ratio = 1 << squeeze_exponent;
    if (input_channels % ratio != 0) {
        throw ConfigError("FR module: C=" + std::to_string(input_channels) +
                          " is not divisible by 2^k=" + std::to_string(ratio) +
                          " (k=" + std::to_string(squeeze_exponent) + ")");
    }
    FRConfig c;
    c.input_channels = input_channels;
    c.squeeze_exponent = squeeze_exponent;
    c.squeeze = input_channels / ratio;
    c.expand1x1 = input_channels / 2;
    c.expand3x3 = input_channels / 2;
    return c;
}

void FRConfig::validate() const {
    const FRConfig derived = make(input_channels, squeeze_exponent);
    if (squeeze != derived.squeeze) {
        throw ConfigError("FR module: squeeze width " + std::to_string(squeeze) + " != C/2^k = " +
                          std::to_string(derived.squeeze));
    }
    if (expand1x1 + expand3x3 != input_channels) {
        throw ConfigError("FR module: e1x1 + e3x3 = " + std::to_string(expand1x1 + expand3x3) +
                          " must equal C = " + std::to_string(input_channels));
    }
    if (expand1x1 != expand3x3) {
        throw ConfigError("FR module: e1x1 (" + std::to_string(expand1x1) + ") and e3x3 (" +
                          std::to_string(expand3x3) + ") must be equal");
    }
}

std::int64_t conv_param_count(std::int64_t in_channels, std::int64_t kernels, int kernel_size) {
    return std::int64_t{kernel_size} * kernel_size * in_channels * kernels + kernels;
}

std::int64_t fr_param_count(const FRConfig& config) {
    config.validate();
    return conv_param_count(config.input_channels, config.squeeze, 1) +
           conv_param_count(config.squeeze, config.expand1x1, 1) +
           conv_param_count(config.squeeze, config.expand3x3, 3);
}

std::int64_t darknet_block_param_count(std::int64_t channels) {
    return conv_param_count(channels, channels / 2, 1) + conv_param_count(channels / 2, channels, 3);
}

FRModule build_fr_module(const FRConfig& config, bool residual) {
    config.validate();
    FRModule m;
    m.config = config;
    m.residual = residual;
    m.squeeze = ConvSpec{config.input_channels, config.squeeze, 1, 1, true};
    m.expand1x1 = ConvSpec{config.squeeze, config.expand1x1, 1, 1, true};
    m.expand3x3 = ConvSpec{config.squeeze, config.expand3x3, 3, 1, true};
    return m;
}

template <typename T>
Tensor<T> fr_forward(const FRModule& module, std::span<ConvLayer<T>> layers, const Tensor<T>& input,
                     bool training) {
    if (layers.size() != 3) {
        throw ShapeError("FR module expects 3 conv layers, got " + std::to_string(layers.size()));
    }
    Tensor<T> squeezed = apply_conv_layer(layers[0], input, training);
    Tensor<T> expanded = concat_channels(apply_conv_layer(layers[1], squeezed, training),
                                         apply_conv_layer(layers[2], squeezed, training));
    return module.residual ? residual_add(input, expanded) : expanded;
}

template Tensor<float> fr_forward(const FRModule&, std::span<ConvLayer<float>>, const Tensor<float>&, bool);
template Tensor<double> fr_forward(const FRModule&, std::span<ConvLayer<double>>, const Tensor<double>&,
                                   bool);

}  // namespace frdet
