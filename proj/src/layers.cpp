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

#include "frdet/layers.hpp"

namespace frdet {

template <typename T>
ConvLayer<T> make_conv_layer(const ConvSpec& spec) {
    ConvLayer<T> layer{ConvParams<T>::make(spec.in_channels, spec.out_channels, spec.kernel, spec.stride),
                       std::nullopt};
    if (spec.batch_norm) layer.bn = BatchNormParams<T>::make(spec.out_channels);
    return layer;
}

template <typename T>
std::vector<ConvLayer<T>> make_conv_layers(std::span<const ConvSpec> specs) {
    std::vector<ConvLayer<T>> layers;
    layers.reserve(specs.size());
    for (const auto& spec : specs) layers.push_back(make_conv_layer<T>(spec));
    return layers;
}

template <typename T>
Tensor<T> apply_conv_layer(ConvLayer<T>& layer, const Tensor<T>& input, bool training) {
    Tensor<T> y = conv2d(input, layer.conv);
    if (!layer.bn) return y;
    return leaky_relu(batch_norm(y, *layer.bn, training));
}

template ConvLayer<float> make_conv_layer<float>(const ConvSpec&);
template ConvLayer<double> make_conv_layer<double>(const ConvSpec&);
template std::vector<ConvLayer<float>> make_conv_layers<float>(std::span<const ConvSpec>);
template std::vector<ConvLayer<double>> make_conv_layers<double>(std::span<const ConvSpec>);
template Tensor<float> apply_conv_layer(ConvLayer<float>&, const Tensor<float>&, bool);
template Tensor<double> apply_conv_layer(ConvLayer<double>&, const Tensor<double>&, bool);

}  // namespace frdet
