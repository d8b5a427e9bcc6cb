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

#include "frdet/tensor.hpp"

namespace frdet {

inline constexpr double kLeakySlope = 0.1;
inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kBatchNormEpsilon = 1e-5;

/// Convolution parameters. Padding is always "same" ((K-1)/2), so a stride-1
/// conv preserves H,W and a stride-2 conv halves even inputs.
template <typename T>
struct ConvParams {
    Tensor<T> weight;  // (Cout, Cin, K, K)
    Tensor<T> bias;    // (Cout)
    int stride = 1;
    int padding = 0;
    int kernel_size = 1;

    static ConvParams make(int in_channels, int out_channels, int kernel_size, int stride);
    int in_channels() const { return static_cast<int>(weight.dim(1)); }
    int out_channels() const { return static_cast<int>(weight.dim(0)); }
    void validate() const;
};

template <typename T>
struct BatchNormParams {
    Tensor<T> scale;         // gamma
    Tensor<T> shift;         // beta
    Tensor<T> running_mean;  // no grad
    Tensor<T> running_var;   // no grad
    double epsilon = kBatchNormEpsilon;
    double momentum = kBatchNormMomentum;

    /// scale 1, shift 0, mean 0, var 1.
    static BatchNormParams make(int channels);
    int channels() const { return static_cast<int>(scale.numel()); }
};

/// Cross-correlation plus bias over NCHW input.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvParams<T>& params);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& input, double slope = kLeakySlope);

/// Per-channel normalisation. Training mode normalises with batch statistics
/// and folds them into the running estimates: r <- m*r + (1-m)*batch.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, BatchNormParams<T>& params, bool training);

/// Channel concatenation, a's channels first.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> residual_add(const Tensor<T>& a, const Tensor<T>& b);

/// Nearest-neighbour 2x upsampling in H and W.
template <typename T>
Tensor<T> upsample2x(const Tensor<T>& input);

/// Scalar sum of all elements.
template <typename T>
Tensor<T> sum(const Tensor<T>& input);

/// Scalar <input, weights>; weights are treated as constants. Used to probe
/// vector-Jacobian products with arbitrary cotangents.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& input, const Tensor<T>& weights);

}  // namespace frdet
