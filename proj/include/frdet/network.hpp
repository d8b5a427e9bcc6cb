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
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "frdet/fr_module.hpp"

namespace frdet {

struct Anchor {
    double width = 0;   // input pixels
    double height = 0;  // input pixels
    int scale_index = 0;  // 0 = smallest anchors (finest grid) .. 2 = largest

    double area() const { return width * height; }
};

struct StageSpec {
    int channels = 0;
    int fr_count = 0;
};

enum class BlockKind { Fire, Darknet };

inline constexpr int kNumStages = 5;
inline constexpr int kNumHeads = 3;
inline constexpr int kAnchorsPerScale = 3;

/// Parsed architecture description.
struct NetworkConfig {
    int input_size = 416;
    int num_classes = 3;
    bool gaussian_head = true;
    int squeeze_exponent = kDefaultSqueezeExponent;
    int stem_channels = 32;
    // Number of (1x1 reduce, 3x3 expand) pairs in front of each detect conv.
    int neck_depth = 3;
    bool residual = true;
    BlockKind block = BlockKind::Fire;
    std::vector<std::string> class_names;
    std::vector<StageSpec> stages;
    std::vector<Anchor> anchors;

    /// 416 input, 3 KITTI classes, k=4, Gaussian heads, Darknet-53 stage layout.
    static NetworkConfig defaults();

    int box_params() const { return gaussian_head ? 8 : 4; }
    int values_per_anchor() const { return box_params() + 1 + num_classes; }
    int head_channels() const { return kAnchorsPerScale * values_per_anchor(); }
    /// Grid side per head, coarsest first: input/32, input/16, input/8.
    std::array<int, kNumHeads> grid_sizes() const {
        return {input_size / 32, input_size / 16, input_size / 8};
    }
    /// Anchors served by head `head` (head 0 is the coarsest grid and gets the
    /// largest anchors).
    std::vector<Anchor> head_anchors(int head) const;
    /// Squeeze exponent used by the FR modules of stage `stage`. Equals k
    /// unless 2^k exceeds the stage width, in which case the squeeze layer
    /// bottoms out: the exponent drops to that of the largest power of two
    /// dividing the width.
    int stage_squeeze_exponent(int stage) const;

    void validate() const;
};

/// YOLOv3 COCO anchors rescaled from 416 to `input_size`.
std::vector<Anchor> default_anchors(int input_size);

/// Parses the line-oriented block format:
///
///     # comment
///     [net] input=416 classes=3 k=4 gaussian=1
///     stem=32 neck=3 residual=1 block=fire names=Car,Cyclist,Pedestrian
///     [stage] channels=64 fr=1        (exactly five, or none for defaults)
///     [anchors] 10,13 16,30 33,23 ... (exactly nine w,h pairs, or none)
///
/// Keys may share the header line or follow on later lines. Diagnostics carry
/// line numbers.
NetworkConfig parse_config(std::string_view text);
NetworkConfig load_config(const std::filesystem::path& path);
std::string format_config(const NetworkConfig& config);

enum class NodeKind { Conv, FireResidual, DarknetResidual, Upsample, Concat, Detect };

std::string_view to_string(NodeKind kind);

struct LayerNode {
    int id = 0;
    NodeKind kind = NodeKind::Conv;
    std::string name;
    std::vector<int> inputs;
    int in_channels = 0;
    int out_channels = 0;
    int stride = 1;  // cumulative downsampling of this node's output
    std::vector<ConvSpec> convs;
    std::optional<FRModule> fr;
    bool residual = false;
    int head_index = -1;

    bool parameterized() const { return !convs.empty(); }
};

/// Instantiated network: nodes in execution order, ids equal positions.
struct LayerGraph {
    NetworkConfig config;
    std::vector<LayerNode> nodes;
    std::array<int, kNumHeads> heads{};

    /// Checks acyclicity, producer/consumer channel agreement and the
    /// five-stride-2 / two-lateral structure. Throws ConfigError naming the
    /// node on failure.
    void validate() const;
    std::size_t count(NodeKind kind) const;
    std::size_t count_stride2_convs() const;
};

/// Stem conv, five stride-2 stages with FR modules, top-down pyramid with two
/// concat laterals, three detect heads.
LayerGraph build_network(const NetworkConfig& config);

/// Parameters for every parameterized node, indexed by node id.
template <typename T>
struct Weights {
    std::vector<std::vector<ConvLayer<T>>> layers;

    /// Zero conv weights and biases, identity batch norm.
    static Weights allocate(const LayerGraph& graph);

    /// Deep copy; the default copy shares storage with the original.
    Weights clone() const;

    /// Trainable leaves (conv weights/biases, BN scale/shift).
    std::vector<Tensor<T>> parameters();
    /// Conv weights only (the weight-decayed subset).
    std::vector<Tensor<T>> conv_weights();
    /// Number of allocated scalars, optionally including BN tensors.
    std::int64_t enumerate_scalars(bool include_batch_norm) const;
};

template <typename T>
using HeadOutputs = std::array<Tensor<T>, kNumHeads>;

/// Runs the graph on a (N, 3, input, input) batch. When `activations` is
/// given it receives every node's output.
template <typename T>
HeadOutputs<T> forward(const LayerGraph& graph, Weights<T>& weights, const Tensor<T>& images,
                       bool training, std::vector<Tensor<T>>* activations = nullptr);

/// Element-wise copy between precisions.
template <typename To, typename From>
Weights<To> convert_weights(const Weights<From>& weights);

// FRDW binary weights: "FRDW", u32 version, u32 node count, then per
// parameterized node: u32 id, u32 float count, little-endian float32 values
// (per conv: weight, bias, then BN scale, shift, mean, var).
inline constexpr std::uint32_t kWeightsVersion = 1;

void save_weights(std::ostream& out, const LayerGraph& graph, const Weights<float>& weights);
void save_weights(const std::filesystem::path& path, const LayerGraph& graph, const Weights<float>& weights);
Weights<float> load_weights(std::istream& in, const LayerGraph& graph);
Weights<float> load_weights(const std::filesystem::path& path, const LayerGraph& graph);

}  // namespace frdet
