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

#include <algorithm>
#include <string>

#include "frdet/network.hpp"

namespace frdet {

std::string_view to_string(NodeKind kind) {
    switch (kind) {
        case NodeKind::Conv: return "conv";
        case NodeKind::FireResidual: return "fr";
        case NodeKind::DarknetResidual: return "res";
        case NodeKind::Upsample: return "upsample";
        case NodeKind::Concat: return "concat";
        case NodeKind::Detect: return "detect";
    }
    return "?";
}

namespace {

class GraphBuilder {
public:
    explicit GraphBuilder(LayerGraph& g) : g_(g) {}

    int conv(std::string name, int input, int out_channels, int kernel, int stride) {
        const auto& src = g_.nodes.at(input);
        LayerNode n = make(NodeKind::Conv, std::move(name), {input});
        n.in_channels = src.out_channels;
        n.out_channels = out_channels;
        n.stride = src.stride * stride;
        n.convs = {ConvSpec{src.out_channels, out_channels, kernel, stride, true}};
        return push(std::move(n));
    }

    int stem(int out_channels) {
        LayerNode n = make(NodeKind::Conv, "stem", {});
        n.in_channels = 3;
        n.out_channels = out_channels;
        n.convs = {ConvSpec{3, out_channels, 3, 1, true}};
        return push(std::move(n));
    }

    int fire(std::string name, int input, int k, bool residual) {
        const auto& src = g_.nodes.at(input);
        LayerNode n = make(NodeKind::FireResidual, std::move(name), {input});
        n.in_channels = n.out_channels = src.out_channels;
        n.stride = src.stride;
        n.fr = build_fr_module(FRConfig::make(src.out_channels, k), residual);
        const auto convs = n.fr->convs();
        n.convs.assign(convs.begin(), convs.end());
        n.residual = residual;
        return push(std::move(n));
    }

    int darknet_block(std::string name, int input, bool residual) {
        const auto& src = g_.nodes.at(input);
        const int c = src.out_channels;
        LayerNode n = make(NodeKind::DarknetResidual, std::move(name), {input});
        n.in_channels = n.out_channels = c;
        n.stride = src.stride;
        n.convs = {ConvSpec{c, c / 2, 1, 1, true}, ConvSpec{c / 2, c, 3, 1, true}};
        n.residual = residual;
        return push(std::move(n));
    }

    int upsample(std::string name, int input) {
        const auto& src = g_.nodes.at(input);
        LayerNode n = make(NodeKind::Upsample, std::move(name), {input});
        n.in_channels = n.out_channels = src.out_channels;
        n.stride = src.stride / 2;
        return push(std::move(n));
    }

    int concat(std::string name, int a, int b) {
        const auto& na = g_.nodes.at(a);
        const auto& nb = g_.nodes.at(b);
        LayerNode n = make(NodeKind::Concat, std::move(name), {a, b});
        n.in_channels = n.out_channels = na.out_channels + nb.out_channels;
        n.stride = na.stride;
        return push(std::move(n));
    }

    int detect(std::string name, int input, int out_channels, int head) {
        const auto& src = g_.nodes.at(input);
        LayerNode n = make(NodeKind::Detect, std::move(name), {input});
        n.in_channels = src.out_channels;
        n.out_channels = out_channels;
        n.stride = src.stride;
        n.convs = {ConvSpec{src.out_channels, out_channels, 1, 1, false}};
        n.head_index = head;
        return push(std::move(n));
    }

private:
    LayerNode make(NodeKind kind, std::string name, std::vector<int> inputs) {
        LayerNode n;
        n.id = static_cast<int>(g_.nodes.size());
        n.kind = kind;
        n.name = std::move(name);
        n.inputs = std::move(inputs);
        return n;
    }

    int push(LayerNode n) {
        g_.nodes.push_back(std::move(n));
        return g_.nodes.back().id;
    }

    LayerGraph& g_;
};

}  // namespace

LayerGraph build_network(const NetworkConfig& config) {
    config.validate();
    LayerGraph g;
    g.config = config;
    GraphBuilder b(g);

    int x = b.stem(config.stem_channels);
    std::array<int, kNumStages> stage_out{};
    for (int s = 0; s < kNumStages; ++s) {
        const auto& st = config.stages[s];
        const std::string prefix = "stage" + std::to_string(s);
        x = b.conv(prefix + ".down", x, st.channels, 3, 2);
        for (int i = 0; i < st.fr_count; ++i) {
            const std::string name = prefix + "." + (config.block == BlockKind::Fire ? "fr" : "res") + std::to_string(i);
            x = config.block == BlockKind::Fire ? b.fire(name, x, config.stage_squeeze_exponent(s), config.residual)
                                                : b.darknet_block(name, x, config.residual);
        }
        stage_out[s] = x;
    }

    // Top-down pyramid: head 0 on the deepest stage, then two laterals
    // (route conv, upsample, concat with the next shallower stage).
    int feed = stage_out[kNumStages - 1];
    for (int head = 0; head < kNumHeads; ++head) {
        const int width = config.stages[kNumStages - 1 - head].channels;
        const std::string prefix = "head" + std::to_string(head);
        int route = -1;
        int y = feed;
        for (int d = 0; d < config.neck_depth; ++d) {
            route = y = b.conv(prefix + ".reduce" + std::to_string(d), y, width / 2, 1, 1);
            y = b.conv(prefix + ".expand" + std::to_string(d), y, width, 3, 1);
        }
        g.heads[head] = b.detect(prefix + ".detect", y, config.head_channels(), head);
        if (head + 1 < kNumHeads) {
            const int lateral = b.conv("lateral" + std::to_string(head) + ".route", route, width / 4, 1, 1);
            const int up = b.upsample("lateral" + std::to_string(head) + ".upsample", lateral);
            feed = b.concat("lateral" + std::to_string(head) + ".concat", up, stage_out[kNumStages - 2 - head]);
        }
    }
    g.validate();
    return g;
}

std::size_t LayerGraph::count(NodeKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [kind](const LayerNode& n) { return n.kind == kind; }));
}

std::size_t LayerGraph::count_stride2_convs() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const LayerNode& n) {
        return n.kind == NodeKind::Conv && n.convs.size() == 1 && n.convs[0].stride == 2;
    }));
}

void LayerGraph::validate() const {
    auto fail = [](const LayerNode& n, const std::string& why) {
        throw ConfigError("node " + std::to_string(n.id) + " '" + n.name + "': " + why);
    };
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& n = nodes[i];
        if (n.id != static_cast<int>(i)) fail(n, "id does not match position");
        for (int in : n.inputs) {
            // Producers strictly precede consumers, so the graph is acyclic.
            if (in < 0 || in >= n.id) fail(n, "input " + std::to_string(in) + " is not an earlier node");
        }
        int expected_in = 3;
        if (n.kind == NodeKind::Concat) {
            if (n.inputs.size() != 2) fail(n, "concat needs two inputs");
            const auto& a = nodes[n.inputs[0]];
            const auto& b = nodes[n.inputs[1]];
            if (a.stride != b.stride) fail(n, "concat inputs have different resolutions");
            expected_in = a.out_channels + b.out_channels;
        } else if (!n.inputs.empty()) {
            if (n.inputs.size() != 1) fail(n, "expected one input");
            expected_in = nodes[n.inputs[0]].out_channels;
        }
        if (n.in_channels != expected_in) {
            fail(n, "expects " + std::to_string(n.in_channels) + " input channels, producer gives " +
                        std::to_string(expected_in));
        }
        if (!n.convs.empty()) {
            if (n.convs.front().in_channels != n.in_channels) fail(n, "first conv input channels mismatch");
            for (std::size_t c = 1; c < n.convs.size(); ++c) {
                // FR expand branches both read the squeeze output.
                const int src = (n.kind == NodeKind::FireResidual) ? n.convs[0].out_channels
                                                                   : n.convs[c - 1].out_channels;
                if (n.convs[c].in_channels != src) fail(n, "inner conv channel mismatch");
            }
        }
        if (n.kind == NodeKind::FireResidual || n.kind == NodeKind::DarknetResidual) {
            const int produced = n.kind == NodeKind::FireResidual
                                     ? n.convs[1].out_channels + n.convs[2].out_channels
                                     : n.convs[1].out_channels;
            if (produced != n.in_channels) fail(n, "block output channels differ from input");
        }
    }
    if (count(NodeKind::Detect) != kNumHeads) throw ConfigError("graph must contain exactly 3 detect nodes");
    if (count_stride2_convs() != kNumStages) throw ConfigError("graph must contain exactly 5 stride-2 convs");
    if (count(NodeKind::Upsample) != 2 || count(NodeKind::Concat) != 2) {
        throw ConfigError("graph must contain exactly 2 upsample and 2 concat nodes");
    }
    for (const auto& n : nodes) {
        if (n.kind != NodeKind::Concat) continue;
        if (nodes[n.inputs[0]].kind != NodeKind::Upsample) fail(n, "lateral concat must be fed by an upsample");
    }
}

template <typename T>
Weights<T> Weights<T>::allocate(const LayerGraph& graph) {
    Weights w;
    w.layers.resize(graph.nodes.size());
    for (const auto& n : graph.nodes) w.layers[n.id] = make_conv_layers<T>(n.convs);
    return w;
}

template <typename T>
Weights<T> Weights<T>::clone() const {
    Weights w;
    w.layers.resize(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        for (const auto& l : layers[i]) {
            ConvLayer<T> c = l;
            c.conv.weight = l.conv.weight.clone();
            c.conv.bias = l.conv.bias.clone();
            if (l.bn) {
                c.bn->scale = l.bn->scale.clone();
                c.bn->shift = l.bn->shift.clone();
                c.bn->running_mean = l.bn->running_mean.clone();
                c.bn->running_var = l.bn->running_var.clone();
            }
            w.layers[i].push_back(std::move(c));
        }
    }
    return w;
}

template <typename T>
std::vector<Tensor<T>> Weights<T>::parameters() {
    std::vector<Tensor<T>> out;
    for (auto& node : layers) {
        for (auto& l : node) {
            out.push_back(l.conv.weight);
            out.push_back(l.conv.bias);
            if (l.bn) {
                out.push_back(l.bn->scale);
                out.push_back(l.bn->shift);
            }
        }
    }
    return out;
}

template <typename T>
std::vector<Tensor<T>> Weights<T>::conv_weights() {
    std::vector<Tensor<T>> out;
    for (auto& node : layers) {
        for (auto& l : node) out.push_back(l.conv.weight);
    }
    return out;
}

template <typename T>
std::int64_t Weights<T>::enumerate_scalars(bool include_batch_norm) const {
    std::int64_t total = 0;
    for (const auto& node : layers) {
        for (const auto& l : node) {
            total += static_cast<std::int64_t>(l.conv.weight.numel() + l.conv.bias.numel());
            if (include_batch_norm && l.bn) {
                total += static_cast<std::int64_t>(l.bn->scale.numel() + l.bn->shift.numel() +
                                                   l.bn->running_mean.numel() + l.bn->running_var.numel());
            }
        }
    }
    return total;
}

template <typename T>
HeadOutputs<T> forward(const LayerGraph& graph, Weights<T>& weights, const Tensor<T>& images, bool training,
                       std::vector<Tensor<T>>* activations) {
    const auto size = static_cast<std::size_t>(graph.config.input_size);
    if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != size || images.dim(3) != size) {
        throw ShapeError("forward: expected (N,3," + std::to_string(size) + "," + std::to_string(size) +
                         ") input, got " + shape_to_string(images.shape()));
    }
    if (weights.layers.size() != graph.nodes.size()) {
        throw ShapeError("forward: weights cover " + std::to_string(weights.layers.size()) + " nodes, graph has " +
                         std::to_string(graph.nodes.size()));
    }
    std::vector<Tensor<T>> out(graph.nodes.size());
    for (const auto& n : graph.nodes) {
        auto& layers = weights.layers[n.id];
        if (layers.size() != n.convs.size()) {
            throw ShapeError("forward: node '" + n.name + "' has " + std::to_string(layers.size()) +
                             " parameter sets, expected " + std::to_string(n.convs.size()));
        }
        const Tensor<T>& in = n.inputs.empty() ? images : out[n.inputs[0]];
        switch (n.kind) {
            case NodeKind::Conv:
            case NodeKind::Detect:
                out[n.id] = apply_conv_layer(layers[0], in, training);
                break;
            case NodeKind::FireResidual:
                out[n.id] = fr_forward<T>(*n.fr, layers, in, training);
                break;
            case NodeKind::DarknetResidual: {
                Tensor<T> y = apply_conv_layer(layers[1], apply_conv_layer(layers[0], in, training), training);
                out[n.id] = n.residual ? residual_add(in, y) : y;
                break;
            }
            case NodeKind::Upsample:
                out[n.id] = upsample2x(in);
                break;
            case NodeKind::Concat:
                out[n.id] = concat_channels(out[n.inputs[0]], out[n.inputs[1]]);
                break;
        }
        require_finite(out[n.id], "output of node '" + n.name + "'");
    }
    HeadOutputs<T> heads;
    for (int h = 0; h < kNumHeads; ++h) heads[h] = out[graph.heads[h]];
    if (activations) *activations = std::move(out);
    return heads;
}

template <typename To, typename From>
Weights<To> convert_weights(const Weights<From>& weights) {
    auto copy = [](const Tensor<From>& t) {
        Tensor<To> r(t.shape());
        for (std::size_t i = 0; i < t.numel(); ++i) r[i] = static_cast<To>(t[i]);
        r.set_requires_grad(t.requires_grad());
        return r;
    };
    Weights<To> out;
    out.layers.resize(weights.layers.size());
    for (std::size_t n = 0; n < weights.layers.size(); ++n) {
        for (const auto& l : weights.layers[n]) {
            ConvLayer<To> c;
            c.conv.weight = copy(l.conv.weight);
            c.conv.bias = copy(l.conv.bias);
            c.conv.stride = l.conv.stride;
            c.conv.padding = l.conv.padding;
            c.conv.kernel_size = l.conv.kernel_size;
            if (l.bn) {
                BatchNormParams<To> bn;
                bn.scale = copy(l.bn->scale);
                bn.shift = copy(l.bn->shift);
                bn.running_mean = copy(l.bn->running_mean);
                bn.running_var = copy(l.bn->running_var);
                bn.epsilon = l.bn->epsilon;
                bn.momentum = l.bn->momentum;
                c.bn = std::move(bn);
            }
            out.layers[n].push_back(std::move(c));
        }
    }
    return out;
}

template struct Weights<float>;
template struct Weights<double>;
template HeadOutputs<float> forward(const LayerGraph&, Weights<float>&, const Tensor<float>&, bool,
                                    std::vector<Tensor<float>>*);
template HeadOutputs<double> forward(const LayerGraph&, Weights<double>&, const Tensor<double>&, bool,
                                     std::vector<Tensor<double>>*);
template Weights<double> convert_weights<double, float>(const Weights<float>&);
template Weights<float> convert_weights<float, double>(const Weights<double>&);

}  // namespace frdet
