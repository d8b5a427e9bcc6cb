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

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "frdet/network.hpp"

namespace frdet {

namespace {

constexpr std::array<char, 4> kMagic{'F', 'R', 'D', 'W'};

void put_u32(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
    std::array<unsigned char, 4> b{};
    if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw ParseError(std::string("weights: truncated ") + what);
    return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
}

void put_floats(std::ostream& out, const Tensor<float>& t) {
    for (float f : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

void get_floats(std::istream& in, Tensor<float>& t) {
    for (auto& f : t.values()) f = std::bit_cast<float>(get_u32(in, "float data"));
}

template <typename Layers, typename Fn>
void for_each_tensor(Layers& layers, Fn&& fn) {
    for (auto& l : layers) {
        fn(l.conv.weight);
        fn(l.conv.bias);
        if (l.bn) {
            fn(l.bn->scale);
            fn(l.bn->shift);
            fn(l.bn->running_mean);
            fn(l.bn->running_var);
        }
    }
}

std::uint32_t blob_length(const std::vector<ConvLayer<float>>& layers) {
    std::size_t n = 0;
    for_each_tensor(layers, [&](const Tensor<float>& t) { n += t.numel(); });
    return static_cast<std::uint32_t>(n);
}

}  // namespace

void save_weights(std::ostream& out, const LayerGraph& graph, const Weights<float>& weights) {
    if (weights.layers.size() != graph.nodes.size()) throw ShapeError("save_weights: weights do not match graph");
    std::uint32_t count = 0;
    for (const auto& n : graph.nodes) count += n.parameterized() ? 1 : 0;
    out.write(kMagic.data(), kMagic.size());
    put_u32(out, kWeightsVersion);
    put_u32(out, count);
    for (const auto& n : graph.nodes) {
        if (!n.parameterized()) continue;
        const auto& layers = weights.layers[n.id];
        put_u32(out, static_cast<std::uint32_t>(n.id));
        put_u32(out, blob_length(layers));
        for_each_tensor(layers, [&](const Tensor<float>& t) { put_floats(out, t); });
    }
    if (!out) throw IoError("save_weights: write failed");
}

void save_weights(const std::filesystem::path& path, const LayerGraph& graph, const Weights<float>& weights) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write weights file " + path.string());
    save_weights(out, graph, weights);
}

Weights<float> load_weights(std::istream& in, const LayerGraph& graph) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw ParseError("weights: bad magic, expected FRDW");
    const auto version = get_u32(in, "version");
    if (version != kWeightsVersion) throw ParseError("weights: unsupported version " + std::to_string(version));
    const auto count = get_u32(in, "node count");

    Weights<float> w = Weights<float>::allocate(graph);
    std::uint32_t expected = 0;
    for (const auto& n : graph.nodes) expected += n.parameterized() ? 1 : 0;
    if (count != expected) {
        throw ShapeError("weights: file has " + std::to_string(count) + " parameterized nodes, graph has " +
                         std::to_string(expected));
    }
    for (const auto& n : graph.nodes) {
        if (!n.parameterized()) continue;
        const auto id = get_u32(in, "node id");
        if (id != static_cast<std::uint32_t>(n.id)) {
            throw ShapeError("weights: expected node " + std::to_string(n.id) + " ('" + n.name + "'), file has " +
                             std::to_string(id));
        }
        const auto length = get_u32(in, "blob length");
        auto& layers = w.layers[n.id];
        if (length != blob_length(layers)) {
            throw ShapeError("weights: node '" + n.name + "' blob has " + std::to_string(length) +
                             " floats, graph needs " + std::to_string(blob_length(layers)));
        }
        for_each_tensor(layers, [&](Tensor<float>& t) { get_floats(in, t); });
    }
    if (in.peek() != std::char_traits<char>::eof()) throw ParseError("weights: trailing bytes after last node");
    return w;
}

Weights<float> load_weights(const std::filesystem::path& path, const LayerGraph& graph) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open weights file " + path.string());
    return load_weights(in, graph);
}

}  // namespace frdet
