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

#include "frdet/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace frdet {

double iou(const Box& a, const Box& b) {
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0 || ih <= 0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0 ? inter / uni : 0.0;
}

template <typename T>
GaussianBoxPrediction read_prediction(const Tensor<T>& head, std::size_t n, int anchor, int row, int col,
                                      int num_classes, bool gaussian) {
    const int box_params = gaussian ? 8 : 4;
    const int values = box_params + 1 + num_classes;
    const int channels = static_cast<int>(head.dim(1));
    if (channels != kAnchorsPerScale * values) {
        throw ShapeError("head has " + std::to_string(channels) + " channels, expected " +
                         std::to_string(kAnchorsPerScale * values));
    }
    auto raw = [&](int c) { return static_cast<double>(head.at(n, anchor * values + c, row, col)); };
    GaussianBoxPrediction p;
    p.mu_tx = sigmoid(raw(0));
    p.mu_ty = sigmoid(raw(1));
    p.mu_tw = raw(2);
    p.mu_th = raw(3);
    if (gaussian) {
        p.var_tx = sigmoid(raw(4));
        p.var_ty = sigmoid(raw(5));
        p.var_tw = sigmoid(raw(6));
        p.var_th = sigmoid(raw(7));
    }
    p.objectness = sigmoid(raw(box_params));
    p.class_probs.resize(num_classes);
    for (int c = 0; c < num_classes; ++c) p.class_probs[c] = sigmoid(raw(box_params + 1 + c));
    return p;
}

template <typename T>
std::vector<Detection> decode(const Tensor<T>& head, std::size_t n, std::span<const Anchor> anchors,
                              int num_classes, bool gaussian, int input_size, const DecodeOptions& options) {
    if (head.rank() != 4 || head.dim(2) != head.dim(3)) {
        throw ShapeError("decode: head must be (N, C, S, S), got " + shape_to_string(head.shape()));
    }
    if (anchors.size() != static_cast<std::size_t>(kAnchorsPerScale)) throw ConfigError("decode: 3 anchors required");
    const int grid = static_cast<int>(head.dim(2));
    const double size = input_size;
    std::vector<Detection> out;
    for (int a = 0; a < kAnchorsPerScale; ++a) {
        for (int row = 0; row < grid; ++row) {
            for (int col = 0; col < grid; ++col) {
                const auto p = read_prediction(head, n, a, row, col, num_classes, gaussian);
                const auto best = std::max_element(p.class_probs.begin(), p.class_probs.end());
                Detection d;
                d.class_id = static_cast<int>(best - p.class_probs.begin());
                d.uncertainty = gaussian ? (p.var_tx + p.var_ty + p.var_tw + p.var_th) / 4.0 : 0.0;
                d.score = p.objectness * *best;
                if (gaussian && options.use_uncertainty) d.score *= 1.0 - d.uncertainty;
                if (d.score < options.conf_thresh) continue;
                const double cx = (p.mu_tx + col) / grid * size;
                const double cy = (p.mu_ty + row) / grid * size;
                // Bounded exponent keeps clipped boxes non-degenerate.
                const double bw = anchors[a].width * std::exp(std::clamp(p.mu_tw, -20.0, 20.0));
                const double bh = anchors[a].height * std::exp(std::clamp(p.mu_th, -20.0, 20.0));
                d.box = {std::max(0.0, cx - bw / 2), std::max(0.0, cy - bh / 2), std::min(size, cx + bw / 2),
                         std::min(size, cy + bh / 2)};
                out.push_back(d);
            }
        }
    }
    return out;
}

template <typename T>
std::vector<Detection> decode_all(const HeadOutputs<T>& heads, std::size_t n, const NetworkConfig& config,
                                  const DecodeOptions& options) {
    std::vector<Detection> out;
    for (int h = 0; h < kNumHeads; ++h) {
        const auto anchors = config.head_anchors(h);
        auto dets = decode(heads[h], n, anchors, config.num_classes, config.gaussian_head, config.input_size, options);
        out.insert(out.end(), dets.begin(), dets.end());
    }
    return out;
}

std::vector<Detection> nms(std::vector<Detection> detections, double iou_thresh) {
    std::sort(detections.begin(), detections.end(), [](const Detection& a, const Detection& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.box.x1 != b.box.x1) return a.box.x1 < b.box.x1;
        return a.box.y1 < b.box.y1;
    });
    std::vector<Detection> kept;
    for (const auto& d : detections) {
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
            return k.class_id == d.class_id && iou(k.box, d.box) > iou_thresh;
        });
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

std::string format_detection(const Detection& d, const std::vector<std::string>& class_names) {
    const std::string name = (d.class_id >= 0 && d.class_id < static_cast<int>(class_names.size()))
                                 ? class_names[d.class_id]
                                 : "class" + std::to_string(d.class_id);
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s %.6f %.6f %.6f %.6f %.6f %.6f", name.c_str(), d.score, d.box.x1, d.box.y1,
                  d.box.x2, d.box.y2, d.uncertainty);
    return buf;
}

void write_detections(std::ostream& out, std::span<const Detection> detections,
                      const std::vector<std::string>& class_names) {
    for (const auto& d : detections) out << format_detection(d, class_names) << '\n';
}

std::vector<Detection> read_detections(std::istream& in, const std::vector<std::string>& class_names) {
    std::vector<Detection> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        std::string name;
        Detection d;
        if (!(ls >> name >> d.score >> d.box.x1 >> d.box.y1 >> d.box.x2 >> d.box.y2 >> d.uncertainty)) {
            throw ParseError("detection line needs 'class score x1 y1 x2 y2 u'", line_no);
        }
        std::string extra;
        if (ls >> extra) throw ParseError("trailing field '" + extra + "' on detection line", line_no);
        const auto it = std::find(class_names.begin(), class_names.end(), name);
        if (it == class_names.end()) throw ParseError("unknown class '" + name + "'", line_no);
        d.class_id = static_cast<int>(it - class_names.begin());
        out.push_back(d);
    }
    return out;
}

template GaussianBoxPrediction read_prediction(const Tensor<float>&, std::size_t, int, int, int, int, bool);
template GaussianBoxPrediction read_prediction(const Tensor<double>&, std::size_t, int, int, int, int, bool);
template std::vector<Detection> decode(const Tensor<float>&, std::size_t, std::span<const Anchor>, int, bool, int,
                                       const DecodeOptions&);
template std::vector<Detection> decode(const Tensor<double>&, std::size_t, std::span<const Anchor>, int, bool, int,
                                       const DecodeOptions&);
template std::vector<Detection> decode_all(const HeadOutputs<float>&, std::size_t, const NetworkConfig&,
                                           const DecodeOptions&);
template std::vector<Detection> decode_all(const HeadOutputs<double>&, std::size_t, const NetworkConfig&,
                                           const DecodeOptions&);

}  // namespace frdet
