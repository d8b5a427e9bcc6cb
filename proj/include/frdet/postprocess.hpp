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

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "frdet/loss.hpp"
#include "frdet/network.hpp"

namespace frdet {

inline constexpr double kDefaultConfThreshold = 0.25;
inline constexpr double kDefaultNmsThreshold = 0.45;

/// Corner-form box in input-image pixels.
struct Box {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
};

struct Detection {
    int class_id = 0;
    double score = 0;
    Box box;
    double uncertainty = 0;  // mean of the four coordinate variances, 0 for plain heads
};

/// Intersection over union, 0 when the union is empty.
double iou(const Box& a, const Box& b);

struct DecodeOptions {
    double conf_thresh = kDefaultConfThreshold;
    // Multiply scores by (1 - uncertainty). Ignored for plain heads.
    bool use_uncertainty = true;
};

/// Activated values of one anchor slot of image `n` in a head tensor.
template <typename T>
GaussianBoxPrediction read_prediction(const Tensor<T>& head, std::size_t n, int anchor, int row, int col,
                                      int num_classes, bool gaussian);

/// Turns one head of image `n` into scored pixel-space boxes, clipped to the
/// image. `anchors` are the three anchors served by this head.
template <typename T>
std::vector<Detection> decode(const Tensor<T>& head, std::size_t n, std::span<const Anchor> anchors,
                              int num_classes, bool gaussian, int input_size, const DecodeOptions& options = {});

/// Decodes all three heads of image `n`.
template <typename T>
std::vector<Detection> decode_all(const HeadOutputs<T>& heads, std::size_t n, const NetworkConfig& config,
                                  const DecodeOptions& options = {});

/// Greedy per-class suppression; survivors sorted by score descending with
/// ties broken by smaller x1, then smaller y1.
std::vector<Detection> nms(std::vector<Detection> detections, double iou_thresh = kDefaultNmsThreshold);

/// One detection per line: `class_name score x1 y1 x2 y2 u`, six decimals.
void write_detections(std::ostream& out, std::span<const Detection> detections,
                      const std::vector<std::string>& class_names);
std::string format_detection(const Detection& d, const std::vector<std::string>& class_names);
/// Inverse of write_detections; unknown class names raise ParseError.
std::vector<Detection> read_detections(std::istream& in, const std::vector<std::string>& class_names);

}  // namespace frdet
