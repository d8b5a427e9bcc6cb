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
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "frdet/loss.hpp"
#include "frdet/postprocess.hpp"

namespace frdet {

inline constexpr std::string_view kDontCare = "DontCare";

/// One object line of a KITTI label file (15 whitespace-separated fields).
struct KittiLabel {
    std::string class_name;
    double truncated = 0;  // [0, 1]
    int occluded = 0;      // 0 fully visible .. 3 unknown; -1 on DontCare lines
    double alpha = -10;
    double left = 0, top = 0, right = 0, bottom = 0;  // pixels
    std::array<double, 3> dimensions{-1, -1, -1};      // h, w, l (unused)
    std::array<double, 3> location{-1000, -1000, -1000};
    double rotation_y = -10;

    bool dont_care() const { return class_name == kDontCare; }
    double height() const { return bottom - top; }
    Box box() const { return {left, top, right, bottom}; }
};

std::vector<KittiLabel> parse_kitti_labels(std::string_view text);
std::vector<KittiLabel> parse_kitti_labels(std::istream& in);
std::vector<KittiLabel> load_kitti_labels(const std::filesystem::path& path);
/// Fields in file order; reals printed with two decimals, as in the KITTI release.
std::string format_kitti_label(const KittiLabel& label);
void write_kitti_labels(std::ostream& out, std::span<const KittiLabel> labels);

/// KITTI eligibility tier. A ground truth is counted when it is at least
/// `min_height` pixels tall and no more occluded or truncated than allowed.
struct DifficultyBucket {
    std::string name;
    double min_height = 0;
    int max_occlusion = 0;
    double max_truncation = 0;

    bool admits(const KittiLabel& label) const {
        return label.height() >= min_height && label.occluded <= max_occlusion &&
               label.truncated <= max_truncation;
    }
};

DifficultyBucket easy_bucket();
DifficultyBucket moderate_bucket();
DifficultyBucket hard_bucket();
/// Easy, moderate, hard.
std::vector<DifficultyBucket> standard_buckets();

/// Seeded shuffle, then the first round(ratio * N) ids train and the rest
/// validate. Both halves keep shuffled order.
std::pair<std::vector<std::string>, std::vector<std::string>> split_dataset(std::vector<std::string> ids,
                                                                            double ratio, std::uint64_t seed);

/// 8-bit interleaved RGB image.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    Image() = default;
    Image(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}

    std::uint8_t* pixel(int x, int y) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const std::uint8_t* pixel(int x, int y) const {
        return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
};

/// Binary PPM (P6, maxval 255). Comments in the header are accepted.
Image read_ppm(std::istream& in);
Image read_ppm(const std::filesystem::path& path);
void write_ppm(std::ostream& out, const Image& image);
void write_ppm(const std::filesystem::path& path, const Image& image);

/// Nearest-neighbour resample.
Image resize_nearest(const Image& image, int width, int height);

/// Packs images into a (N, 3, size, size) tensor with values in [0, 1],
/// resampling any image whose sides differ from `size`.
Tensor<float> images_to_tensor(std::span<const Image* const> images, int size);

/// Outline of `box` in `color`, `thickness` pixels wide, clipped to the image.
void draw_box(Image& image, const Box& box, const std::array<std::uint8_t, 3>& color, int thickness = 2);

struct SyntheticSpec {
    int image_size = 160;
    int min_objects = 1;
    int max_objects = 3;
    int min_extent = 28;  // object width/height range in pixels
    int max_extent = 64;
    double max_pairwise_iou = 0.3;
    int noise_low = 40;  // background channel values are uniform in [low, high]
    int noise_high = 160;
    // Class 0 is a filled red rectangle, class 1 a filled blue ellipse.
    std::vector<std::string> class_names{"Rect", "Ellipse"};

    void validate() const;
};

struct Sample {
    std::string id;
    Image image;
    std::vector<KittiLabel> labels;
};

/// Deterministic in `seed`. Each label's box is the exact pixel extent of the
/// drawn shape (left/top inclusive pixel edge, right/bottom exclusive).
std::vector<Sample> generate_synthetic_dataset(const SyntheticSpec& spec, int count, std::uint64_t seed);

/// Writes `images/<id>.ppm` and `labels/<id>.txt` under `root`.
void write_dataset(const std::filesystem::path& root, std::span<const Sample> samples);
/// Reads every `labels/<stem>.txt` with its `images/<stem>.ppm`, sorted by
/// stem. Throws IoError when either directory is missing or an image has no
/// label file.
std::vector<Sample> load_dataset(const std::filesystem::path& root);

/// Training targets for one sample: non-DontCare labels mapped to class ids
/// and normalised by the image size. Unknown class names raise ConfigError.
std::vector<GroundTruthBox> to_ground_truth(const Sample& sample, const std::vector<std::string>& class_names);

}  // namespace frdet
