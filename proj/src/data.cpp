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

#include "frdet/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace frdet {

namespace {

constexpr int kKittiFields = 15;

double to_double(const std::string& text, const char* field, int line) {
    double value = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw ParseError(std::string("field '") + field + "' is not a number: '" + text + "'", line);
    }
    return value;
}

// Uniform integer in [lo, hi] from the raw engine output, so streams are
// identical across standard libraries.
int uniform_int(std::mt19937_64& rng, int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(rng() % span);
}

std::string read_token(std::istream& in) {
    std::string tok;
    while (true) {
        const int c = in.peek();
        if (c == EOF) break;
        if (c == '#') {
            std::string skip;
            std::getline(in, skip);
            continue;
        }
        if (std::isspace(c)) {
            in.get();
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(in.get()));
    }
    return tok;
}

int header_int(std::istream& in, const char* what) {
    const auto tok = read_token(in);
    int v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size() || v <= 0) {
        throw ParseError(std::string("PPM header: bad ") + what + " '" + tok + "'");
    }
    return v;
}

}  // namespace

std::vector<KittiLabel> parse_kitti_labels(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse_kitti_labels(in);
}

std::vector<KittiLabel> parse_kitti_labels(std::istream& in) {
    std::vector<KittiLabel> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::vector<std::string> f;
        std::string tok;
        while (ls >> tok) f.push_back(tok);
        if (f.empty()) continue;
        if (f.size() != kKittiFields) {
            throw ParseError("expected 15 fields, got " + std::to_string(f.size()), line_no);
        }
        KittiLabel l;
        l.class_name = f[0];
        l.truncated = to_double(f[1], "truncated", line_no);
        const double occ = to_double(f[2], "occluded", line_no);
        // KITTI writes -1 for the occlusion of DontCare regions.
        const double min_occ = l.dont_care() ? -1 : 0;
        if (occ != std::floor(occ) || occ < min_occ || occ > 3) {
            throw ParseError("occluded must be an integer in 0..3, got '" + f[2] + "'", line_no);
        }
        l.occluded = static_cast<int>(occ);
        l.alpha = to_double(f[3], "alpha", line_no);
        l.left = to_double(f[4], "left", line_no);
        l.top = to_double(f[5], "top", line_no);
        l.right = to_double(f[6], "right", line_no);
        l.bottom = to_double(f[7], "bottom", line_no);
        for (int i = 0; i < 3; ++i) l.dimensions[i] = to_double(f[8 + i], "dimensions", line_no);
        for (int i = 0; i < 3; ++i) l.location[i] = to_double(f[11 + i], "location", line_no);
        l.rotation_y = to_double(f[14], "rotation_y", line_no);
        if (!(l.left < l.right) || !(l.top < l.bottom)) {
            throw ParseError("degenerate bbox (" + f[4] + ", " + f[5] + ", " + f[6] + ", " + f[7] + ")", line_no);
        }
        out.push_back(std::move(l));
    }
    return out;
}

std::vector<KittiLabel> load_kitti_labels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open label file " + path.string());
    try {
        return parse_kitti_labels(in);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::string format_kitti_label(const KittiLabel& l) {
    char buf[320];
    std::snprintf(buf, sizeof(buf), "%s %.2f %d %.2f %.2f %.2f %.2f %.2f %.2f %.2f %.2f %.2f %.2f %.2f %.2f",
                  l.class_name.c_str(), l.truncated, l.occluded, l.alpha, l.left, l.top, l.right, l.bottom,
                  l.dimensions[0], l.dimensions[1], l.dimensions[2], l.location[0], l.location[1], l.location[2],
                  l.rotation_y);
    return buf;
}

void write_kitti_labels(std::ostream& out, std::span<const KittiLabel> labels) {
    for (const auto& l : labels) out << format_kitti_label(l) << '\n';
}

DifficultyBucket easy_bucket() { return {"easy", 40, 0, 0.15}; }
DifficultyBucket moderate_bucket() { return {"moderate", 25, 1, 0.30}; }
DifficultyBucket hard_bucket() { return {"hard", 25, 2, 0.50}; }
std::vector<DifficultyBucket> standard_buckets() { return {easy_bucket(), moderate_bucket(), hard_bucket()}; }

std::pair<std::vector<std::string>, std::vector<std::string>> split_dataset(std::vector<std::string> ids,
                                                                            double ratio, std::uint64_t seed) {
    if (ids.empty()) throw ConfigError("split_dataset: no ids");
    if (!(ratio > 0 && ratio < 1)) throw ConfigError("split_dataset: ratio must be in (0, 1)");
    std::mt19937_64 rng(seed);
    for (std::size_t i = ids.size() - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng() % (i + 1));
        std::swap(ids[i], ids[j]);
    }
    const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(ids.size())));
    std::vector<std::string> train(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::string> val(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
    return {std::move(train), std::move(val)};
}

Image read_ppm(std::istream& in) {
    if (read_token(in) != "P6") throw ParseError("not a binary PPM (expected magic P6)");
    const int w = header_int(in, "width");
    const int h = header_int(in, "height");
    const int maxval = header_int(in, "maxval");
    if (maxval != 255) throw ParseError("PPM maxval must be 255, got " + std::to_string(maxval));
    // read_token consumed exactly one whitespace byte after maxval.
    Image img(w, h);
    in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.rgb.size())) {
        throw ParseError("PPM pixel data truncated: " + std::to_string(in.gcount()) + " of " +
                         std::to_string(img.rgb.size()) + " bytes");
    }
    return img;
}

Image read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image " + path.string());
    try {
        return read_ppm(in);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_ppm(std::ostream& out, const Image& image) {
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image " + path.string());
    write_ppm(out, image);
    if (!out) throw IoError("write failed for " + path.string());
}

Image resize_nearest(const Image& image, int width, int height) {
    if (width == image.width && height == image.height) return image;
    Image out(width, height);
    for (int y = 0; y < height; ++y) {
        const int sy = std::min(image.height - 1, y * image.height / height);
        for (int x = 0; x < width; ++x) {
            const int sx = std::min(image.width - 1, x * image.width / width);
            std::copy_n(image.pixel(sx, sy), 3, out.pixel(x, y));
        }
    }
    return out;
}

Tensor<float> images_to_tensor(std::span<const Image* const> images, int size) {
    const auto s = static_cast<std::size_t>(size);
    Tensor<float> t({images.size(), 3, s, s});
    const std::size_t plane = s * s;
    for (std::size_t n = 0; n < images.size(); ++n) {
        const Image* src = images[n];
        Image resized;
        if (src->width != size || src->height != size) {
            resized = resize_nearest(*src, size, size);
            src = &resized;
        }
        float* dst = t.data() + n * 3 * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            for (std::size_t c = 0; c < 3; ++c) dst[c * plane + i] = src->rgb[i * 3 + c] / 255.0f;
        }
    }
    return t;
}

void draw_box(Image& image, const Box& box, const std::array<std::uint8_t, 3>& color, int thickness) {
    const int x1 = std::clamp(static_cast<int>(std::lround(box.x1)), 0, image.width - 1);
    const int y1 = std::clamp(static_cast<int>(std::lround(box.y1)), 0, image.height - 1);
    const int x2 = std::clamp(static_cast<int>(std::lround(box.x2)) - 1, 0, image.width - 1);
    const int y2 = std::clamp(static_cast<int>(std::lround(box.y2)) - 1, 0, image.height - 1);
    for (int y = y1; y <= y2; ++y) {
        for (int x = x1; x <= x2; ++x) {
            const bool edge = x - x1 < thickness || x2 - x < thickness || y - y1 < thickness || y2 - y < thickness;
            if (edge) std::copy(color.begin(), color.end(), image.pixel(x, y));
        }
    }
}

void SyntheticSpec::validate() const {
    if (image_size <= 0) throw ConfigError("synthetic image_size must be positive");
    if (min_objects < 0 || max_objects < min_objects) throw ConfigError("synthetic object count range is empty");
    if (min_extent < 2 || max_extent < min_extent || max_extent > image_size) {
        throw ConfigError("synthetic extent range must satisfy 2 <= min <= max <= image_size");
    }
    if (noise_low < 0 || noise_high > 255 || noise_high < noise_low) throw ConfigError("synthetic noise range invalid");
    if (class_names.size() != 2) throw ConfigError("synthetic data has exactly two classes");
}

std::vector<Sample> generate_synthetic_dataset(const SyntheticSpec& spec, int count, std::uint64_t seed) {
    spec.validate();
    constexpr int kPlacementAttempts = 100;
    std::mt19937_64 rng(seed);
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(std::max(count, 0)));
    const int size = spec.image_size;
    for (int i = 0; i < count; ++i) {
        Sample s;
        char id[16];
        std::snprintf(id, sizeof(id), "%06d", i);
        s.id = id;
        s.image = Image(size, size);
        for (auto& v : s.image.rgb) v = static_cast<std::uint8_t>(uniform_int(rng, spec.noise_low, spec.noise_high));

        const int wanted = uniform_int(rng, spec.min_objects, spec.max_objects);
        std::vector<Box> placed;
        for (int o = 0; o < wanted; ++o) {
            for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
                const int cls = uniform_int(rng, 0, 1);
                const int w = uniform_int(rng, spec.min_extent, spec.max_extent);
                const int h = uniform_int(rng, spec.min_extent, spec.max_extent);
                const int x0 = uniform_int(rng, 0, size - w);
                const int y0 = uniform_int(rng, 0, size - h);
                const Box box{double(x0), double(y0), double(x0 + w), double(y0 + h)};
                const bool clash = std::any_of(placed.begin(), placed.end(),
                                               [&](const Box& b) { return iou(b, box) > spec.max_pairwise_iou; });
                if (clash) continue;

                const std::array<std::uint8_t, 3> color =
                    cls == 0 ? std::array<std::uint8_t, 3>{static_cast<std::uint8_t>(uniform_int(rng, 200, 255)),
                                                           static_cast<std::uint8_t>(uniform_int(rng, 0, 50)),
                                                           static_cast<std::uint8_t>(uniform_int(rng, 0, 50))}
                             : std::array<std::uint8_t, 3>{static_cast<std::uint8_t>(uniform_int(rng, 0, 50)),
                                                           static_cast<std::uint8_t>(uniform_int(rng, 0, 50)),
                                                           static_cast<std::uint8_t>(uniform_int(rng, 200, 255))};
                // Track the painted extent so the label matches the pixels exactly.
                int min_x = size, min_y = size, max_x = -1, max_y = -1;
                const double cx = x0 + w / 2.0, cy = y0 + h / 2.0, rx = w / 2.0, ry = h / 2.0;
                for (int y = y0; y < y0 + h; ++y) {
                    for (int x = x0; x < x0 + w; ++x) {
                        if (cls == 1) {
                            const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
                            if (dx * dx + dy * dy > 1.0) continue;
                        }
                        std::copy(color.begin(), color.end(), s.image.pixel(x, y));
                        min_x = std::min(min_x, x);
                        min_y = std::min(min_y, y);
                        max_x = std::max(max_x, x);
                        max_y = std::max(max_y, y);
                    }
                }
                KittiLabel l;
                l.class_name = spec.class_names[cls];
                l.left = min_x;
                l.top = min_y;
                l.right = max_x + 1;
                l.bottom = max_y + 1;
                s.labels.push_back(l);
                placed.push_back(l.box());
                break;
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

void write_dataset(const std::filesystem::path& root, std::span<const Sample> samples) {
    namespace fs = std::filesystem;
    fs::create_directories(root / "images");
    fs::create_directories(root / "labels");
    for (const auto& s : samples) {
        write_ppm(root / "images" / (s.id + ".ppm"), s.image);
        std::ofstream out(root / "labels" / (s.id + ".txt"));
        if (!out) throw IoError("cannot write labels for " + s.id);
        write_kitti_labels(out, s.labels);
    }
}

std::vector<Sample> load_dataset(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    const auto images = root / "images";
    const auto labels = root / "labels";
    if (!fs::is_directory(images)) throw IoError("missing directory " + images.string());
    if (!fs::is_directory(labels)) throw IoError("missing directory " + labels.string());
    std::vector<std::string> stems;
    for (const auto& e : fs::directory_iterator(images)) {
        if (e.path().extension() == ".ppm") stems.push_back(e.path().stem().string());
    }
    std::sort(stems.begin(), stems.end());
    std::vector<Sample> out;
    for (const auto& stem : stems) {
        const auto label_path = labels / (stem + ".txt");
        if (!fs::exists(label_path)) throw IoError("image " + stem + ".ppm has no label file " + label_path.string());
        Sample s;
        s.id = stem;
        s.image = read_ppm(images / (stem + ".ppm"));
        s.labels = load_kitti_labels(label_path);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<GroundTruthBox> to_ground_truth(const Sample& sample, const std::vector<std::string>& class_names) {
    std::vector<GroundTruthBox> out;
    const double w = sample.image.width, h = sample.image.height;
    for (const auto& l : sample.labels) {
        if (l.dont_care()) continue;
        const auto it = std::find(class_names.begin(), class_names.end(), l.class_name);
        if (it == class_names.end()) {
            throw ConfigError("sample " + sample.id + ": class '" + l.class_name + "' is not in the network config");
        }
        GroundTruthBox g;
        g.cx = (l.left + l.right) / 2.0 / w;
        g.cy = (l.top + l.bottom) / 2.0 / h;
        g.w = (l.right - l.left) / w;
        g.h = (l.bottom - l.top) / h;
        g.class_id = static_cast<int>(it - class_names.begin());
        out.push_back(g);
    }
    return out;
}

}  // namespace frdet
