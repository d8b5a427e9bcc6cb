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

#include "frdet/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace frdet {

namespace {

struct Ranked {
    double score;
    std::size_t image;
    std::size_t index;
};

double inside_fraction(const Box& det, const Box& region) {
    const double iw = std::min(det.x2, region.x2) - std::max(det.x1, region.x1);
    const double ih = std::min(det.y2, region.y2) - std::max(det.y1, region.y1);
    if (iw <= 0 || ih <= 0 || det.area() <= 0) return 0.0;
    return iw * ih / det.area();
}

std::vector<std::string> list_stems(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("missing directory " + dir.string());
    std::vector<std::string> stems;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".txt") stems.push_back(e.path().stem().string());
    }
    std::sort(stems.begin(), stems.end());
    return stems;
}

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
    return out;
}

}  // namespace

std::vector<EvalGroundTruth> make_eval_ground_truth(std::span<const KittiLabel> labels,
                                                    const std::vector<std::string>& class_names,
                                                    const DifficultyBucket& bucket) {
    std::vector<EvalGroundTruth> out;
    for (const auto& l : labels) {
        if (l.dont_care()) {
            out.push_back({l.box(), -1, false});
            continue;
        }
        const auto it = std::find(class_names.begin(), class_names.end(), l.class_name);
        if (it == class_names.end()) continue;
        out.push_back({l.box(), static_cast<int>(it - class_names.begin()), bucket.admits(l)});
    }
    return out;
}

ApResult average_precision(std::span<const EvalImage> images, int class_id, double iou_thresh, double min_height) {
    ApResult r;
    std::vector<std::vector<bool>> matched(images.size());
    std::vector<Ranked> ranked;
    for (std::size_t i = 0; i < images.size(); ++i) {
        matched[i].assign(images[i].gts.size(), false);
        for (const auto& g : images[i].gts) {
            if (g.counted && g.class_id == class_id) ++r.num_gt;
        }
        for (std::size_t d = 0; d < images[i].detections.size(); ++d) {
            const auto& det = images[i].detections[d];
            if (det.class_id == class_id) ranked.push_back({det.score, i, d});
        }
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });

    std::vector<bool> hits;
    for (const auto& rk : ranked) {
        const auto& img = images[rk.image];
        const Box& box = img.detections[rk.index].box;
        int best = -1;
        double best_iou = iou_thresh;
        for (std::size_t g = 0; g < img.gts.size(); ++g) {
            const auto& gt = img.gts[g];
            if (!gt.counted || gt.class_id != class_id || matched[rk.image][g]) continue;
            const double o = iou(box, gt.box);
            if (o >= best_iou) {
                best_iou = o;
                best = static_cast<int>(g);
            }
        }
        if (best >= 0) {
            matched[rk.image][best] = true;
            hits.push_back(true);
            continue;
        }
        const bool neutral = box.height() < min_height ||
                             std::any_of(img.gts.begin(), img.gts.end(), [&](const EvalGroundTruth& gt) {
                                 if (gt.counted) return false;
                                 if (gt.class_id == class_id) return iou(box, gt.box) >= iou_thresh;
                                 return gt.class_id < 0 && inside_fraction(box, gt.box) >= iou_thresh;
                             });
        if (!neutral) hits.push_back(false);
    }

    for (bool h : hits) {
        h ? ++r.true_positives : ++r.false_positives;
        const double tp = r.true_positives;
        r.curve.push_back({r.num_gt > 0 ? tp / r.num_gt : 0.0, tp / (r.true_positives + r.false_positives)});
    }
    if (r.num_gt == 0) return r;
    double envelope = 0;
    std::vector<double> env(r.curve.size());
    for (std::size_t i = r.curve.size(); i-- > 0;) {
        envelope = std::max(envelope, r.curve[i].precision);
        env[i] = envelope;
    }
    double prev_recall = 0;
    for (std::size_t i = 0; i < r.curve.size(); ++i) {
        r.ap += (r.curve[i].recall - prev_recall) * env[i];
        prev_recall = r.curve[i].recall;
    }
    return r;
}

double EvalOptions::iou_for(const std::string& class_name) const {
    const auto it = class_iou.find(class_name);
    return it == class_iou.end() ? iou_thresh : it->second;
}

const EvalCell* EvalReport::find(const std::string& class_name, const std::string& bucket) const {
    for (const auto& c : cells) {
        if (c.class_name == class_name && c.bucket == bucket) return &c;
    }
    return nullptr;
}

EvalReport evaluate(std::span<const LabelledDetections> images, const std::vector<std::string>& class_names,
                    const EvalOptions& options) {
    EvalReport report;
    report.images = images.size();
    const auto buckets = standard_buckets();
    std::vector<std::vector<EvalImage>> per_bucket(buckets.size());
    for (std::size_t b = 0; b < buckets.size(); ++b) {
        for (const auto& img : images) {
            per_bucket[b].push_back({img.detections, make_eval_ground_truth(img.labels, class_names, buckets[b])});
        }
    }
    double sum_all = 0, sum_mod = 0;
    int n_all = 0, n_mod = 0;
    for (std::size_t c = 0; c < class_names.size(); ++c) {
        for (std::size_t b = 0; b < buckets.size(); ++b) {
            EvalCell cell;
            cell.class_name = class_names[c];
            cell.bucket = buckets[b].name;
            cell.iou_thresh = options.iou_for(class_names[c]);
            cell.result = average_precision(per_bucket[b], static_cast<int>(c), cell.iou_thresh, buckets[b].min_height);
            cell.included = cell.result.num_gt > 0;
            if (cell.included) {
                sum_all += cell.result.ap;
                ++n_all;
                if (cell.bucket == "moderate") {
                    sum_mod += cell.result.ap;
                    ++n_mod;
                }
            }
            report.cells.push_back(std::move(cell));
        }
    }
    if (n_all > 0) report.map_all = sum_all / n_all;
    if (n_mod > 0) report.map_moderate = sum_mod / n_mod;
    return report;
}

std::string format_report(const EvalReport& report) {
    std::ostringstream out;
    out << "AP: all-point interpolated precision envelope, " << report.images << " images\n";
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-14s %6s %10s %10s %10s\n", "class", "iou", "easy", "moderate", "hard");
    out << buf;
    for (std::size_t i = 0; i < report.cells.size(); i += 3) {
        std::string cols[3];
        for (std::size_t b = 0; b < 3 && i + b < report.cells.size(); ++b) {
            const auto& cell = report.cells[i + b];
            if (cell.included) {
                std::snprintf(buf, sizeof(buf), "%.4f", cell.result.ap);
                cols[b] = buf;
            } else {
                cols[b] = "-";
            }
        }
        std::snprintf(buf, sizeof(buf), "%-14s %6.2f %10s %10s %10s\n", report.cells[i].class_name.c_str(),
                      report.cells[i].iou_thresh, cols[0].c_str(), cols[1].c_str(), cols[2].c_str());
        out << buf;
    }
    auto line = [&](const char* label, const std::optional<double>& v) {
        if (v) {
            std::snprintf(buf, sizeof(buf), "%s %.4f\n", label, *v);
        } else {
            std::snprintf(buf, sizeof(buf), "%s -\n", label);
        }
        out << buf;
    };
    line("mAP (all buckets):", report.map_all);
    line("mAP (moderate):   ", report.map_moderate);
    return out.str();
}

StemMismatchError::StemMismatchError(std::vector<std::string> missing_detections,
                                     std::vector<std::string> missing_labels)
    : Error("detection/label stems differ; without detections: [" + join(missing_detections) +
            "]; without labels: [" + join(missing_labels) + "]"),
      missing_detections_(std::move(missing_detections)),
      missing_labels_(std::move(missing_labels)) {}

EvalReport evaluate_directories(const std::filesystem::path& detections_dir, const std::filesystem::path& labels_dir,
                                const EvalOptions& options, std::optional<std::vector<std::string>> class_names) {
    const auto det_stems = list_stems(detections_dir);
    const auto label_stems = list_stems(labels_dir);
    std::vector<std::string> no_det, no_label;
    std::set_difference(label_stems.begin(), label_stems.end(), det_stems.begin(), det_stems.end(),
                        std::back_inserter(no_det));
    std::set_difference(det_stems.begin(), det_stems.end(), label_stems.begin(), label_stems.end(),
                        std::back_inserter(no_label));
    if (!no_det.empty() || !no_label.empty()) throw StemMismatchError(no_det, no_label);

    std::vector<std::vector<KittiLabel>> labels;
    for (const auto& stem : label_stems) labels.push_back(load_kitti_labels(labels_dir / (stem + ".txt")));
    if (!class_names) {
        std::set<std::string> names;
        for (const auto& ls : labels) {
            for (const auto& l : ls) {
                if (!l.dont_care()) names.insert(l.class_name);
            }
        }
        for (const auto& stem : det_stems) {
            std::ifstream in(detections_dir / (stem + ".txt"));
            std::string line;
            while (std::getline(in, line)) {
                std::istringstream ls(line);
                std::string name;
                if (ls >> name) names.insert(name);
            }
        }
        class_names = std::vector<std::string>(names.begin(), names.end());
    }

    std::vector<LabelledDetections> images;
    for (std::size_t i = 0; i < det_stems.size(); ++i) {
        const auto path = detections_dir / (det_stems[i] + ".txt");
        std::ifstream in(path);
        if (!in) throw IoError("cannot open " + path.string());
        LabelledDetections img;
        try {
            img.detections = read_detections(in, *class_names);
        } catch (const ParseError& e) {
            throw ParseError(path.string() + ": " + e.what());
        }
        img.labels = std::move(labels[i]);
        images.push_back(std::move(img));
    }
    return evaluate(images, *class_names, options);
}

}  // namespace frdet
