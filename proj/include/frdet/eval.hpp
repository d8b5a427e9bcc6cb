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

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "frdet/data.hpp"
#include "frdet/postprocess.hpp"

namespace frdet {

/// Ground truth as seen by the matcher. Boxes with `counted == false`
/// (outside the bucket, or DontCare regions with class_id -1) can absorb a
/// detection without rewarding or penalising it.
struct EvalGroundTruth {
    Box box;
    int class_id = -1;
    bool counted = false;
};

struct EvalImage {
    std::vector<Detection> detections;
    std::vector<EvalGroundTruth> gts;
};

/// Maps labels onto class ids and marks bucket eligibility. Labels whose
/// class is not in `class_names` are dropped.
std::vector<EvalGroundTruth> make_eval_ground_truth(std::span<const KittiLabel> labels,
                                                    const std::vector<std::string>& class_names,
                                                    const DifficultyBucket& bucket);

struct PrPoint {
    double recall = 0;
    double precision = 0;
};

struct ApResult {
    double ap = 0;
    int num_gt = 0;  // counted ground truths of this class
    int true_positives = 0;
    int false_positives = 0;
    std::vector<PrPoint> curve;  // one point per scored detection, in score order
};

/// All-point interpolated AP for one class over a set of images.
///
/// Detections are ranked by score (stable, so ties keep image order) and
/// matched greedily to the unmatched counted ground truth of the same class
/// with the highest IoU >= `iou_thresh`. A detection that instead overlaps an
/// uncounted box of its class by that IoU, or lies inside a DontCare region
/// by that fraction of its own area, is dropped. Detections shorter than
/// `min_height` pixels are dropped too. AP is the area under the
/// monotone precision envelope.
ApResult average_precision(std::span<const EvalImage> images, int class_id, double iou_thresh,
                           double min_height = 0);

struct EvalOptions {
    double iou_thresh = 0.5;
    // Per-class overrides (e.g. {"Car", 0.7} for the official KITTI setting).
    std::map<std::string, double> class_iou;

    double iou_for(const std::string& class_name) const;
};

struct EvalCell {
    std::string class_name;
    std::string bucket;
    double iou_thresh = 0;
    ApResult result;
    bool included = false;  // false when the cell has no counted ground truth
};

struct EvalReport {
    std::vector<EvalCell> cells;  // class-major, buckets in easy/moderate/hard order
    std::optional<double> map_all;       // mean AP over every included cell
    std::optional<double> map_moderate;  // mean AP over included moderate cells
    std::size_t images = 0;

    const EvalCell* find(const std::string& class_name, const std::string& bucket) const;
};

struct LabelledDetections {
    std::vector<Detection> detections;
    std::vector<KittiLabel> labels;
};

EvalReport evaluate(std::span<const LabelledDetections> images, const std::vector<std::string>& class_names,
                    const EvalOptions& options = {});

/// Plain-text report: method line, one row per class with AP per bucket, mAP lines.
std::string format_report(const EvalReport& report);

class StemMismatchError : public Error {
public:
    StemMismatchError(std::vector<std::string> missing_detections, std::vector<std::string> missing_labels);
    const std::vector<std::string>& missing_detections() const { return missing_detections_; }
    const std::vector<std::string>& missing_labels() const { return missing_labels_; }

private:
    std::vector<std::string> missing_detections_;
    std::vector<std::string> missing_labels_;
};

/// Pairs `<stem>.txt` detection files with `<stem>.txt` label files. Class
/// names are collected from both sides (sorted, DontCare excluded) unless
/// given.
EvalReport evaluate_directories(const std::filesystem::path& detections_dir,
                                const std::filesystem::path& labels_dir, const EvalOptions& options = {},
                                std::optional<std::vector<std::string>> class_names = std::nullopt);

}  // namespace frdet
