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
#include <span>
#include <string>
#include <vector>

#include "frdet/network.hpp"

namespace frdet {

inline constexpr double kNllEpsilon = 1e-9;
inline constexpr double kIgnoreThreshold = 0.7;

/// Ground-truth box in normalised image coordinates (centre form, [0,1]).
struct GroundTruthBox {
    double cx = 0, cy = 0, w = 0, h = 0;
    int class_id = 0;
};

/// Raw head values of one (cell, anchor) after activation.
struct GaussianBoxPrediction {
    double mu_tx = 0, mu_ty = 0, mu_tw = 0, mu_th = 0;
    double var_tx = 0, var_ty = 0, var_tw = 0, var_th = 0;
    double objectness = 0;
    std::vector<double> class_probs;
};

/// Targets for one detection scale, laid out [anchor][row][col].
struct ScaleAssignment {
    int grid = 0;
    std::array<int, kAnchorsPerScale> anchor_ids{};
    // Box-loss weight; 0 where no ground truth is responsible.
    std::vector<double> gamma;
    // 1 where the no-object penalty is skipped. Covers responsible
    // positions; total_loss adds prediction-dependent ignores on top.
    std::vector<std::uint8_t> ignore;
    std::vector<std::array<double, 4>> target;  // x^G, y^G, w^G, h^G in t-space
    std::vector<int> class_id;
    std::vector<int> gt_index;  // -1 where unassigned

    std::size_t index(int anchor, int row, int col) const {
        return (static_cast<std::size_t>(anchor) * grid + row) * grid + col;
    }
};

struct TargetAssignment {
    std::array<ScaleAssignment, kNumHeads> scales;  // indexed like heads (0 = coarsest)
    std::vector<GroundTruthBox> gts;                // boxes that were accepted
    std::vector<std::string> warnings;

    std::size_t responsible_count() const;
};

/// YOLOv3-style assignment: each box goes to the anchor (over all nine) with
/// the best width/height IoU, at the cell containing its centre on that
/// anchor's scale. Two boxes landing on the same slot are resolved by larger
/// area, so the result does not depend on input order.
TargetAssignment assign_targets(std::span<const GroundTruthBox> gts, const std::vector<Anchor>& anchors,
                                int input_size);

/// -gamma * log(N(target | mu, var) + eps). Throws DomainError for var <= 0.
double gaussian_nll(double mu, double var, double target, double gamma, double eps = kNllEpsilon);

struct NllGradient {
    double value = 0;
    double d_mu = 0;
    double d_var = 0;
};
NllGradient gaussian_nll_grad(double mu, double var, double target, double gamma, double eps = kNllEpsilon);

struct LossConfig {
    int input_size = 416;
    int num_classes = 3;
    bool gaussian = true;
    double eps = kNllEpsilon;
    double ignore_thresh = kIgnoreThreshold;
    std::vector<Anchor> anchors;

    static LossConfig from(const NetworkConfig& config);
};

struct LossBreakdown {
    double box = 0;
    double objectness = 0;
    double classification = 0;
    double total = 0;
};

template <typename T>
struct LossResult {
    Tensor<T> total;  // scalar, differentiable w.r.t. the head tensors
    LossBreakdown parts;
};

/// Detection loss over a batch, averaged over images.
///
/// Head channel layout per anchor: mu_tx, mu_ty, mu_tw, mu_th, then (Gaussian
/// heads only) var_tx, var_ty, var_tw, var_th, then objectness and class
/// logits. tx, ty and all variances pass through a sigmoid, tw and th are raw.
/// Box term is the Gaussian NLL (or 0.5*squared error for plain heads),
/// objectness and classes use binary cross-entropy on logits.
template <typename T>
LossResult<T> total_loss(const HeadOutputs<T>& heads, std::span<const TargetAssignment> batch,
                         const LossConfig& config);

double sigmoid(double x);

}  // namespace frdet
