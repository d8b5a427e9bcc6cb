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

#include "frdet/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

namespace frdet {

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// IoU of two centre-form boxes.
double center_iou(double ax, double ay, double aw, double ah, double bx, double by, double bw, double bh) {
    const double ix = std::min(ax + aw / 2, bx + bw / 2) - std::max(ax - aw / 2, bx - bw / 2);
    const double iy = std::min(ay + ah / 2, by + bh / 2) - std::max(ay - ah / 2, by - bh / 2);
    if (ix <= 0 || iy <= 0) return 0.0;
    const double inter = ix * iy;
    const double uni = aw * ah + bw * bh - inter;
    return uni > 0 ? inter / uni : 0.0;
}

double shape_iou(double w1, double h1, double w2, double h2) {
    const double inter = std::min(w1, w2) * std::min(h1, h2);
    return inter / (w1 * h1 + w2 * h2 - inter);
}

auto box_key(const GroundTruthBox& g) { return std::make_tuple(-g.w * g.h, g.cx, g.cy, g.w, g.h, g.class_id); }

}  // namespace

std::size_t TargetAssignment::responsible_count() const {
    std::size_t n = 0;
    for (const auto& s : scales) {
        for (int idx : s.gt_index) n += idx >= 0 ? 1 : 0;
    }
    return n;
}

TargetAssignment assign_targets(std::span<const GroundTruthBox> gts, const std::vector<Anchor>& anchors,
                                int input_size) {
    if (anchors.size() != static_cast<std::size_t>(kNumHeads * kAnchorsPerScale)) {
        throw ConfigError("assign_targets: 9 anchors required, got " + std::to_string(anchors.size()));
    }
    if (input_size <= 0 || input_size % 32 != 0) throw ConfigError("assign_targets: input size must be a multiple of 32");
    TargetAssignment out;
    const std::array<int, kNumHeads> grids{input_size / 32, input_size / 16, input_size / 8};
    for (int h = 0; h < kNumHeads; ++h) {
        auto& s = out.scales[h];
        s.grid = grids[h];
        const int group = kNumHeads - 1 - h;
        for (int a = 0; a < kAnchorsPerScale; ++a) s.anchor_ids[a] = group * kAnchorsPerScale + a;
        const std::size_t cells = static_cast<std::size_t>(kAnchorsPerScale) * s.grid * s.grid;
        s.gamma.assign(cells, 0.0);
        s.ignore.assign(cells, 0);
        s.target.assign(cells, {0, 0, 0, 0});
        s.class_id.assign(cells, -1);
        s.gt_index.assign(cells, -1);
    }

    for (const auto& g : gts) {
        if (!(g.w > 0) || !(g.h > 0)) {
            out.warnings.push_back("rejected ground-truth box with non-positive size (w=" + std::to_string(g.w) +
                                   ", h=" + std::to_string(g.h) + ")");
            continue;
        }
        out.gts.push_back(g);
    }
    for (std::size_t gi = 0; gi < out.gts.size(); ++gi) {
        const auto& g = out.gts[gi];
        const double gw = g.w * input_size;
        const double gh = g.h * input_size;
        int best = 0;
        double best_iou = -1;
        for (int a = 0; a < static_cast<int>(anchors.size()); ++a) {
            const double v = shape_iou(gw, gh, anchors[a].width, anchors[a].height);
            if (v > best_iou) {
                best_iou = v;
                best = a;
            }
        }
        const int head = kNumHeads - 1 - best / kAnchorsPerScale;
        const int local = best % kAnchorsPerScale;
        auto& s = out.scales[head];
        const int col = std::clamp(static_cast<int>(std::floor(g.cx * s.grid)), 0, s.grid - 1);
        const int row = std::clamp(static_cast<int>(std::floor(g.cy * s.grid)), 0, s.grid - 1);
        const auto idx = s.index(local, row, col);
        if (s.gt_index[idx] >= 0) {
            const auto& other = out.gts[s.gt_index[idx]];
            out.warnings.push_back("two ground-truth boxes share scale " + std::to_string(head) + " cell (" +
                                   std::to_string(row) + "," + std::to_string(col) + ") anchor " +
                                   std::to_string(best) + "; keeping the larger");
            if (box_key(other) <= box_key(g)) continue;
        }
        s.gt_index[idx] = static_cast<int>(gi);
        s.gamma[idx] = 2.0 - g.w * g.h;
        s.ignore[idx] = 1;
        s.class_id[idx] = g.class_id;
        s.target[idx] = {g.cx * s.grid - col, g.cy * s.grid - row, std::log(gw / anchors[best].width),
                         std::log(gh / anchors[best].height)};
    }
    return out;
}

NllGradient gaussian_nll_grad(double mu, double var, double target, double gamma, double eps) {
    if (!(var > 0)) throw DomainError("gaussian_nll: variance must be positive, got " + std::to_string(var));
    if (eps < 0) throw DomainError("gaussian_nll: eps must be non-negative");
    if (gamma < 0) throw DomainError("gaussian_nll: gamma must be non-negative");
    NllGradient r;
    if (gamma == 0) return r;
    const double d = target - mu;
    const double density = std::exp(-d * d / (2 * var)) / std::sqrt(2 * std::numbers::pi * var);
    const double denom = density + eps;
    r.value = -gamma * std::log(denom);
    r.d_mu = -gamma / denom * density * d / var;
    r.d_var = -gamma / denom * density * (d * d / (2 * var * var) - 1 / (2 * var));
    return r;
}

double gaussian_nll(double mu, double var, double target, double gamma, double eps) {
    return gaussian_nll_grad(mu, var, target, gamma, eps).value;
}

LossConfig LossConfig::from(const NetworkConfig& config) {
    LossConfig c;
    c.input_size = config.input_size;
    c.num_classes = config.num_classes;
    c.gaussian = config.gaussian_head;
    c.anchors = config.anchors;
    return c;
}

template <typename T>
LossResult<T> total_loss(const HeadOutputs<T>& heads, std::span<const TargetAssignment> batch,
                         const LossConfig& config) {
    const int box_params = config.gaussian ? 8 : 4;
    const int values = box_params + 1 + config.num_classes;
    const std::size_t batch_size = batch.size();
    if (batch_size == 0) throw ShapeError("total_loss: empty batch");

    LossBreakdown parts;
    std::array<std::vector<T>, kNumHeads> grads;
    const double norm = 1.0 / static_cast<double>(batch_size);

    for (int h = 0; h < kNumHeads; ++h) {
        const auto& head = heads[h];
        const int grid = batch[0].scales[h].grid;
        const Shape expected{batch_size, static_cast<std::size_t>(kAnchorsPerScale * values),
                             static_cast<std::size_t>(grid), static_cast<std::size_t>(grid)};
        if (head.shape() != expected) {
            throw ShapeError("total_loss: head " + std::to_string(h) + " has shape " + shape_to_string(head.shape()) +
                             ", targets need " + shape_to_string(expected));
        }
        grads[h].assign(head.numel(), T(0));
        const std::size_t plane = static_cast<std::size_t>(grid) * grid;
        const T* x = head.data();
        T* gx = grads[h].data();

        for (std::size_t n = 0; n < batch_size; ++n) {
            const auto& assign = batch[n].scales[h];
            if (assign.grid != grid) throw ShapeError("total_loss: inconsistent grid sizes across the batch");
            const auto& gts = batch[n].gts;
            for (int a = 0; a < kAnchorsPerScale; ++a) {
                const Anchor& anchor = config.anchors.at(assign.anchor_ids[a]);
                const std::size_t base = (n * kAnchorsPerScale + a) * values * plane;
                auto at = [&](int c, std::size_t cell) { return base + c * plane + cell; };
                for (int row = 0; row < grid; ++row) {
                    for (int col = 0; col < grid; ++col) {
                        const std::size_t cell = static_cast<std::size_t>(row) * grid + col;
                        const std::size_t slot = assign.index(a, row, col);
                        const double obj = x[at(box_params, cell)];
                        if (assign.gt_index[slot] < 0) {
                            bool ignored = assign.ignore[slot] != 0;
                            if (!ignored && !gts.empty()) {
                                const double pcx = (sigmoid(x[at(0, cell)]) + col) / grid;
                                const double pcy = (sigmoid(x[at(1, cell)]) + row) / grid;
                                const double pw = anchor.width / config.input_size *
                                                  std::exp(std::min<double>(x[at(2, cell)], 50.0));
                                const double ph = anchor.height / config.input_size *
                                                  std::exp(std::min<double>(x[at(3, cell)], 50.0));
                                for (const auto& g : gts) {
                                    if (center_iou(pcx, pcy, pw, ph, g.cx, g.cy, g.w, g.h) > config.ignore_thresh) {
                                        ignored = true;
                                        break;
                                    }
                                }
                            }
                            if (!ignored) {
                                parts.objectness += norm * softplus(obj);
                                gx[at(box_params, cell)] += static_cast<T>(norm * sigmoid(obj));
                            }
                            continue;
                        }

                        const double gamma = assign.gamma[slot];
                        const auto& tgt = assign.target[slot];
                        for (int q = 0; q < 4; ++q) {
                            const double raw = x[at(q, cell)];
                            const bool squashed = q < 2;
                            const double mu = squashed ? sigmoid(raw) : raw;
                            const double dmu = squashed ? mu * (1 - mu) : 1.0;
                            if (config.gaussian) {
                                const double var = sigmoid(x[at(4 + q, cell)]);
                                if (!(var > 0)) {
                                    throw NumericError("loss term 'box': variance activation is " +
                                                       std::to_string(var) + " for raw value " +
                                                       std::to_string(x[at(4 + q, cell)]));
                                }
                                const auto g = gaussian_nll_grad(mu, var, tgt[q], gamma, config.eps);
                                parts.box += norm * g.value;
                                gx[at(q, cell)] += static_cast<T>(norm * g.d_mu * dmu);
                                gx[at(4 + q, cell)] += static_cast<T>(norm * g.d_var * var * (1 - var));
                            } else {
                                const double d = mu - tgt[q];
                                parts.box += norm * 0.5 * gamma * d * d;
                                gx[at(q, cell)] += static_cast<T>(norm * gamma * d * dmu);
                            }
                        }
                        parts.objectness += norm * softplus(-obj);
                        gx[at(box_params, cell)] += static_cast<T>(norm * (sigmoid(obj) - 1));
                        for (int c = 0; c < config.num_classes; ++c) {
                            const double z = x[at(box_params + 1 + c, cell)];
                            const double t = assign.class_id[slot] == c ? 1.0 : 0.0;
                            parts.classification += norm * (softplus(z) - t * z);
                            gx[at(box_params + 1 + c, cell)] += static_cast<T>(norm * (sigmoid(z) - t));
                        }
                    }
                }
            }
        }
    }
    parts.total = parts.box + parts.objectness + parts.classification;
    const std::array<std::pair<const char*, double>, 3> terms{
        {{"box", parts.box}, {"objectness", parts.objectness}, {"classification", parts.classification}}};
    for (const auto& [name, v] : terms) {
        if (!std::isfinite(v)) throw NumericError(std::string("loss term '") + name + "' is not finite");
    }

    LossResult<T> result{Tensor<T>({1}, static_cast<T>(parts.total)), parts};
    const bool needs_grad =
        GradMode::enabled() && std::any_of(heads.begin(), heads.end(), [](const auto& t) { return t.requires_grad(); });
    if (needs_grad) {
        auto& node = *result.total.node();
        node.requires_grad = true;
        for (const auto& hd : heads) {
            if (hd.requires_grad()) node.parents.push_back(hd.node());
        }
        auto* self = result.total.node().get();
        node.backward_fn = [self, heads, grads = std::move(grads)]() mutable {
            const T seed = self->grad[0];
            for (int h = 0; h < kNumHeads; ++h) {
                if (!heads[h].requires_grad()) continue;
                auto d = heads[h].grad();
                for (std::size_t i = 0; i < d.size(); ++i) d[i] += seed * grads[h][i];
            }
        };
    }
    return result;
}

template LossResult<float> total_loss(const HeadOutputs<float>&, std::span<const TargetAssignment>, const LossConfig&);
template LossResult<double> total_loss(const HeadOutputs<double>&, std::span<const TargetAssignment>,
                                       const LossConfig&);

}  // namespace frdet
