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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "frdet/data.hpp"
#include "frdet/eval.hpp"
#include "frdet/loss.hpp"
#include "frdet/network.hpp"
#include "frdet/postprocess.hpp"

namespace frdet {

struct TrainConfig {
    int batch_size = 8;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    int iterations = 2000;
    std::uint64_t seed = 0;
    int checkpoint_every = 500;  // 0 disables intermediate checkpoints
    // Global L2 bound on the gradient before the SGD step; 0 disables.
    double max_grad_norm = 10.0;

    /// Batch 64, learning rate 0.0005: the published full-KITTI GPU setting.
    static TrainConfig reference_preset();
    void validate() const;
};

/// SGD with momentum. Weight decay applies to the tensors flagged in
/// `decay`:  v = m*v - lr*(g + wd*w),  w += v.
class SgdOptimizer {
public:
    SgdOptimizer(std::vector<Tensor<float>> params, std::vector<bool> decay, double learning_rate, double momentum,
                 double weight_decay);
    /// Conv weights decay, biases and batch-norm parameters do not.
    static SgdOptimizer for_weights(Weights<float>& weights, const TrainConfig& config);

    /// Rescales all gradients so their joint L2 norm is at most `max_norm`.
    /// Returns the norm before rescaling.
    double clip_grad_norm(double max_norm);
    void step();
    void zero_grad();
    std::span<const Tensor<float>> parameters() const { return params_; }

private:
    std::vector<Tensor<float>> params_;
    std::vector<bool> decay_;
    std::vector<std::vector<float>> velocity_;
    double lr_, momentum_, weight_decay_;
};

/// Conv weights uniform in (-b, b), b = sqrt(1 / (K*K*Cin)); biases 0; batch
/// norm identity. Deterministic in `seed`.
void init_weights(const LayerGraph& graph, Weights<float>& weights, std::uint64_t seed);
Weights<float> init_weights(const LayerGraph& graph, std::uint64_t seed);

struct IterationLog {
    int iteration = 0;
    LossBreakdown loss;
};

/// Log line `iter,loss_box,loss_obj,loss_cls,loss_total`.
std::string format_log_line(const IterationLog& log);
inline constexpr const char* kLogHeader = "iter,loss_box,loss_obj,loss_cls,loss_total";

struct TrainOutputs {
    // When set: `train_log.csv`, `checkpoint_<iter>.frdw`, `final.frdw`, and
    // `last_good.frdw` if a NaN aborts the run.
    std::optional<std::filesystem::path> directory;
    std::ostream* log = nullptr;  // extra CSV sink (header written first)
    std::function<void(const IterationLog&)> on_iteration;
};

struct TrainResult {
    std::vector<IterationLog> log;
    Weights<float> weights;
};

/// Fixed training set in memory: images already packed at network input size.
struct TrainingSet {
    Tensor<float> images;  // (N, 3, S, S)
    std::vector<TargetAssignment> targets;

    static TrainingSet from_samples(std::span<const Sample> samples, const NetworkConfig& config);
    std::size_t size() const { return targets.size(); }
};

/// Runs `config.iterations` SGD steps on batches drawn from per-epoch seeded
/// permutations. `weights` is updated in place and also returned. A
/// non-finite loss stops training with NumericError after writing the
/// weights from before the failing step.
TrainResult train(const LayerGraph& graph, Weights<float>& weights, const TrainingSet& data,
                  const TrainConfig& config, const TrainOutputs& outputs = {});

/// Inference: batched eval-mode forward, decode, per-image NMS.
std::vector<std::vector<Detection>> detect(const LayerGraph& graph, Weights<float>& weights,
                                           std::span<const Image* const> images,
                                           const DecodeOptions& options = {},
                                           double nms_thresh = kDefaultNmsThreshold);

// Low enough that the precision-recall curve reaches full recall.
inline constexpr double kEvalConfThreshold = 0.005;

/// Detections are produced at network input size and mapped back to each
/// sample's own pixel grid before matching.
EvalReport evaluate_model(const LayerGraph& graph, Weights<float>& weights, std::span<const Sample> samples,
                          const EvalOptions& eval_options = {},
                          const DecodeOptions& options = {kEvalConfThreshold, true});

/// Reads FRDET_THREADS (default 1) and caps the BLAS thread pool. Returns
/// the count applied.
int configure_threads();
void set_num_threads(int threads);

}  // namespace frdet
