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

#include "frdet/trainer.hpp"

#include <cblas.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>

namespace frdet {

namespace {

constexpr int kInferenceBatch = 8;

// Uniform in the open interval (0, 1) from the top 53 bits of the engine.
double unit_open(std::mt19937_64& rng) { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; }

class BatchSampler {
public:
    BatchSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) { reshuffle(); }

    std::vector<std::size_t> next(int batch) {
        std::vector<std::size_t> out;
        for (int i = 0; i < batch; ++i) {
            if (pos_ == order_.size()) reshuffle();
            out.push_back(order_[pos_++]);
        }
        return out;
    }

private:
    void reshuffle() {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        for (std::size_t i = order_.size() - 1; i > 0; --i) {
            std::swap(order_[i], order_[static_cast<std::size_t>(rng_() % (i + 1))]);
        }
        pos_ = 0;
    }

    std::vector<std::size_t> order_;
    std::mt19937_64 rng_;
    std::size_t pos_ = 0;
};

Tensor<float> gather(const Tensor<float>& images, std::span<const std::size_t> indices) {
    const std::size_t per = images.numel() / images.dim(0);
    Tensor<float> out({indices.size(), images.dim(1), images.dim(2), images.dim(3)});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        std::copy_n(images.data() + indices[i] * per, per, out.data() + i * per);
    }
    return out;
}

}  // namespace

TrainConfig TrainConfig::reference_preset() {
    TrainConfig c;
    c.batch_size = 64;
    c.learning_rate = 0.0005;
    return c;
}

void TrainConfig::validate() const {
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
    if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must be in [0, 1)");
    if (weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
    if (iterations < 0) throw ConfigError("iterations must be non-negative");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
    if (!(max_grad_norm >= 0)) throw ConfigError("max_grad_norm must be non-negative");
}

SgdOptimizer::SgdOptimizer(std::vector<Tensor<float>> params, std::vector<bool> decay, double learning_rate,
                           double momentum, double weight_decay)
    : params_(std::move(params)), decay_(std::move(decay)), lr_(learning_rate), momentum_(momentum),
      weight_decay_(weight_decay) {
    if (decay_.size() != params_.size()) throw ConfigError("SgdOptimizer: one decay flag per parameter required");
    for (const auto& p : params_) velocity_.emplace_back(p.numel(), 0.0f);
}

SgdOptimizer SgdOptimizer::for_weights(Weights<float>& weights, const TrainConfig& config) {
    auto params = weights.parameters();
    const auto decayed = weights.conv_weights();
    std::vector<bool> decay;
    for (const auto& p : params) {
        decay.push_back(std::any_of(decayed.begin(), decayed.end(), [&](const Tensor<float>& w) {
            return w.same_storage(p);
        }));
    }
    return SgdOptimizer(std::move(params), std::move(decay), config.learning_rate, config.momentum,
                        config.weight_decay);
}

double SgdOptimizer::clip_grad_norm(double max_norm) {
    double sq = 0;
    for (const auto& p : params_) {
        if (!p.has_grad()) continue;
        for (float g : p.grad()) sq += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm) {
        const auto f = static_cast<float>(max_norm / norm);
        for (auto& p : params_) {
            if (!p.has_grad()) continue;
            for (auto& g : p.grad()) g *= f;
        }
    }
    return norm;
}

void SgdOptimizer::step() {
    const auto lr = static_cast<float>(lr_);
    const auto m = static_cast<float>(momentum_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (!p.has_grad()) continue;
        const float wd = decay_[i] ? static_cast<float>(weight_decay_) : 0.0f;
        const auto g = p.grad();
        auto w = p.values();
        auto& v = velocity_[i];
        for (std::size_t j = 0; j < v.size(); ++j) {
            v[j] = m * v[j] - lr * (g[j] + wd * w[j]);
            w[j] += v[j];
        }
    }
}

void SgdOptimizer::zero_grad() {
    for (auto& p : params_) {
        if (p.has_grad()) p.zero_grad();
    }
}

void init_weights(const LayerGraph& graph, Weights<float>& weights, std::uint64_t seed) {
    if (weights.layers.size() != graph.nodes.size()) throw ConfigError("init_weights: weights do not match graph");
    std::mt19937_64 rng(seed);
    for (auto& node : weights.layers) {
        for (auto& l : node) {
            const auto& w = l.conv.weight;
            const double bound = std::sqrt(1.0 / static_cast<double>(w.dim(1) * w.dim(2) * w.dim(3)));
            for (auto& x : l.conv.weight.values()) x = static_cast<float>((2.0 * unit_open(rng) - 1.0) * bound);
            std::fill(l.conv.bias.values().begin(), l.conv.bias.values().end(), 0.0f);
            if (l.bn) {
                std::fill(l.bn->scale.values().begin(), l.bn->scale.values().end(), 1.0f);
                std::fill(l.bn->shift.values().begin(), l.bn->shift.values().end(), 0.0f);
                std::fill(l.bn->running_mean.values().begin(), l.bn->running_mean.values().end(), 0.0f);
                std::fill(l.bn->running_var.values().begin(), l.bn->running_var.values().end(), 1.0f);
            }
        }
    }
}

Weights<float> init_weights(const LayerGraph& graph, std::uint64_t seed) {
    auto w = Weights<float>::allocate(graph);
    init_weights(graph, w, seed);
    return w;
}

std::string format_log_line(const IterationLog& log) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f", log.iteration, log.loss.box, log.loss.objectness,
                  log.loss.classification, log.loss.total);
    return buf;
}

TrainingSet TrainingSet::from_samples(std::span<const Sample> samples, const NetworkConfig& config) {
    TrainingSet set;
    std::vector<const Image*> images;
    for (const auto& s : samples) {
        images.push_back(&s.image);
        const auto gts = to_ground_truth(s, config.class_names);
        set.targets.push_back(assign_targets(gts, config.anchors, config.input_size));
    }
    set.images = images_to_tensor(images, config.input_size);
    return set;
}

TrainResult train(const LayerGraph& graph, Weights<float>& weights, const TrainingSet& data,
                  const TrainConfig& config, const TrainOutputs& outputs) {
    config.validate();
    if (config.iterations > 0 && data.size() == 0) throw ConfigError("train: empty training set");
    const auto loss_cfg = LossConfig::from(graph.config);

    std::ofstream csv;
    if (outputs.directory) {
        std::filesystem::create_directories(*outputs.directory);
        csv.open(*outputs.directory / "train_log.csv");
        if (!csv) throw IoError("cannot write " + (*outputs.directory / "train_log.csv").string());
        csv << kLogHeader << '\n';
    }
    if (outputs.log) *outputs.log << kLogHeader << '\n';

    auto save = [&](const std::string& name, const Weights<float>& w) {
        if (outputs.directory) save_weights(*outputs.directory / name, graph, w);
    };

    TrainResult result;
    auto opt = SgdOptimizer::for_weights(weights, config);
    BatchSampler sampler(data.size(), config.seed);
    for (int it = 1; it <= config.iterations; ++it) {
        const auto idx = sampler.next(config.batch_size);
        std::vector<TargetAssignment> targets;
        for (auto i : idx) targets.push_back(data.targets[i]);
        const auto batch = gather(data.images, idx);
        // Batch-norm running statistics change during the forward pass, so
        // the snapshot is taken first.
        const auto last_good = outputs.directory ? weights.clone() : Weights<float>{};

        opt.zero_grad();
        LossResult<float> loss;
        try {
            const auto heads = forward(graph, weights, batch, true);
            loss = total_loss<float>(heads, targets, loss_cfg);
            if (!std::isfinite(loss.parts.total)) throw NumericError("loss is not finite");
        } catch (const NumericError& e) {
            save("last_good.frdw", last_good);
            throw NumericError("iteration " + std::to_string(it) + ": " + e.what() +
                               (outputs.directory ? "; last good weights kept in last_good.frdw" : ""));
        }
        loss.total.backward();
        opt.clip_grad_norm(config.max_grad_norm);
        opt.step();

        IterationLog entry{it, loss.parts};
        const auto line = format_log_line(entry);
        if (csv.is_open()) csv << line << '\n';
        if (outputs.log) *outputs.log << line << '\n';
        if (outputs.on_iteration) outputs.on_iteration(entry);
        result.log.push_back(entry);
        if (config.checkpoint_every > 0 && it % config.checkpoint_every == 0) {
            save("checkpoint_" + std::to_string(it) + ".frdw", weights);
        }
    }
    save("final.frdw", weights);
    result.weights = weights;
    return result;
}

std::vector<std::vector<Detection>> detect(const LayerGraph& graph, Weights<float>& weights,
                                           std::span<const Image* const> images, const DecodeOptions& options,
                                           double nms_thresh) {
    NoGradGuard no_grad;
    const int size = graph.config.input_size;
    std::vector<std::vector<Detection>> out;
    for (std::size_t start = 0; start < images.size(); start += kInferenceBatch) {
        const auto chunk = images.subspan(start, std::min<std::size_t>(kInferenceBatch, images.size() - start));
        const auto batch = images_to_tensor(chunk, size);
        const auto heads = forward(graph, weights, batch, false);
        for (std::size_t n = 0; n < chunk.size(); ++n) {
            auto dets = nms(decode_all(heads, n, graph.config, options), nms_thresh);
            const double sx = static_cast<double>(chunk[n]->width) / size;
            const double sy = static_cast<double>(chunk[n]->height) / size;
            for (auto& d : dets) d.box = {d.box.x1 * sx, d.box.y1 * sy, d.box.x2 * sx, d.box.y2 * sy};
            out.push_back(std::move(dets));
        }
    }
    return out;
}

EvalReport evaluate_model(const LayerGraph& graph, Weights<float>& weights, std::span<const Sample> samples,
                          const EvalOptions& eval_options, const DecodeOptions& options) {
    std::vector<const Image*> images;
    for (const auto& s : samples) images.push_back(&s.image);
    auto dets = detect(graph, weights, images, options);
    std::vector<LabelledDetections> items;
    for (std::size_t i = 0; i < samples.size(); ++i) items.push_back({std::move(dets[i]), samples[i].labels});
    return evaluate(items, graph.config.class_names, eval_options);
}

void set_num_threads(int threads) {
    if (threads < 1) throw ConfigError("thread count must be at least 1");
    openblas_set_num_threads(threads);
}

int configure_threads() {
    int threads = 1;
    if (const char* env = std::getenv("FRDET_THREADS"); env && *env) {
        const std::string text(env);
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), threads);
        if (ec != std::errc() || ptr != text.data() + text.size() || threads < 1) {
            throw ConfigError("FRDET_THREADS must be a positive integer, got '" + text + "'");
        }
    }
    set_num_threads(threads);
    return threads;
}

}  // namespace frdet
