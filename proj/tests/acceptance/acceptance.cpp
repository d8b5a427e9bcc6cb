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

// Acceptance suite: one PASS/FAIL line per criterion.
//
//   frdet_acceptance            run criteria 1..11
//   frdet_acceptance 3 7 10     run a subset
//
// Exit status is 0 only when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "frdet/analysis.hpp"
#include "frdet/data.hpp"
#include "frdet/eval.hpp"
#include "frdet/fr_module.hpp"
#include "frdet/gradcheck.hpp"
#include "frdet/loss.hpp"
#include "frdet/network.hpp"
#include "frdet/ops.hpp"
#include "frdet/postprocess.hpp"
#include "frdet/trainer.hpp"

namespace {

using namespace frdet;
using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            if (pass) detail << "first failure: " << what << "; ";
            pass = false;
        }
    }
};

int rand_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor<double> t(std::move(shape));
    for (auto& v : t.values()) v = dist(rng);
    return t;
}

Tensor<double> away_from_zero(Shape shape, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> mag(0.05, 2.0);
    Tensor<double> t(std::move(shape));
    for (auto& v : t.values()) v = rand_int(rng, 0, 1) ? mag(rng) : -mag(rng);
    return t;
}

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

NetworkConfig small_network(int input, int classes, bool gaussian) {
    auto c = NetworkConfig::defaults();
    c.input_size = input;
    c.num_classes = classes;
    c.class_names.clear();
    for (int i = 0; i < classes; ++i) c.class_names.push_back("c" + std::to_string(i));
    c.gaussian_head = gaussian;
    c.stem_channels = 4;
    c.neck_depth = 1;
    c.squeeze_exponent = 1;
    c.stages = {{8, 1}, {8, 0}, {8, 1}, {8, 0}, {16, 1}};
    c.anchors = default_anchors(input);
    return c;
}

// ---------------------------------------------------------------- 1

Outcome gradient_fidelity() {
    Outcome out;
    const auto t0 = Clock::now();
    constexpr int kTrials = 20;
    constexpr double kTol = 1e-5;
    std::mt19937_64 rng(1001);
    double worst = 0;
    int checks = 0;

    auto run = [&](const std::string& op, const std::function<Tensor<double>()>& fn,
                   std::vector<Tensor<double>> wrt) {
        const auto r = check_gradients(fn, std::move(wrt), {1e-5, kTol, 1e-3});
        worst = std::max(worst, r.max_rel_error);
        ++checks;
        out.require(r.passed, op + " rel " + std::to_string(r.max_rel_error) + " at " + r.worst);
    };

    for (int t = 0; t < kTrials; ++t) {
        const int cin = rand_int(rng, 1, 3), cout = rand_int(rng, 1, 3);
        auto x = random_tensor({sz(rand_int(rng, 1, 2)), sz(cin), sz(rand_int(rng, 2, 5)), sz(rand_int(rng, 2, 5))}, rng);
        auto p = ConvParams<double>::make(cin, cout, t % 2 ? 3 : 1, rand_int(rng, 1, 2));
        p.weight = random_tensor(p.weight.shape(), rng);
        p.bias = random_tensor(p.bias.shape(), rng);
        auto cot = random_tensor(conv2d(x, p).shape(), rng);
        run("conv2d", [&] { return weighted_sum(conv2d(x, p), cot); }, {x, p.weight, p.bias});
    }
    for (int t = 0; t < kTrials; ++t) {
        auto x = away_from_zero({1, sz(rand_int(rng, 1, 3)), 3, 3}, rng);
        auto cot = random_tensor(x.shape(), rng);
        run("leaky_relu", [&] { return weighted_sum(leaky_relu(x), cot); }, {x});
    }
    for (bool training : {true, false}) {
        for (int t = 0; t < kTrials; ++t) {
            const std::size_t c = sz(rand_int(rng, 1, 3));
            auto x = random_tensor({sz(rand_int(rng, 2, 3)), c, 2, 3}, rng, -2.0, 2.0);
            auto p = BatchNormParams<double>::make(static_cast<int>(c));
            p.scale = random_tensor({c}, rng, 0.5, 1.5);
            p.shift = random_tensor({c}, rng);
            p.running_mean = random_tensor({c}, rng);
            p.running_var = random_tensor({c}, rng, 0.5, 2.0);
            auto cot = random_tensor(x.shape(), rng);
            run(training ? "batch_norm(train)" : "batch_norm(eval)",
                [&] { return weighted_sum(batch_norm(x, p, training), cot); }, {x, p.scale, p.shift});
        }
    }
    for (int t = 0; t < kTrials; ++t) {
        const std::size_t h = sz(rand_int(rng, 1, 4)), w = sz(rand_int(rng, 1, 4));
        auto a = random_tensor({2, sz(rand_int(rng, 1, 3)), h, w}, rng);
        auto b = random_tensor({2, sz(rand_int(rng, 1, 3)), h, w}, rng);
        auto cot = random_tensor(concat_channels(a, b).shape(), rng);
        run("concat_channels", [&] { return weighted_sum(concat_channels(a, b), cot); }, {a, b});
    }
    for (int t = 0; t < kTrials; ++t) {
        const Shape s{1, sz(rand_int(rng, 1, 3)), sz(rand_int(rng, 1, 4)), 3};
        auto a = random_tensor(s, rng), b = random_tensor(s, rng), cot = random_tensor(s, rng);
        run("residual_add", [&] { return weighted_sum(residual_add(a, b), cot); }, {a, b});
    }
    for (int t = 0; t < kTrials; ++t) {
        auto x = random_tensor({1, sz(rand_int(rng, 1, 3)), sz(rand_int(rng, 1, 3)), 2}, rng);
        auto cot = random_tensor(upsample2x(x).shape(), rng);
        run("upsample2x", [&] { return weighted_sum(upsample2x(x), cot); }, {x});
    }
    for (int t = 0; t < kTrials; ++t) {
        auto x = random_tensor({sz(rand_int(rng, 1, 6)), 2}, rng);
        auto w = random_tensor(x.shape(), rng);
        run("sum", [&] { return sum(x); }, {x});
        run("weighted_sum", [&] { return weighted_sum(x, w); }, {x});
    }
    for (int t = 0; t < kTrials; ++t) {
        const auto m = build_fr_module(FRConfig::make(8, 1 + t % 2), true);
        const auto specs = m.convs();
        auto layers = make_conv_layers<double>(specs);
        for (auto& l : layers) {
            l.conv.weight = random_tensor(l.conv.weight.shape(), rng);
            l.conv.bias = random_tensor(l.conv.bias.shape(), rng, 0.2, 0.6);
        }
        auto x = random_tensor({2, 8, 3, 3}, rng);
        auto cot = random_tensor(x.shape(), rng);
        run("fr_module", [&] { return weighted_sum(fr_forward<double>(m, layers, x, true), cot); },
            {x, layers[0].conv.weight, layers[1].conv.weight, layers[2].conv.weight});
    }
    for (bool gaussian : {true, false}) {
        LossConfig cfg;
        cfg.input_size = 32;
        cfg.num_classes = 2;
        cfg.gaussian = gaussian;
        cfg.anchors = default_anchors(32);
        const std::size_t channels = sz(3 * ((gaussian ? 8 : 4) + 1 + cfg.num_classes));
        std::uniform_real_distribution<double> pos(0.1, 0.9), ext(0.05, 0.6);
        for (int t = 0; t < kTrials; ++t) {
            HeadOutputs<double> heads;
            for (int h = 0; h < kNumHeads; ++h) {
                const std::size_t s = sz(32 / (32 >> h));
                heads[h] = random_tensor({2, channels, s, s}, rng, -2.0, 2.0);
            }
            std::vector<TargetAssignment> batch;
            for (int n = 0; n < 2; ++n) {
                std::vector<GroundTruthBox> gts;
                for (int i = 0; i < 3 - n; ++i) gts.push_back({pos(rng), pos(rng), ext(rng), ext(rng), i % 2});
                batch.push_back(assign_targets(gts, cfg.anchors, 32));
            }
            run(gaussian ? "total_loss(gaussian)" : "total_loss(plain)",
                [&] { return total_loss(heads, batch, cfg).total; }, {heads[0], heads[1], heads[2]});
        }
    }
    const double elapsed = seconds_since(t0);
    out.require(elapsed < 60.0, "runtime " + std::to_string(elapsed) + " s exceeds 60 s");
    out.detail << checks << " checks, 20 per op, worst rel err " << std::scientific << std::setprecision(2) << worst
               << std::fixed << " (tol 1e-5), " << std::setprecision(1) << elapsed << " s";
    return out;
}

// ---------------------------------------------------------------- 2

Outcome parameter_count_oracle() {
    Outcome out;
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1002);
    int modules = 0;
    for (; modules < 150; ++modules) {
        const int k = rand_int(rng, 1, 6);
        const int c = (1 << k) * rand_int(rng, 1, 24);
        const auto cfg = FRConfig::make(c, k);
        const auto specs = build_fr_module(cfg).convs();
        std::int64_t enumerated = 0;
        for (const auto& l : make_conv_layers<float>(specs)) {
            enumerated += static_cast<std::int64_t>(l.conv.weight.numel() + l.conv.bias.numel());
        }
        const std::int64_t s = c >> k, e = c / 2;
        const std::int64_t closed_form = (c * s + s) + (s * e + e) + (9 * s * e + e);
        out.require(fr_param_count(cfg) == enumerated && enumerated == closed_form,
                    "FR C=" + std::to_string(c) + " k=" + std::to_string(k));
    }
    int networks = 0;
    for (; networks < 12; ++networks) {
        NetworkConfig c = NetworkConfig::defaults();
        c.squeeze_exponent = rand_int(rng, 1, 3);
        const int unit = 4 << c.squeeze_exponent;
        c.stem_channels = rand_int(rng, 2, 16);
        c.neck_depth = rand_int(rng, 1, 3);
        c.gaussian_head = networks % 2 == 0;
        c.residual = networks % 3 != 0;
        c.block = networks % 4 == 3 ? BlockKind::Darknet : BlockKind::Fire;
        c.num_classes = rand_int(rng, 1, 6);
        c.class_names.assign(c.num_classes, "x");
        for (auto& s : c.stages) s = {unit * rand_int(rng, 1, 4), rand_int(rng, 0, 2)};
        const auto g = build_network(c);
        const auto w = Weights<float>::allocate(g);
        const auto r = count_parameters(g);
        out.require(w.enumerate_scalars(true) == r.params_total && w.enumerate_scalars(false) == r.params_conv,
                    "network " + std::to_string(networks));
    }
    // The default full-size network as well.
    {
        const auto g = build_network(NetworkConfig::defaults());
        const auto r = count_parameters(g);
        out.require(Weights<float>::allocate(g).enumerate_scalars(true) == r.params_total, "default network");
        ++networks;
    }
    const double elapsed = seconds_since(t0);
    out.require(elapsed < 60.0, "runtime " + std::to_string(elapsed) + " s exceeds 60 s");
    out.detail << modules << " FR configs and " << networks << " networks exact, " << std::fixed << std::setprecision(1)
               << elapsed << " s";
    return out;
}

// ---------------------------------------------------------------- 3

Outcome compression_arithmetic() {
    Outcome out;
    const auto fr = fr_param_count(FRConfig::make(128, 4));
    const auto conv = conv_param_count(64, 128, 3);
    const auto block = darknet_block_param_count(128);
    out.require(fr == 6280, "fr_param_count(128, 4) = " + std::to_string(fr));
    out.require(conv == 73856, "conv_param_count(64, 128, 3) = " + std::to_string(conv));
    out.require(block > 13 * fr, "residual block " + std::to_string(block) + " not > 13 x " + std::to_string(fr));
    out.detail << "FR(128,k=4)=" << fr << ", conv(64,128,3)=" << conv << ", residual block " << block << " = "
               << std::fixed << std::setprecision(2) << static_cast<double>(block) / fr << "x FR";
    return out;
}

// ---------------------------------------------------------------- 4

Outcome ablation_structure() {
    Outcome out;
    auto cfg = NetworkConfig::defaults();
    const auto base = build_network(cfg);
    const auto base_report = count_parameters(base);

    auto no_res = cfg;
    no_res.residual = false;
    const auto res_delta = count_parameters(build_network(no_res)).params_total - base_report.params_total;
    out.require(res_delta == 0, "residual toggle changed params by " + std::to_string(res_delta));

    auto plain_cfg = cfg;
    plain_cfg.gaussian_head = false;
    const auto plain = build_network(plain_cfg);
    const auto plain_report = count_parameters(plain);
    out.require(plain.nodes.size() == base.nodes.size(), "node count differs");
    int changed_convs = 0;
    for (std::size_t i = 0; i < std::min(plain.nodes.size(), base.nodes.size()); ++i) {
        const auto& a = base.nodes[i].convs;
        const auto& b = plain.nodes[i].convs;
        out.require(a.size() == b.size(), "conv count differs at " + base.nodes[i].name);
        for (std::size_t j = 0; j < std::min(a.size(), b.size()); ++j) {
            if (a[j] == b[j]) continue;
            ++changed_convs;
            out.require(base.nodes[i].kind == NodeKind::Detect, "non-head conv changed: " + base.nodes[i].name);
        }
    }
    out.require(changed_convs == 3, std::to_string(changed_convs) + " convs changed, expected 3");
    const double delta_mb = base_report.model_size_mb - plain_report.model_size_mb;
    out.require(delta_mb > 0, "Gaussian head does not increase size");
    out.detail << "residual delta 0 params; Gaussian toggle changes " << changed_convs << " head convs, " << std::fixed
               << std::setprecision(2) << plain_report.model_size_mb << " -> " << base_report.model_size_mb
               << " MB (+" << std::setprecision(3) << delta_mb << "; reference 116.82 -> 118.45, +1.63)";
    return out;
}

// ---------------------------------------------------------------- 5

Outcome squeeze_sweep() {
    Outcome out;
    auto cfg = NetworkConfig::defaults();
    cfg.gaussian_head = false;
    const auto rows = sweep_squeeze_ratio(cfg, 1, 7);
    out.require(rows.size() == 7, "expected 7 rows");
    for (std::size_t i = 1; i < rows.size(); ++i) {
        out.require(rows[i].model_size_mb < rows[i - 1].model_size_mb, "size not decreasing at k=" + std::to_string(rows[i].k));
    }
    for (std::size_t i = 2; i < rows.size(); ++i) {
        const double prev_step = rows[i - 2].model_size_mb - rows[i - 1].model_size_mb;
        const double step = rows[i - 1].model_size_mb - rows[i].model_size_mb;
        out.require(step < prev_step, "increment not shrinking at k=" + std::to_string(rows[i].k));
    }
    std::cout << "    k   ours MB   ref MB   dev %    ours BFLOPS  ref BFLOPS\n";
    double max_dev = 0;
    for (const auto& r : rows) {
        const double dev = r.size_deviation().value_or(NAN) * 100;
        max_dev = std::max(max_dev, std::abs(dev));
        std::printf("    %d  %8.2f  %7.2f  %+6.1f   %10.3f  %10.3f\n", r.k, r.model_size_mb,
                    r.reference ? r.reference->model_size_mb : NAN, dev, r.bflops,
                    r.reference ? r.reference->bflops : NAN);
    }
    out.detail << "strictly decreasing with shrinking increments; max |deviation| from reference " << std::fixed
               << std::setprecision(1) << max_dev << "% (stretch goal 20%: " << (max_dev <= 20 ? "met" : "not met")
               << ")";
    return out;
}

// ---------------------------------------------------------------- 6

Outcome head_shape_law() {
    Outcome out;
    int checked = 0;
    for (int input : {160, 320, 416}) {
        for (int classes : {1, 3, 20}) {
            for (bool gaussian : {false, true}) {
                const auto cfg = small_network(input, classes, gaussian);
                const auto g = build_network(cfg);
                auto w = Weights<float>::allocate(g);
                NoGradGuard ng;
                const auto heads = forward(g, w, Tensor<float>({1, 3, sz(input), sz(input)}), false);
                const int b = gaussian ? 8 : 4;
                for (int h = 0; h < kNumHeads; ++h) {
                    const std::size_t s = sz(input / (32 >> h));
                    const Shape want{1, sz(3 * (b + 1 + classes)), s, s};
                    out.require(heads[h].shape() == want, "input " + std::to_string(input) + " classes " +
                                                              std::to_string(classes) + " head " + std::to_string(h));
                    ++checked;
                }
            }
        }
    }
    out.detail << checked << " head tensors match S x S x 3(B+1+NC)";
    return out;
}

// ---------------------------------------------------------------- 7

Outcome nll_point_values() {
    Outcome out;
    const double a = gaussian_nll(0.5, 0.25, 0.5, 1, 0);
    const double b = gaussian_nll(0.5, 0.25, 1.0, 1, 0);
    out.require(std::abs(a - 0.225791) <= 1e-5, "at mean: " + std::to_string(a));
    out.require(std::abs(b - 0.725791) <= 1e-5, "off mean: " + std::to_string(b));
    out.detail << std::fixed << std::setprecision(7) << "nll(0.5,0.25,0.5)=" << a << ", nll(0.5,0.25,1.0)=" << b;
    return out;
}

// ---------------------------------------------------------------- 8

bool ranks_before(const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.box.x1 != b.box.x1) return a.box.x1 < b.box.x1;
    return a.box.y1 < b.box.y1;
}

// The greedy result is the unique subset S of the rank-ordered input in which
// a detection belongs to S exactly when no higher-ranked member of S of its
// class overlaps it above the threshold. Enumerates all 2^n subsets.
std::optional<std::vector<Detection>> nms_oracle(std::vector<Detection> dets, double thresh) {
    std::sort(dets.begin(), dets.end(), ranks_before);
    const std::size_t n = dets.size();
    std::vector<std::vector<Detection>> solutions;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        bool ok = true;
        for (std::size_t i = 0; i < n && ok; ++i) {
            bool blocked = false;
            for (std::size_t j = 0; j < i; ++j) {
                blocked |= (mask >> j & 1u) && dets[j].class_id == dets[i].class_id && iou(dets[j].box, dets[i].box) > thresh;
            }
            ok = ((mask >> i & 1u) != 0) == !blocked;
        }
        if (!ok) continue;
        std::vector<Detection> s;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask >> i & 1u) s.push_back(dets[i]);
        }
        solutions.push_back(std::move(s));
    }
    if (solutions.size() != 1) return std::nullopt;
    return solutions.front();
}

bool same_detection(const Detection& a, const Detection& b) {
    return a.class_id == b.class_id && a.score == b.score && a.box.x1 == b.box.x1 && a.box.y1 == b.box.y1 &&
           a.box.x2 == b.box.x2 && a.box.y2 == b.box.y2;
}

Outcome nms_iou_oracle() {
    Outcome out;
    std::mt19937_64 rng(1008);
    std::uniform_real_distribution<double> pos(0, 50), ext(2, 30), th(0.1, 0.7);
    int instances = 0;
    for (; instances < 1000; ++instances) {
        std::vector<Detection> dets(sz(rand_int(rng, 0, 10)));
        for (auto& d : dets) {
            d.class_id = rand_int(rng, 0, 2);
            d.score = rand_int(rng, 1, 12) / 12.0;
            d.box.x1 = std::round(pos(rng));
            d.box.y1 = std::round(pos(rng));
            d.box.x2 = d.box.x1 + std::round(ext(rng));
            d.box.y2 = d.box.y1 + std::round(ext(rng));
        }
        const double thresh = th(rng);
        const auto got = nms(dets, thresh);
        const auto want = nms_oracle(dets, thresh);
        bool equal = want && got.size() == want->size();
        for (std::size_t i = 0; equal && i < got.size(); ++i) equal = same_detection(got[i], (*want)[i]);
        out.require(equal, "instance " + std::to_string(instances));
    }
    const double v = iou(Box{0, 0, 2, 2}, Box{1, 1, 3, 3});
    out.require(std::abs(v - 1.0 / 7.0) <= 1e-9, "iou = " + std::to_string(v));
    out.detail << instances << " instances equal the exhaustive oracle; iou=" << std::setprecision(12) << v;
    return out;
}

// ---------------------------------------------------------------- 9

Outcome ap_correctness() {
    Outcome out;
    EvalImage img;
    img.gts = {{{0, 0, 10, 10}, 0, true}, {{20, 20, 30, 30}, 0, true}};
    img.detections = {{0, 0.9, {0, 0, 10, 10}, 0}, {0, 0.8, {50, 50, 60, 60}, 0}, {0, 0.7, {20, 20, 30, 30}, 0}};
    const double ap = average_precision(std::vector<EvalImage>{img}, 0, 0.5).ap;
    out.require(std::abs(ap - 5.0 / 6.0) <= 1e-9, "hand case AP = " + std::to_string(ap));

    std::mt19937_64 rng(1009);
    std::uniform_real_distribution<double> pos(0, 80), jitter(-4, 4), score(0.01, 0.99);
    const std::vector<std::function<double(double)>> rescalings{
        [](double s) { return std::exp(3.0 * s) * 0.01 + 0.5; },
        [](double s) { return s * s * s; },
        [](double s) { return 0.2 + 0.5 * s; },
    };
    int cases = 0;
    for (; cases < 100; ++cases) {
        std::vector<EvalImage> images(sz(rand_int(rng, 1, 4)));
        for (auto& im : images) {
            const int n = rand_int(rng, 0, 5);
            for (int i = 0; i < n; ++i) {
                const double x = pos(rng), y = pos(rng);
                im.gts.push_back({{x, y, x + 20, y + 20}, rand_int(rng, 0, 1), rand_int(rng, 0, 4) != 0});
                if (rand_int(rng, 0, 3) != 0) {
                    const double dx = jitter(rng), dy = jitter(rng);
                    im.detections.push_back({rand_int(rng, 0, 1), score(rng), {x + dx, y + dy, x + dx + 20, y + dy + 20}, 0});
                }
            }
            for (int i = rand_int(rng, 0, 4); i > 0; --i) {
                const double x = pos(rng), y = pos(rng);
                im.detections.push_back({rand_int(rng, 0, 1), score(rng), {x, y, x + 15, y + 25}, 0});
            }
        }
        for (const auto& f : rescalings) {
            auto rescaled = images;
            for (auto& im : rescaled) {
                for (auto& d : im.detections) d.score = f(d.score);
            }
            for (int cls = 0; cls < 2; ++cls) {
                out.require(average_precision(images, cls, 0.5).ap == average_precision(rescaled, cls, 0.5).ap,
                            "rescale case " + std::to_string(cases));
            }
        }
    }
    out.detail << "hand case AP=" << std::setprecision(12) << ap << "; " << cases
               << " random cases invariant under 3 monotone rescalings";
    return out;
}

// ---------------------------------------------------------------- 10

std::filesystem::path source_dir() { return FRDET_SOURCE_DIR; }

Outcome desk_scale_learning() {
    Outcome out;
    const auto t0 = Clock::now();
    const auto cfg = load_config(source_dir() / "configs" / "frdet_synthetic.cfg");
    const auto graph = build_network(cfg);
    const auto all = generate_synthetic_dataset(SyntheticSpec{}, 250, 2024);
    const std::vector<Sample> train_set(all.begin(), all.begin() + 200), val_set(all.begin() + 200, all.end());
    const auto data = TrainingSet::from_samples(train_set, cfg);

    TrainConfig tc;
    tc.checkpoint_every = 0;
    auto weights = init_weights(graph, tc.seed);
    TrainOutputs outputs;
    outputs.on_iteration = [](const IterationLog& l) {
        if (l.iteration % 250 == 0) std::cout << "    " << format_log_line(l) << std::endl;
    };
    const auto result = train(graph, weights, data, tc, outputs);

    // The loss of a single batch is noisy; the final value is the mean of
    // the last 50 iterations.
    const double initial = result.log.front().loss.total;
    double final_loss = 0;
    const std::size_t tail = std::min<std::size_t>(50, result.log.size());
    for (std::size_t i = result.log.size() - tail; i < result.log.size(); ++i) final_loss += result.log[i].loss.total;
    final_loss /= static_cast<double>(tail);

    const auto report = evaluate_model(graph, weights, val_set);
    std::istringstream lines(format_report(report));
    for (std::string line; std::getline(lines, line);) std::cout << "    " << line << "\n";
    // Every synthetic object is unoccluded, untruncated and at least 28 px
    // tall, so the moderate bucket holds all of them.
    const double map = report.map_moderate.value_or(0.0);
    const double elapsed = seconds_since(t0);

    out.require(static_cast<int>(result.log.size()) == tc.iterations, "iteration count");
    out.require(final_loss <= 0.3 * initial, "final loss " + std::to_string(final_loss) + " > 30% of " + std::to_string(initial));
    out.require(map >= 0.7, "val AP@0.5 " + std::to_string(map) + " < 0.7");
    out.detail << std::fixed << std::setprecision(3) << tc.iterations << " iterations, loss " << initial << " -> "
               << final_loss << " (ratio " << final_loss / initial << ", gate <= 0.3), val mAP@0.5 " << map
               << " (gate >= 0.7), " << std::setprecision(0) << elapsed << " s";
    return out;
}

// ---------------------------------------------------------------- 11

Outcome round_trips() {
    Outcome out;
    std::mt19937_64 rng(1011);

    // FRDW: random weights survive save -> load -> save byte for byte.
    auto cfg = small_network(160, 2, true);
    cfg.class_names = SyntheticSpec{}.class_names;
    const auto graph = build_network(cfg);
    auto w = init_weights(graph, 11);
    for (auto& node : w.layers) {
        for (auto& l : node) {
            if (!l.bn) continue;
            for (auto& v : l.bn->running_mean.values()) v = static_cast<float>(random_tensor({1}, rng)[0]);
            for (auto& v : l.bn->running_var.values()) v = static_cast<float>(random_tensor({1}, rng, 0.5, 2.0)[0]);
        }
    }
    std::stringstream first;
    save_weights(first, graph, w);
    std::istringstream in(first.str());
    auto loaded = load_weights(in, graph);
    std::stringstream second;
    save_weights(second, graph, loaded);
    out.require(first.str() == second.str(), "FRDW bytes differ after reload");

    // KITTI labels: parse -> format is text-exact.
    std::string text =
        "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59\n"
        "DontCare -1.00 -1 -10.00 503.89 169.71 590.61 190.13 -1.00 -1.00 -1.00 -1000.00 -1000.00 -1000.00 -10.00\n";
    const std::vector<std::string> classes{"Car", "Pedestrian", "Cyclist"};
    for (int i = 0; i < 200; ++i) {
        KittiLabel l;
        l.class_name = classes[sz(i % 3)];
        l.truncated = rand_int(rng, 0, 100) / 100.0;
        l.occluded = rand_int(rng, 0, 3);
        l.alpha = rand_int(rng, -314, 314) / 100.0;
        l.left = rand_int(rng, 0, 50000) / 100.0;
        l.top = rand_int(rng, 0, 30000) / 100.0;
        l.right = l.left + rand_int(rng, 1, 20000) / 100.0;
        l.bottom = l.top + rand_int(rng, 1, 10000) / 100.0;
        l.dimensions = {rand_int(rng, 100, 300) / 100.0, rand_int(rng, 50, 200) / 100.0, rand_int(rng, 100, 500) / 100.0};
        l.location = {rand_int(rng, -2000, 2000) / 100.0, rand_int(rng, 0, 300) / 100.0, rand_int(rng, 100, 8000) / 100.0};
        l.rotation_y = rand_int(rng, -314, 314) / 100.0;
        text += format_kitti_label(l) + "\n";
    }
    const auto labels = parse_kitti_labels(text);
    std::ostringstream formatted;
    write_kitti_labels(formatted, labels);
    out.require(formatted.str() == text, "KITTI text differs after round trip");

    // Checkpoints written by the trainer reproduce the heads bit for bit.
    const auto dir = std::filesystem::temp_directory_path() / "frdet_acceptance_ckpt";
    std::filesystem::remove_all(dir);
    const auto samples = generate_synthetic_dataset(SyntheticSpec{}, 8, 5);
    auto trained = init_weights(graph, 3);
    TrainConfig tc;
    tc.iterations = 6;
    tc.batch_size = 4;
    tc.checkpoint_every = 3;
    TrainOutputs outputs;
    outputs.directory = dir;
    train(graph, trained, TrainingSet::from_samples(samples, cfg), tc, outputs);
    auto reloaded = load_weights(dir / "final.frdw", graph);
    std::vector<const Image*> images;
    for (const auto& s : samples) images.push_back(&s.image);
    const auto x = images_to_tensor(images, cfg.input_size);
    bool identical = true;
    {
        NoGradGuard ng;
        const auto a = forward(graph, trained, x, false);
        const auto b = forward(graph, reloaded, x, false);
        for (int h = 0; h < kNumHeads; ++h) {
            identical &= std::equal(a[h].values().begin(), a[h].values().end(), b[h].values().begin(),
                                    b[h].values().end(), [](float p, float q) {
                                        return std::memcmp(&p, &q, sizeof p) == 0;
                                    });
        }
    }
    out.require(identical, "checkpoint heads differ");
    out.require(std::filesystem::exists(dir / "checkpoint_3.frdw"), "checkpoint_3.frdw missing");
    std::filesystem::remove_all(dir);

    out.detail << "FRDW " << first.str().size() << " bytes identical; " << labels.size()
               << " KITTI lines text-exact; checkpoint heads bit-identical";
    return out;
}

struct Criterion {
    int id;
    const char* name;
    Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
    frdet::set_num_threads(1);
    const std::vector<Criterion> criteria{
        {1, "gradient fidelity", gradient_fidelity},
        {2, "parameter-count oracle", parameter_count_oracle},
        {3, "fire-residual compression", compression_arithmetic},
        {4, "ablation structure", ablation_structure},
        {5, "squeeze-ratio sweep trend", squeeze_sweep},
        {6, "head-shape law", head_shape_law},
        {7, "Gaussian NLL point values", nll_point_values},
        {8, "NMS/IoU oracle", nms_iou_oracle},
        {9, "AP correctness", ap_correctness},
        {10, "desk-scale learning", desk_scale_learning},
        {11, "round-trips", round_trips},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) {
        try {
            selected.insert(std::stoi(argv[i]));
        } catch (const std::exception&) {
            std::cerr << "usage: frdet_acceptance [criterion ...]\n";
            return 2;
        }
    }
    int failures = 0;
    for (const auto& c : criteria) {
        if (!selected.empty() && !selected.count(c.id)) continue;
        std::cout << "criterion " << c.id << " (" << c.name << ") running" << std::endl;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "exception: " << e.what();
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " " << c.id << " " << c.name << ": " << o.detail.str() << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
