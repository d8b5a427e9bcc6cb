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
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "frdet/network.hpp"

namespace frdet {

struct NodeCost {
    int node_id = 0;
    std::string name;
    NodeKind kind = NodeKind::Conv;
    int out_size = 0;               // spatial side of the node output
    std::int64_t params_conv = 0;   // conv weights + biases
    std::int64_t params_total = 0;  // plus batch-norm scale/shift/mean/var
    std::int64_t macs = 0;          // conv multiply-accumulates
    std::int64_t elementwise_ops = 0;  // BN, activation, upsample, residual add: one per output element
};

struct AnalysisReport {
    int input_size = 0;
    std::vector<NodeCost> nodes;
    std::int64_t params_conv = 0;
    std::int64_t params_total = 0;
    std::int64_t macs = 0;
    std::int64_t elementwise_ops = 0;
    double model_size_mb = 0;       // params_total * 4 bytes / 2^20
    double model_size_conv_mb = 0;  // params_conv * 4 bytes / 2^20
    double bflops = 0;              // 2 * macs / 1e9
    double bflops_with_elementwise = 0;

    void recompute_totals();
};

/// Analytic parameter counts per node (MAC fields left at zero).
AnalysisReport count_parameters(const LayerGraph& graph);

/// Parameter counts plus MACs/FLOPs at `input_size` (defaults to the graph's).
AnalysisReport estimate_flops(const LayerGraph& graph, std::optional<int> input_size = std::nullopt);

/// Totals per name prefix ("stem", "stage0" .. "stage4", "head0", "lateral0", ...).
std::vector<NodeCost> group_by_prefix(const AnalysisReport& report);

struct ReferenceRow {
    int k;
    double map_percent;
    double model_size_mb;
    double bflops;
};

/// Published squeeze-ratio sweep (416 input, plain heads, KITTI classes).
const std::vector<ReferenceRow>& reference_squeeze_table();

struct SweepRow {
    int k = 0;
    double model_size_mb = 0;
    double model_size_conv_mb = 0;
    double bflops = 0;
    std::int64_t params_conv = 0;
    std::int64_t params_total = 0;
    std::optional<ReferenceRow> reference;

    // (ours - ref) / ref, when a reference row exists.
    std::optional<double> size_deviation() const;
    std::optional<double> bflops_deviation() const;
};

/// Rebuilds the network for each k in [k_min, k_max] and measures it.
/// Throws ConfigError naming k and the offending stage when 2^k does not
/// divide a stage width.
std::vector<SweepRow> sweep_squeeze_ratio(const NetworkConfig& config, int k_min, int k_max);

/// CSV with header `k,model_size_mb,bflops,params_conv,params_total`.
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);
/// Markdown table with the published values in clearly labelled reference columns.
void write_sweep_markdown(std::ostream& out, const std::vector<SweepRow>& rows, const NetworkConfig& config);

}  // namespace frdet
