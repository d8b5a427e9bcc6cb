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

#include "frdet/analysis.hpp"

#include <cstdio>
#include <map>
#include <ostream>

namespace frdet {

namespace {

constexpr double kBytesPerParam = 4.0;
constexpr double kMiB = 1024.0 * 1024.0;

std::int64_t conv_macs(const ConvSpec& c, std::int64_t out_side) {
    return std::int64_t{c.kernel} * c.kernel * c.in_channels * c.out_channels * out_side * out_side;
}

// BN and activation each touch every output element once.
std::int64_t conv_elementwise(const ConvSpec& c, std::int64_t out_side) {
    return c.batch_norm ? 2 * std::int64_t{c.out_channels} * out_side * out_side : 0;
}

std::string prefix_of(const std::string& name) { return name.substr(0, name.find('.')); }

}  // namespace

void AnalysisReport::recompute_totals() {
    params_conv = params_total = macs = elementwise_ops = 0;
    for (const auto& n : nodes) {
        params_conv += n.params_conv;
        params_total += n.params_total;
        macs += n.macs;
        elementwise_ops += n.elementwise_ops;
    }
    model_size_mb = static_cast<double>(params_total) * kBytesPerParam / kMiB;
    model_size_conv_mb = static_cast<double>(params_conv) * kBytesPerParam / kMiB;
    bflops = 2.0 * static_cast<double>(macs) / 1e9;
    bflops_with_elementwise = (2.0 * static_cast<double>(macs) + static_cast<double>(elementwise_ops)) / 1e9;
}

AnalysisReport count_parameters(const LayerGraph& graph) {
    AnalysisReport r;
    r.input_size = graph.config.input_size;
    for (const auto& n : graph.nodes) {
        NodeCost c;
        c.node_id = n.id;
        c.name = n.name;
        c.kind = n.kind;
        c.out_size = graph.config.input_size / n.stride;
        for (const auto& conv : n.convs) {
            c.params_conv += conv.conv_params();
            c.params_total += conv.total_params();
        }
        r.nodes.push_back(std::move(c));
    }
    r.recompute_totals();
    return r;
}

AnalysisReport estimate_flops(const LayerGraph& graph, std::optional<int> input_size) {
    const int size = input_size.value_or(graph.config.input_size);
    if (size <= 0 || size % 32 != 0) {
        throw ConfigError("estimate_flops: input size must be a positive multiple of 32, got " + std::to_string(size));
    }
    AnalysisReport r = count_parameters(graph);
    r.input_size = size;
    for (auto& c : r.nodes) {
        const auto& n = graph.nodes[c.node_id];
        const std::int64_t side = size / n.stride;
        const std::int64_t elements = std::int64_t{n.out_channels} * side * side;
        c.out_size = static_cast<int>(side);
        for (const auto& conv : n.convs) {
            c.macs += conv_macs(conv, side);
            c.elementwise_ops += conv_elementwise(conv, side);
        }
        if ((n.kind == NodeKind::FireResidual || n.kind == NodeKind::DarknetResidual) && n.residual) {
            c.elementwise_ops += elements;
        }
        if (n.kind == NodeKind::Upsample) c.elementwise_ops += elements;
    }
    r.recompute_totals();
    return r;
}

std::vector<NodeCost> group_by_prefix(const AnalysisReport& report) {
    std::vector<NodeCost> groups;
    std::map<std::string, std::size_t> index;
    for (const auto& n : report.nodes) {
        const auto key = prefix_of(n.name);
        auto [it, inserted] = index.emplace(key, groups.size());
        if (inserted) {
            NodeCost g;
            g.node_id = n.node_id;
            g.name = key;
            g.kind = n.kind;
            g.out_size = n.out_size;
            groups.push_back(g);
        }
        auto& g = groups[it->second];
        g.params_conv += n.params_conv;
        g.params_total += n.params_total;
        g.macs += n.macs;
        g.elementwise_ops += n.elementwise_ops;
        g.out_size = n.out_size;
    }
    return groups;
}

const std::vector<ReferenceRow>& reference_squeeze_table() {
    static const std::vector<ReferenceRow> rows{
        {1, 89.96, 187.12, 48.52}, {2, 89.69, 146.95, 36.825}, {3, 90.22, 126.87, 30.977},
        {4, 90.25, 116.82, 28.053}, {5, 88.81, 111.8, 26.591},  {6, 89.87, 109.29, 25.86},
        {7, 89.42, 108.04, 25.494},
    };
    return rows;
}

std::optional<double> SweepRow::size_deviation() const {
    if (!reference) return std::nullopt;
    return (model_size_mb - reference->model_size_mb) / reference->model_size_mb;
}

std::optional<double> SweepRow::bflops_deviation() const {
    if (!reference) return std::nullopt;
    return (bflops - reference->bflops) / reference->bflops;
}

std::vector<SweepRow> sweep_squeeze_ratio(const NetworkConfig& config, int k_min, int k_max) {
    if (k_min < 1 || k_max < k_min) {
        throw ConfigError("sweep: need 1 <= k_min <= k_max, got " + std::to_string(k_min) + ".." + std::to_string(k_max));
    }
    std::vector<SweepRow> rows;
    for (int k = k_min; k <= k_max; ++k) {
        NetworkConfig c = config;
        c.squeeze_exponent = k;
        LayerGraph graph;
        try {
            graph = build_network(c);
        } catch (const ConfigError& e) {
            throw ConfigError("sweep k=" + std::to_string(k) + ": " + e.what());
        }
        const auto report = estimate_flops(graph);
        SweepRow row;
        row.k = k;
        row.model_size_mb = report.model_size_mb;
        row.model_size_conv_mb = report.model_size_conv_mb;
        row.bflops = report.bflops;
        row.params_conv = report.params_conv;
        row.params_total = report.params_total;
        for (const auto& ref : reference_squeeze_table()) {
            if (ref.k == k) row.reference = ref;
        }
        rows.push_back(row);
    }
    return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << "k,model_size_mb,bflops,params_conv,params_total\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.4f,%.4f,%lld,%lld\n", r.k, r.model_size_mb, r.bflops,
                      static_cast<long long>(r.params_conv), static_cast<long long>(r.params_total));
        out << buf;
    }
}

void write_sweep_markdown(std::ostream& out, const std::vector<SweepRow>& rows, const NetworkConfig& config) {
    out << "# Squeeze-ratio sweep\n\n"
        << "Input " << config.input_size << ", " << config.num_classes << " classes, "
        << (config.gaussian_head ? "Gaussian" : "plain") << " heads, neck depth " << config.neck_depth
        << ". Model size counts conv weights, biases and batch-norm scale/shift/mean/var at 4 bytes each; "
        << "BFLOPS counts 2 FLOPs per conv multiply-accumulate.\n\n"
        << "Reference columns are the published values (416 input, plain heads); deviation = (ours - reference) / "
           "reference.\n\n"
        << "| k | model size [MB] | conv-only [MB] | BFLOPS | reference size [MB] | size deviation | reference BFLOPS | "
           "BFLOPS deviation |\n"
        << "|---|---|---|---|---|---|---|---|\n";
    char buf[320];
    for (const auto& r : rows) {
        std::string ref_size = "-", dev_size = "-", ref_flops = "-", dev_flops = "-";
        if (r.reference) {
            char tmp[32];
            std::snprintf(tmp, sizeof(tmp), "%.2f", r.reference->model_size_mb);
            ref_size = tmp;
            std::snprintf(tmp, sizeof(tmp), "%+.1f%%", 100.0 * *r.size_deviation());
            dev_size = tmp;
            std::snprintf(tmp, sizeof(tmp), "%.3f", r.reference->bflops);
            ref_flops = tmp;
            std::snprintf(tmp, sizeof(tmp), "%+.1f%%", 100.0 * *r.bflops_deviation());
            dev_flops = tmp;
        }
        std::snprintf(buf, sizeof(buf), "| %d | %.2f | %.2f | %.3f | %s | %s | %s | %s |\n", r.k, r.model_size_mb,
                      r.model_size_conv_mb, r.bflops, ref_size.c_str(), dev_size.c_str(), ref_flops.c_str(),
                      dev_flops.c_str());
        out << buf;
    }
}

}  // namespace frdet
