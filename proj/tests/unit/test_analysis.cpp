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

#include <gtest/gtest.h>

#include <sstream>

#include "frdet/analysis.hpp"

namespace frdet {
namespace {

LayerGraph single_node_graph(std::vector<ConvSpec> convs, int input, int stride, NodeKind kind = NodeKind::Conv) {
    LayerGraph g;
    g.config.input_size = input;
    LayerNode n;
    n.kind = kind;
    n.name = "probe.conv";
    n.stride = stride;
    n.in_channels = convs.front().in_channels;
    n.out_channels = convs.back().out_channels;
    n.convs = std::move(convs);
    g.nodes.push_back(n);
    return g;
}

TEST(CountParameters, SingleConv) {
    const auto r = count_parameters(single_node_graph({{64, 128, 3, 1, false}}, 416, 1));
    EXPECT_EQ(r.params_conv, 73856);
    EXPECT_EQ(r.params_total, 73856);
}

TEST(CountParameters, SingleFireResidualModule) {
    const auto m = build_fr_module(FRConfig::make(128, 4));
    const auto convs = m.convs();
    const auto r = count_parameters(single_node_graph({convs.begin(), convs.end()}, 416, 1, NodeKind::FireResidual));
    EXPECT_EQ(r.params_conv, 6280);
}

TEST(CountParameters, BatchNormAddsFourPerChannel) {
    const auto r = count_parameters(single_node_graph({{3, 32, 3, 1, true}}, 416, 1));
    EXPECT_EQ(r.params_conv, 896);
    EXPECT_EQ(r.params_total, 896 + 4 * 32);
    EXPECT_DOUBLE_EQ(r.model_size_mb, (896 + 128) * 4.0 / (1024.0 * 1024.0));
}

TEST(CountParameters, GaussianToggleAddsTwelveChannelsPerHead) {
    auto cfg = NetworkConfig::defaults();
    const auto gauss = build_network(cfg);
    cfg.gaussian_head = false;
    const auto plain = build_network(cfg);
    std::int64_t expected = 0;
    for (int h = 0; h < kNumHeads; ++h) {
        const auto& n = gauss.nodes[gauss.heads[h]];
        expected += std::int64_t{n.in_channels} * 12 + 12;
    }
    EXPECT_EQ(count_parameters(gauss).params_total - count_parameters(plain).params_total, expected);
}

TEST(EstimateFlops, OneMacIsTwoFlops) {
    const auto r = estimate_flops(single_node_graph({{1, 1, 1, 1, false}}, 32, 32));
    EXPECT_EQ(r.macs, 1);
    EXPECT_DOUBLE_EQ(r.bflops, 2e-9);
}

TEST(EstimateFlops, ThreeByThreeConvOn208) {
    const auto r = estimate_flops(single_node_graph({{64, 128, 3, 1, false}}, 416, 2));
    EXPECT_EQ(r.macs, std::int64_t{9} * 64 * 128 * 208 * 208);
    EXPECT_DOUBLE_EQ(r.bflops, 2.0 * 9 * 64 * 128 * 208 * 208 / 1e9);
}

TEST(EstimateFlops, HalvingInputQuartersConvFlops) {
    const auto g = build_network(NetworkConfig::defaults());
    const auto big = estimate_flops(g, 640);
    const auto small = estimate_flops(g, 320);
    EXPECT_EQ(big.macs, 4 * small.macs);
    EXPECT_EQ(big.params_total, small.params_total);
    EXPECT_THROW(estimate_flops(g, 100), ConfigError);
}

TEST(EstimateFlops, ElementwiseColumnIsAdditive) {
    const auto r = estimate_flops(build_network(NetworkConfig::defaults()));
    EXPECT_GT(r.elementwise_ops, 0);
    EXPECT_NEAR(r.bflops_with_elementwise - r.bflops, static_cast<double>(r.elementwise_ops) / 1e9, 1e-9);
}

TEST(GroupByPrefix, TotalsArePreserved) {
    const auto r = estimate_flops(build_network(NetworkConfig::defaults()));
    const auto groups = group_by_prefix(r);
    std::int64_t params = 0, macs = 0;
    for (const auto& g : groups) {
        params += g.params_total;
        macs += g.macs;
    }
    EXPECT_EQ(params, r.params_total);
    EXPECT_EQ(macs, r.macs);
    EXPECT_EQ(groups.front().name, "stem");
}

TEST(SweepSqueezeRatio, SizeDecreasesWithShrinkingSteps) {
    const auto rows = sweep_squeeze_ratio(NetworkConfig::defaults(), 1, 7);
    ASSERT_EQ(rows.size(), 7u);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_LT(rows[i].model_size_mb, rows[i - 1].model_size_mb) << "k=" << rows[i].k;
        EXPECT_LT(rows[i].bflops, rows[i - 1].bflops) << "k=" << rows[i].k;
    }
    for (std::size_t i = 2; i < rows.size(); ++i) {
        EXPECT_LT(rows[i - 1].model_size_mb - rows[i].model_size_mb,
                  rows[i - 2].model_size_mb - rows[i - 1].model_size_mb)
            << "k=" << rows[i].k;
    }
    for (const auto& r : rows) {
        ASSERT_TRUE(r.reference.has_value());
        EXPECT_EQ(r.reference->k, r.k);
        EXPECT_TRUE(r.size_deviation().has_value());
    }
}

TEST(SweepSqueezeRatio, ReferenceTableHoldsPublishedSizes) {
    const auto& t = reference_squeeze_table();
    ASSERT_EQ(t.size(), 7u);
    EXPECT_DOUBLE_EQ(t.front().model_size_mb, 187.12);
    EXPECT_DOUBLE_EQ(t[3].model_size_mb, 116.82);
    EXPECT_DOUBLE_EQ(t.back().model_size_mb, 108.04);
    EXPECT_DOUBLE_EQ(t.front().bflops, 48.52);
    EXPECT_DOUBLE_EQ(t.back().bflops, 25.494);
}

TEST(SweepSqueezeRatio, IndivisibleStageNamesK) {
    auto cfg = NetworkConfig::defaults();
    cfg.stages[0].channels = 96;
    try {
        sweep_squeeze_ratio(cfg, 1, 7);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("k=6"), std::string::npos) << msg;
        EXPECT_NE(msg.find("stage 0"), std::string::npos) << msg;
    }
    EXPECT_THROW(sweep_squeeze_ratio(NetworkConfig::defaults(), 3, 2), ConfigError);
}

TEST(SweepSqueezeRatio, CsvFormat) {
    const auto rows = sweep_squeeze_ratio(NetworkConfig::defaults(), 4, 4);
    std::ostringstream out;
    write_sweep_csv(out, rows);
    const auto text = out.str();
    EXPECT_EQ(text.rfind("k,model_size_mb,bflops,params_conv,params_total\n4,", 0), 0u) << text;
    std::ostringstream md;
    write_sweep_markdown(md, rows, NetworkConfig::defaults());
    EXPECT_NE(md.str().find("116.82"), std::string::npos);
}

}  // namespace
}  // namespace frdet
