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

#include <algorithm>
#include <bit>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "frdet/network.hpp"

namespace frdet {

namespace {

constexpr std::array<std::pair<double, double>, 9> kYoloV3Anchors{{
    {10, 13}, {16, 30}, {33, 23}, {30, 61}, {62, 45}, {59, 119}, {116, 90}, {156, 198}, {373, 326}}};

std::vector<StageSpec> darknet53_stages() {
    return {{64, 1}, {128, 2}, {256, 8}, {512, 8}, {1024, 4}};
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    std::istringstream is{std::string(s)};
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

int parse_int(const std::string& text, const std::string& key, int line) {
    int value = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw ParseError("value of '" + key + "' is not an integer: '" + text + "'", line);
    }
    return value;
}

double parse_double(const std::string& text, int line) {
    double value = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) throw ParseError("not a number: '" + text + "'", line);
    return value;
}

bool parse_flag(const std::string& text, const std::string& key, int line) {
    const int v = parse_int(text, key, line);
    if (v != 0 && v != 1) throw ParseError("'" + key + "' must be 0 or 1", line);
    return v == 1;
}

}  // namespace

std::vector<Anchor> default_anchors(int input_size) {
    std::vector<Anchor> anchors;
    const double s = input_size / 416.0;
    for (std::size_t i = 0; i < kYoloV3Anchors.size(); ++i) {
        anchors.push_back({kYoloV3Anchors[i].first * s, kYoloV3Anchors[i].second * s,
                           static_cast<int>(i) / kAnchorsPerScale});
    }
    return anchors;
}

NetworkConfig NetworkConfig::defaults() {
    NetworkConfig c;
    c.class_names = {"Car", "Cyclist", "Pedestrian"};
    c.stages = darknet53_stages();
    c.anchors = default_anchors(c.input_size);
    return c;
}

std::vector<Anchor> NetworkConfig::head_anchors(int head) const {
    const int group = kNumHeads - 1 - head;
    return {anchors.begin() + group * kAnchorsPerScale, anchors.begin() + (group + 1) * kAnchorsPerScale};
}

int NetworkConfig::stage_squeeze_exponent(int stage) const {
    const int c = stages.at(stage).channels;
    if (c > 0 && (squeeze_exponent >= 31 || (1 << squeeze_exponent) > c)) return std::countr_zero(static_cast<unsigned>(c));
    return squeeze_exponent;
}

void NetworkConfig::validate() const {
    if (input_size <= 0 || input_size % 32 != 0) {
        throw ConfigError("input size must be a positive multiple of 32, got " + std::to_string(input_size));
    }
    if (num_classes < 1) throw ConfigError("classes must be >= 1");
    if (!class_names.empty() && static_cast<int>(class_names.size()) != num_classes) {
        throw ConfigError("names lists " + std::to_string(class_names.size()) + " classes, classes=" +
                          std::to_string(num_classes));
    }
    if (squeeze_exponent < 1) throw ConfigError("k must be >= 1");
    if (stem_channels < 1) throw ConfigError("stem channels must be >= 1");
    if (neck_depth < 1) throw ConfigError("neck depth must be >= 1");
    if (static_cast<int>(stages.size()) != kNumStages) {
        throw ConfigError("exactly 5 [stage] blocks are required, got " + std::to_string(stages.size()));
    }
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const auto& st = stages[i];
        if (st.channels < 4 || st.channels % 4 != 0) {
            throw ConfigError("stage " + std::to_string(i) + ": channels must be a positive multiple of 4, got " +
                              std::to_string(st.channels));
        }
        if (st.fr_count < 0) throw ConfigError("stage " + std::to_string(i) + ": fr count must be >= 0");
        const int k = stage_squeeze_exponent(static_cast<int>(i));
        if (block == BlockKind::Fire && st.fr_count > 0 && st.channels % (1 << k) != 0) {
            throw ConfigError("stage " + std::to_string(i) + ": channels=" + std::to_string(st.channels) +
                              " not divisible by 2^k=" + std::to_string(1 << k));
        }
    }
    if (static_cast<int>(anchors.size()) != kNumHeads * kAnchorsPerScale) {
        throw ConfigError("exactly 9 anchors are required, got " + std::to_string(anchors.size()));
    }
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        if (anchors[i].width <= 0 || anchors[i].height <= 0) {
            throw ConfigError("anchor " + std::to_string(i) + " has non-positive size");
        }
        if (i > 0 && anchors[i].area() < anchors[i - 1].area()) {
            throw ConfigError("anchors must be sorted by ascending area (anchor " + std::to_string(i) + ")");
        }
    }
}

NetworkConfig parse_config(std::string_view text) {
    NetworkConfig config;
    config.stages.clear();
    config.class_names.clear();
    std::string section;
    std::map<std::string, int> seen_net_keys;
    bool saw_anchors = false;
    std::vector<Anchor> anchors;
    int names_line = 0;

    std::istringstream in{std::string(text)};
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw.substr(0, raw.find('#'));
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            const auto close = line.find(']');
            if (close == std::string::npos) throw ParseError("unterminated section header", line_no);
            section = trim(std::string_view(line).substr(1, close - 1));
            line = trim(std::string_view(line).substr(close + 1));
            if (section == "stage") {
                config.stages.push_back({});
            } else if (section == "anchors") {
                if (saw_anchors) throw ParseError("duplicate [anchors] block", line_no);
                saw_anchors = true;
            } else if (section == "net") {
                if (seen_net_keys.count("[net]")) throw ParseError("duplicate [net] block", line_no);
                seen_net_keys["[net]"] = line_no;
            } else {
                throw ParseError("unknown section [" + section + "]", line_no);
            }
            if (line.empty()) continue;
        }
        if (section.empty()) throw ParseError("content before the first section", line_no);

        for (const auto& tok : split_ws(line)) {
            if (section == "anchors") {
                const auto comma = tok.find(',');
                if (comma == std::string::npos) throw ParseError("anchor must be 'w,h', got '" + tok + "'", line_no);
                Anchor a;
                a.width = parse_double(tok.substr(0, comma), line_no);
                a.height = parse_double(tok.substr(comma + 1), line_no);
                if (a.width <= 0 || a.height <= 0) throw ParseError("anchor sizes must be positive", line_no);
                a.scale_index = static_cast<int>(anchors.size()) / kAnchorsPerScale;
                anchors.push_back(a);
                continue;
            }
            const auto eq = tok.find('=');
            if (eq == std::string::npos || eq == 0) throw ParseError("expected key=value, got '" + tok + "'", line_no);
            const std::string key = tok.substr(0, eq);
            const std::string value = tok.substr(eq + 1);
            if (section == "net") {
                if (!seen_net_keys.emplace(key, line_no).second) throw ParseError("duplicate key '" + key + "'", line_no);
                if (key == "input") {
                    config.input_size = parse_int(value, key, line_no);
                    if (config.input_size <= 0 || config.input_size % 32 != 0) {
                        throw ParseError("input=" + value + " is not a positive multiple of 32", line_no);
                    }
                } else if (key == "classes") {
                    config.num_classes = parse_int(value, key, line_no);
                    if (config.num_classes < 1) throw ParseError("classes must be >= 1", line_no);
                } else if (key == "k") {
                    config.squeeze_exponent = parse_int(value, key, line_no);
                    if (config.squeeze_exponent < 1) throw ParseError("k must be >= 1", line_no);
                } else if (key == "gaussian") {
                    config.gaussian_head = parse_flag(value, key, line_no);
                } else if (key == "stem") {
                    config.stem_channels = parse_int(value, key, line_no);
                } else if (key == "neck") {
                    config.neck_depth = parse_int(value, key, line_no);
                } else if (key == "residual") {
                    config.residual = parse_flag(value, key, line_no);
                } else if (key == "block") {
                    if (value == "fire") {
                        config.block = BlockKind::Fire;
                    } else if (value == "darknet") {
                        config.block = BlockKind::Darknet;
                    } else {
                        throw ParseError("block must be 'fire' or 'darknet', got '" + value + "'", line_no);
                    }
                } else if (key == "names") {
                    std::string name;
                    std::istringstream ns(value);
                    while (std::getline(ns, name, ',')) {
                        if (name.empty()) throw ParseError("empty class name", line_no);
                        config.class_names.push_back(name);
                    }
                    names_line = line_no;
                } else {
                    throw ParseError("unknown key '" + key + "' in [net]", line_no);
                }
            } else {  // stage
                auto& st = config.stages.back();
                if (key == "channels") {
                    st.channels = parse_int(value, key, line_no);
                } else if (key == "fr") {
                    st.fr_count = parse_int(value, key, line_no);
                } else {
                    throw ParseError("unknown key '" + key + "' in [stage]", line_no);
                }
            }
        }
    }

    if (config.stages.empty()) config.stages = darknet53_stages();
    if (static_cast<int>(config.stages.size()) != kNumStages) {
        throw ParseError("expected 5 [stage] blocks, found " + std::to_string(config.stages.size()));
    }
    if (saw_anchors) {
        if (anchors.size() != 9) throw ParseError("[anchors] needs 9 pairs, found " + std::to_string(anchors.size()));
        config.anchors = std::move(anchors);
    } else {
        config.anchors = default_anchors(config.input_size);
    }
    if (config.class_names.empty()) {
        for (int i = 0; i < config.num_classes; ++i) config.class_names.push_back("class" + std::to_string(i));
    } else if (static_cast<int>(config.class_names.size()) != config.num_classes) {
        throw ParseError("names lists " + std::to_string(config.class_names.size()) + " classes but classes=" +
                             std::to_string(config.num_classes),
                         names_line);
    }
    try {
        config.validate();
    } catch (const ConfigError& e) {
        throw ParseError(e.what());
    }
    return config;
}

NetworkConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::string format_config(const NetworkConfig& c) {
    std::ostringstream os;
    os << "[net]\ninput=" << c.input_size << " classes=" << c.num_classes << " k=" << c.squeeze_exponent
       << " gaussian=" << (c.gaussian_head ? 1 : 0) << "\nstem=" << c.stem_channels << " neck=" << c.neck_depth
       << " residual=" << (c.residual ? 1 : 0) << " block=" << (c.block == BlockKind::Fire ? "fire" : "darknet")
       << "\nnames=";
    for (std::size_t i = 0; i < c.class_names.size(); ++i) os << (i ? "," : "") << c.class_names[i];
    os << "\n";
    for (const auto& st : c.stages) os << "\n[stage]\nchannels=" << st.channels << " fr=" << st.fr_count << "\n";
    os << "\n[anchors]\n";
    os.precision(17);
    for (std::size_t i = 0; i < c.anchors.size(); ++i) {
        os << c.anchors[i].width << "," << c.anchors[i].height << ((i % 3 == 2) ? "\n" : " ");
    }
    return os.str();
}

}  // namespace frdet
