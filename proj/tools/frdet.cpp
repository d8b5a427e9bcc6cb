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

// frdet: analyze, sweep, synth, train, infer and eval from the command line.
//
// Exit codes: 0 success, 1 usage error (bad flags, unreadable config, missing
// input directories), 2 runtime error.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "CLI11.hpp"
#include "frdet/analysis.hpp"
#include "frdet/data.hpp"
#include "frdet/eval.hpp"
#include "frdet/network.hpp"
#include "frdet/postprocess.hpp"
#include "frdet/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kJsonSchema = 1;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Box colours for --annotate, indexed by class id modulo the palette size.
constexpr std::array<std::array<std::uint8_t, 3>, 8> kPalette{{
    {230, 25, 75},   // red
    {60, 180, 75},   // green
    {0, 130, 200},   // blue
    {255, 225, 25},  // yellow
    {245, 130, 48},  // orange
    {145, 30, 180},  // purple
    {70, 240, 240},  // cyan
    {240, 50, 230},  // magenta
}};

frdet::NetworkConfig read_config(const std::string& path) {
    if (path.empty()) return frdet::NetworkConfig::defaults();
    try {
        return frdet::load_config(path);
    } catch (const frdet::Error& e) {
        throw UsageError(e.what());
    }
}

void require_dir(const fs::path& dir, const std::string& what) {
    if (!fs::is_directory(dir)) throw UsageError(what + " directory not found: " + dir.string());
}

ordered_json node_json(const frdet::NodeCost& n) {
    return {{"name", n.name},
            {"kind", std::string(frdet::to_string(n.kind))},
            {"out_size", n.out_size},
            {"params_conv", n.params_conv},
            {"params_total", n.params_total},
            {"macs", n.macs}};
}

ordered_json report_json(const frdet::EvalReport& report) {
    ordered_json cells = ordered_json::array();
    for (const auto& c : report.cells) {
        cells.push_back({{"class", c.class_name},
                         {"bucket", c.bucket},
                         {"iou", c.iou_thresh},
                         {"included", c.included},
                         {"ap", c.result.ap},
                         {"num_gt", c.result.num_gt},
                         {"true_positives", c.result.true_positives},
                         {"false_positives", c.result.false_positives}});
    }
    auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
    return {{"schema", kJsonSchema},
            {"images", report.images},
            {"cells", cells},
            {"map_all", opt(report.map_all)},
            {"map_moderate", opt(report.map_moderate)}};
}

// ------------------------------------------------------------------ analyze

struct AnalyzeArgs {
    std::string config;
    int input_size = 0;
    bool json = false;
    bool per_node = false;
};

int run_analyze(const AnalyzeArgs& a) {
    const auto cfg = read_config(a.config);
    const auto graph = frdet::build_network(cfg);
    const auto report = frdet::estimate_flops(graph, a.input_size > 0 ? std::optional<int>(a.input_size) : std::nullopt);
    const auto groups = frdet::group_by_prefix(report);
    if (a.json) {
        ordered_json j{{"schema", kJsonSchema},
                       {"input_size", report.input_size},
                       {"squeeze_exponent", cfg.squeeze_exponent},
                       {"gaussian_head", cfg.gaussian_head},
                       {"params_conv", report.params_conv},
                       {"params_total", report.params_total},
                       {"model_size_mb", report.model_size_mb},
                       {"model_size_conv_mb", report.model_size_conv_mb},
                       {"macs", report.macs},
                       {"bflops", report.bflops},
                       {"bflops_with_elementwise", report.bflops_with_elementwise}};
        ordered_json g = ordered_json::array();
        for (const auto& n : groups) g.push_back(node_json(n));
        j["groups"] = g;
        if (a.per_node) {
            ordered_json nodes = ordered_json::array();
            for (const auto& n : report.nodes) nodes.push_back(node_json(n));
            j["nodes"] = nodes;
        }
        std::cout << j.dump(2) << "\n";
        return 0;
    }
    auto row = [](const std::string& name, std::int64_t params, std::int64_t macs) {
        std::cout << std::left << std::setw(22) << name << std::right << std::setw(14) << params << std::setw(12)
                  << std::fixed << std::setprecision(2) << params * 4.0 / (1024.0 * 1024.0) << std::setw(12)
                  << std::setprecision(3) << 2.0 * static_cast<double>(macs) / 1e9 << "\n";
    };
    std::cout << "input " << report.input_size << "x" << report.input_size << ", k=" << cfg.squeeze_exponent
              << ", " << (cfg.gaussian_head ? "Gaussian" : "plain") << " heads, " << cfg.num_classes << " classes\n";
    std::cout << std::left << std::setw(22) << "part" << std::right << std::setw(14) << "params" << std::setw(12)
              << "MB" << std::setw(12) << "BFLOPS" << "\n";
    for (const auto& n : a.per_node ? report.nodes : groups) row(n.name, n.params_total, n.macs);
    row("total", report.params_total, report.macs);
    std::cout << std::fixed << std::setprecision(2) << "totals: params " << report.params_total << " (conv "
              << report.params_conv << "), " << report.model_size_mb << " MB, " << std::setprecision(3)
              << report.bflops << " BFLOPS (" << report.bflops_with_elementwise << " with elementwise ops)\n";
    return 0;
}

// ------------------------------------------------------------------ sweep

struct SweepArgs {
    std::string config;
    int k_min = 1;
    int k_max = 7;
    std::string out;
    std::string markdown;
};

int run_sweep(const SweepArgs& a) {
    const auto cfg = read_config(a.config);
    const auto rows = frdet::sweep_squeeze_ratio(cfg, a.k_min, a.k_max);
    if (!a.out.empty()) {
        std::ofstream csv(a.out);
        if (!csv) throw frdet::IoError("cannot write " + a.out);
        frdet::write_sweep_csv(csv, rows);
    }
    std::ostringstream md;
    frdet::write_sweep_markdown(md, rows, cfg);
    if (!a.markdown.empty()) {
        std::ofstream f(a.markdown);
        if (!f) throw frdet::IoError("cannot write " + a.markdown);
        f << md.str();
    }
    std::cout << md.str();
    return 0;
}

// ------------------------------------------------------------------ synth

struct SynthArgs {
    std::string out;
    int count = 250;
    std::uint64_t seed = 2024;
    int size = 160;
};

int run_synth(const SynthArgs& a) {
    frdet::SyntheticSpec spec;
    spec.image_size = a.size;
    const auto samples = frdet::generate_synthetic_dataset(spec, a.count, a.seed);
    frdet::write_dataset(a.out, samples);
    std::cout << "wrote " << samples.size() << " samples to " << a.out << "\n";
    return 0;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
    std::string config;
    std::string data;
    std::string out;
    std::string init;
    int iterations = frdet::TrainConfig{}.iterations;
    std::uint64_t seed = 0;
    int batch = frdet::TrainConfig{}.batch_size;
    double lr = frdet::TrainConfig{}.learning_rate;
    int checkpoint_every = frdet::TrainConfig{}.checkpoint_every;
    double max_grad_norm = frdet::TrainConfig{}.max_grad_norm;
    double train_ratio = 0.8;
    bool reference_preset = false;
    bool quiet = false;
};

int run_train(const TrainArgs& a) {
    const auto cfg = read_config(a.config);
    require_dir(a.data, "data");
    require_dir(fs::path(a.data) / "images", "images");
    require_dir(fs::path(a.data) / "labels", "labels");
    const auto graph = frdet::build_network(cfg);

    const auto samples = frdet::load_dataset(a.data);
    std::vector<std::string> ids;
    for (const auto& s : samples) ids.push_back(s.id);
    std::vector<std::string> train_ids = ids, val_ids;
    if (a.train_ratio < 1.0) std::tie(train_ids, val_ids) = frdet::split_dataset(ids, a.train_ratio, a.seed);
    auto pick = [&](const std::vector<std::string>& wanted) {
        std::vector<frdet::Sample> out;
        for (const auto& id : wanted) {
            out.push_back(*std::find_if(samples.begin(), samples.end(), [&](const auto& s) { return s.id == id; }));
        }
        return out;
    };
    const auto train_set = pick(train_ids);
    const auto val_set = pick(val_ids);

    frdet::TrainConfig tc = a.reference_preset ? frdet::TrainConfig::reference_preset() : frdet::TrainConfig{};
    tc.iterations = a.iterations;
    tc.seed = a.seed;
    tc.checkpoint_every = a.checkpoint_every;
    tc.max_grad_norm = a.max_grad_norm;
    if (!a.reference_preset) {
        tc.batch_size = a.batch;
        tc.learning_rate = a.lr;
    }
    tc.validate();

    fs::create_directories(a.out);
    auto weights = a.init.empty() ? frdet::init_weights(graph, a.seed) : frdet::load_weights(a.init, graph);
    frdet::TrainOutputs outputs;
    outputs.directory = fs::path(a.out);
    if (!a.quiet) {
        std::cout << "training on " << train_set.size() << " samples, validating on " << val_set.size() << "\n"
                  << frdet::kLogHeader << std::endl;
        outputs.on_iteration = [every = std::max(1, tc.iterations / 20)](const frdet::IterationLog& l) {
            if (l.iteration == 1 || l.iteration % every == 0) std::cout << frdet::format_log_line(l) << std::endl;
        };
    }
    frdet::train(graph, weights, frdet::TrainingSet::from_samples(train_set, cfg), tc, outputs);

    if (!val_set.empty()) {
        const auto report = frdet::evaluate_model(graph, weights, val_set);
        const auto text = frdet::format_report(report);
        std::ofstream(fs::path(a.out) / "eval.txt") << text;
        std::ofstream(fs::path(a.out) / "eval.json") << report_json(report).dump(2) << "\n";
        std::cout << text;
    }
    return 0;
}

// ------------------------------------------------------------------ infer

struct InferArgs {
    std::string config;
    std::string weights;
    std::string image;
    double conf = frdet::kDefaultConfThreshold;
    double nms = frdet::kDefaultNmsThreshold;
    bool no_uncertainty = false;
    std::string annotate;
};

int run_infer(const InferArgs& a) {
    const auto cfg = read_config(a.config);
    const auto graph = frdet::build_network(cfg);
    auto weights = frdet::load_weights(a.weights, graph);
    const auto image = frdet::read_ppm(fs::path(a.image));
    const frdet::Image* images[] = {&image};
    const auto dets = frdet::detect(graph, weights, images, {a.conf, !a.no_uncertainty}, a.nms).front();
    frdet::write_detections(std::cout, dets, cfg.class_names);
    if (!a.annotate.empty()) {
        auto canvas = image;
        for (const auto& d : dets) frdet::draw_box(canvas, d.box, kPalette[d.class_id % kPalette.size()]);
        frdet::write_ppm(fs::path(a.annotate), canvas);
    }
    return 0;
}

// ------------------------------------------------------------------ eval

struct EvalArgs {
    std::string detections;
    std::string labels;
    double iou = 0.5;
    std::vector<std::string> class_iou;
    std::vector<std::string> classes;
    bool json = false;
};

int run_eval(const EvalArgs& a) {
    require_dir(a.detections, "detections");
    require_dir(a.labels, "labels");
    frdet::EvalOptions options;
    options.iou_thresh = a.iou;
    for (const auto& spec : a.class_iou) {
        const auto eq = spec.find('=');
        double v = 0;
        try {
            if (eq == std::string::npos) throw std::invalid_argument(spec);
            std::size_t used = 0;
            v = std::stod(spec.substr(eq + 1), &used);
            if (used != spec.size() - eq - 1 || !(v > 0 && v <= 1)) throw std::invalid_argument(spec);
        } catch (const std::exception&) {
            throw UsageError("--class-iou expects NAME=T with 0 < T <= 1, got '" + spec + "'");
        }
        options.class_iou[spec.substr(0, eq)] = v;
    }
    std::optional<std::vector<std::string>> names;
    if (!a.classes.empty()) names = a.classes;
    try {
        const auto report = frdet::evaluate_directories(a.detections, a.labels, options, names);
        if (a.json) {
            std::cout << report_json(report).dump(2) << "\n";
        } else {
            std::cout << frdet::format_report(report);
        }
    } catch (const frdet::StemMismatchError& e) {
        for (const auto& s : e.missing_detections()) std::cerr << "no detections for " << s << "\n";
        for (const auto& s : e.missing_labels()) std::cerr << "no labels for " << s << "\n";
        throw;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FRDet: fire-residual one-stage detector toolkit.\n"
                 "Exit codes: 0 success, 1 usage error, 2 runtime error. FRDET_THREADS caps BLAS threads (default 1)."};
    app.require_subcommand(1);

    AnalyzeArgs analyze;
    auto* an = app.add_subcommand("analyze", "Parameter count, model size and BFLOPS of a network");
    an->add_option("--config", analyze.config, "Network config (built-in 416 KITTI default when omitted)")
        ->check(CLI::ExistingFile);
    an->add_option("--input-size", analyze.input_size, "Measure FLOPs at this input size (multiple of 32)")
        ->check(CLI::PositiveNumber);
    an->add_flag("--json", analyze.json, "Emit one JSON object (schema 1)");
    an->add_flag("--per-node", analyze.per_node, "List every node instead of per-stage groups");

    SweepArgs sweep;
    auto* sw = app.add_subcommand("sweep", "Rebuild the network for k in [k-min, k-max] and compare with the reference sweep");
    sw->add_option("--config", sweep.config, "Network config (built-in default when omitted)")->check(CLI::ExistingFile);
    sw->add_option("--k-min", sweep.k_min, "Smallest squeeze exponent")->capture_default_str();
    sw->add_option("--k-max", sweep.k_max, "Largest squeeze exponent")->capture_default_str();
    sw->add_option("--out", sweep.out, "CSV output path");
    sw->add_option("--markdown", sweep.markdown, "Also write the Markdown table to this path");

    SynthArgs synth;
    auto* sy = app.add_subcommand("synth", "Generate the synthetic two-class shapes dataset");
    sy->add_option("--out", synth.out, "Output directory (images/ and labels/ are created)")->required();
    sy->add_option("--count", synth.count, "Number of samples")->capture_default_str()->check(CLI::PositiveNumber);
    sy->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
    sy->add_option("--size", synth.size, "Image side in pixels")->capture_default_str()->check(CLI::PositiveNumber);

    TrainArgs train;
    auto* tr = app.add_subcommand("train", "Train on a dataset directory, checkpointing to --out");
    tr->add_option("--config", train.config, "Network config")->required()->check(CLI::ExistingFile);
    tr->add_option("--data", train.data, "Dataset directory with images/ (PPM) and labels/ (KITTI)")->required();
    tr->add_option("--out", train.out, "Output directory for train_log.csv, checkpoints and final.frdw")->required();
    tr->add_option("--iters", train.iterations, "SGD iterations")->capture_default_str();
    tr->add_option("--seed", train.seed, "Seed for init, split and batch order")->capture_default_str();
    tr->add_option("--batch", train.batch, "Batch size")->capture_default_str();
    tr->add_option("--lr", train.lr, "Learning rate")->capture_default_str();
    tr->add_option("--checkpoint-every", train.checkpoint_every, "Checkpoint interval, 0 disables")
        ->capture_default_str();
    tr->add_option("--max-grad-norm", train.max_grad_norm, "Clip the joint gradient L2 norm to this value, 0 disables")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    tr->add_option("--train-ratio", train.train_ratio, "Fraction of samples used for training; the rest validate (1 skips validation)")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    tr->add_option("--init", train.init, "Start from these FRDW weights")->check(CLI::ExistingFile);
    tr->add_flag("--reference-preset", train.reference_preset, "Batch 64, learning rate 0.0005 (overrides --batch and --lr)");
    tr->add_flag("--quiet", train.quiet, "Only write files");

    InferArgs infer;
    auto* in = app.add_subcommand("infer", "Detect objects in one PPM image");
    in->add_option("--config", infer.config, "Network config")->required()->check(CLI::ExistingFile);
    in->add_option("--weights", infer.weights, "FRDW weights")->required()->check(CLI::ExistingFile);
    in->add_option("--image", infer.image, "Input image (binary PPM, P6)")->required()->check(CLI::ExistingFile);
    in->add_option("--conf", infer.conf, "Score threshold")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    in->add_option("--nms", infer.nms, "NMS IoU threshold")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    in->add_flag("--no-uncertainty", infer.no_uncertainty, "Do not scale scores by (1 - localization uncertainty)");
    in->add_option("--annotate", infer.annotate,
                   "Write a copy of the image with boxes to this PPM. Colours by class id: red, green, blue, "
                   "yellow, orange, purple, cyan, magenta, then repeating");

    EvalArgs eval;
    auto* ev = app.add_subcommand("eval", "AP per class and difficulty bucket for detection files against KITTI labels");
    ev->add_option("--detections", eval.detections, "Directory of <stem>.txt detection files")->required();
    ev->add_option("--labels", eval.labels, "Directory of <stem>.txt KITTI label files")->required();
    ev->add_option("--iou", eval.iou, "IoU threshold")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    ev->add_option("--class-iou", eval.class_iou, "Per-class threshold override NAME=T, repeatable (e.g. Car=0.7)");
    ev->add_option("--classes", eval.classes, "Class names to evaluate (default: every class seen)")->delimiter(',');
    ev->add_flag("--json", eval.json, "Emit one JSON object (schema 1)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        frdet::configure_threads();
    } catch (const frdet::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (*an) return run_analyze(analyze);
        if (*sw) return run_sweep(sweep);
        if (*sy) return run_synth(synth);
        if (*tr) return run_train(train);
        if (*in) return run_infer(infer);
        if (*ev) return run_eval(eval);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
