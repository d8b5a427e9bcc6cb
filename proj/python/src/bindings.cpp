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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <sstream>

#include "frdet/analysis.hpp"
#include "frdet/data.hpp"
#include "frdet/eval.hpp"
#include "frdet/fr_module.hpp"
#include "frdet/loss.hpp"
#include "frdet/network.hpp"
#include "frdet/postprocess.hpp"
#include "frdet/trainer.hpp"

namespace py = pybind11;
using namespace frdet;

namespace {

using ImageArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Image to_image(const ImageArray& a) {
    if (a.ndim() != 3 || a.shape(2) != 3) throw ShapeError("image must have shape (H, W, 3)");
    Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::memcpy(img.rgb.data(), a.data(), img.rgb.size());
    return img;
}

ImageArray from_image(const Image& img) {
    ImageArray a({py::ssize_t(img.height), py::ssize_t(img.width), py::ssize_t(3)});
    std::memcpy(a.mutable_data(), img.rgb.data(), img.rgb.size());
    return a;
}

py::dict report_dict(const AnalysisReport& r) {
    py::dict d;
    d["input_size"] = r.input_size;
    d["params_conv"] = r.params_conv;
    d["params_total"] = r.params_total;
    d["model_size_mb"] = r.model_size_mb;
    d["model_size_conv_mb"] = r.model_size_conv_mb;
    d["macs"] = r.macs;
    d["bflops"] = r.bflops;
    d["bflops_with_elementwise"] = r.bflops_with_elementwise;
    py::list groups;
    for (const auto& g : group_by_prefix(r)) {
        py::dict gd;
        gd["name"] = g.name;
        gd["params_total"] = g.params_total;
        gd["macs"] = g.macs;
        groups.append(gd);
    }
    d["groups"] = groups;
    return d;
}

py::dict eval_dict(const EvalReport& r) {
    py::dict d;
    py::list cells;
    for (const auto& c : r.cells) {
        py::dict cd;
        cd["class"] = c.class_name;
        cd["bucket"] = c.bucket;
        cd["iou"] = c.iou_thresh;
        cd["included"] = c.included;
        cd["ap"] = c.result.ap;
        cd["num_gt"] = c.result.num_gt;
        cells.append(cd);
    }
    d["images"] = r.images;
    d["cells"] = cells;
    d["map_all"] = r.map_all ? py::cast(*r.map_all) : py::none();
    d["map_moderate"] = r.map_moderate ? py::cast(*r.map_moderate) : py::none();
    return d;
}

// A built network with float weights, for inference from Python.
class Detector {
public:
    explicit Detector(NetworkConfig config) : graph_(build_network(config)), weights_(init_weights(graph_, 0)) {}

    const NetworkConfig& config() const { return graph_.config; }
    void load(const std::filesystem::path& path) { weights_ = load_weights(path, graph_); }
    void save(const std::filesystem::path& path) const { save_weights(path, graph_, weights_); }
    void init(std::uint64_t seed) { init_weights(graph_, weights_, seed); }

    std::vector<Detection> detect(const ImageArray& image, double conf, double nms_thresh, bool use_uncertainty) {
        const auto img = to_image(image);
        const Image* images[] = {&img};
        return frdet::detect(graph_, weights_, images, {conf, use_uncertainty}, nms_thresh).front();
    }

    std::vector<py::array_t<float>> heads(const ImageArray& image) {
        const auto img = to_image(image);
        const Image* images[] = {&img};
        NoGradGuard ng;
        const auto out = forward(graph_, weights_, images_to_tensor(images, graph_.config.input_size), false);
        std::vector<py::array_t<float>> arrays;
        for (const auto& h : out) {
            std::vector<py::ssize_t> shape(h.shape().begin(), h.shape().end());
            py::array_t<float> a(shape);
            std::memcpy(a.mutable_data(), h.values().data(), h.numel() * sizeof(float));
            arrays.push_back(std::move(a));
        }
        return arrays;
    }

    py::list train(const std::vector<Sample>& samples, const TrainConfig& tc,
                   std::optional<std::filesystem::path> directory) {
        TrainOutputs outputs;
        outputs.directory = std::move(directory);
        const auto data = TrainingSet::from_samples(samples, graph_.config);
        TrainResult result;
        {
            py::gil_scoped_release release;
            result = frdet::train(graph_, weights_, data, tc, outputs);
        }
        py::list log;
        for (const auto& l : result.log) {
            log.append(py::make_tuple(l.iteration, l.loss.box, l.loss.objectness, l.loss.classification, l.loss.total));
        }
        return log;
    }

    py::dict evaluate(const std::vector<Sample>& samples, double iou_thresh) {
        EvalOptions options;
        options.iou_thresh = iou_thresh;
        return eval_dict(evaluate_model(graph_, weights_, samples, options));
    }

private:
    LayerGraph graph_;
    Weights<float> weights_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "FRDet detector toolkit: network analysis, loss, post-processing, evaluation and training.";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<DomainError>(m, "DomainError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());

    py::class_<NetworkConfig>(m, "NetworkConfig")
        .def_static("defaults", &NetworkConfig::defaults)
        .def_static("parse", [](const std::string& text) { return parse_config(text); })
        .def_static("load", [](const std::filesystem::path& p) { return load_config(p); })
        .def_readwrite("input_size", &NetworkConfig::input_size)
        .def_readwrite("num_classes", &NetworkConfig::num_classes)
        .def_readwrite("gaussian_head", &NetworkConfig::gaussian_head)
        .def_readwrite("squeeze_exponent", &NetworkConfig::squeeze_exponent)
        .def_readwrite("stem_channels", &NetworkConfig::stem_channels)
        .def_readwrite("neck_depth", &NetworkConfig::neck_depth)
        .def_readwrite("residual", &NetworkConfig::residual)
        .def_readwrite("class_names", &NetworkConfig::class_names)
        .def_property_readonly("grid_sizes", &NetworkConfig::grid_sizes)
        .def_property_readonly("head_channels", &NetworkConfig::head_channels)
        .def("validate", &NetworkConfig::validate)
        .def("__str__", [](const NetworkConfig& c) { return format_config(c); });

    m.def("conv_param_count", &conv_param_count, py::arg("in_channels"), py::arg("kernels"), py::arg("kernel_size"));
    m.def("fr_param_count", [](int c, int k) { return fr_param_count(FRConfig::make(c, k)); },
          py::arg("channels"), py::arg("k"));
    m.def("darknet_block_param_count", &darknet_block_param_count, py::arg("channels"));
    m.def("analyze", [](const NetworkConfig& c, std::optional<int> input) {
              return report_dict(estimate_flops(build_network(c), input));
          },
          py::arg("config"), py::arg("input_size") = py::none());
    m.def("sweep", [](const NetworkConfig& c, int k_min, int k_max) {
              py::list rows;
              for (const auto& r : sweep_squeeze_ratio(c, k_min, k_max)) {
                  py::dict d;
                  d["k"] = r.k;
                  d["model_size_mb"] = r.model_size_mb;
                  d["bflops"] = r.bflops;
                  d["params_total"] = r.params_total;
                  d["reference_mb"] = r.reference ? py::cast(r.reference->model_size_mb) : py::none();
                  d["size_deviation"] = r.size_deviation() ? py::cast(*r.size_deviation()) : py::none();
                  rows.append(d);
              }
              return rows;
          },
          py::arg("config"), py::arg("k_min") = 1, py::arg("k_max") = 7);

    m.def("gaussian_nll", &gaussian_nll, py::arg("mu"), py::arg("var"), py::arg("target"), py::arg("gamma"),
          py::arg("eps") = kNllEpsilon);

    py::class_<Box>(m, "Box")
        .def(py::init([](double x1, double y1, double x2, double y2) { return Box{x1, y1, x2, y2}; }),
             py::arg("x1"), py::arg("y1"), py::arg("x2"), py::arg("y2"))
        .def_readwrite("x1", &Box::x1)
        .def_readwrite("y1", &Box::y1)
        .def_readwrite("x2", &Box::x2)
        .def_readwrite("y2", &Box::y2)
        .def("__repr__", [](const Box& b) {
            std::ostringstream os;
            os << "Box(" << b.x1 << ", " << b.y1 << ", " << b.x2 << ", " << b.y2 << ")";
            return os.str();
        });
    py::class_<Detection>(m, "Detection")
        .def(py::init([](int cls, double score, Box box, double u) { return Detection{cls, score, box, u}; }),
             py::arg("class_id"), py::arg("score"), py::arg("box"), py::arg("uncertainty") = 0.0)
        .def_readwrite("class_id", &Detection::class_id)
        .def_readwrite("score", &Detection::score)
        .def_readwrite("box", &Detection::box)
        .def_readwrite("uncertainty", &Detection::uncertainty);
    m.def("iou", &iou, py::arg("a"), py::arg("b"));
    m.def("nms", &nms, py::arg("detections"), py::arg("iou_thresh") = kDefaultNmsThreshold);

    py::class_<KittiLabel>(m, "KittiLabel")
        .def(py::init<>())
        .def_readwrite("class_name", &KittiLabel::class_name)
        .def_readwrite("truncated", &KittiLabel::truncated)
        .def_readwrite("occluded", &KittiLabel::occluded)
        .def_readwrite("alpha", &KittiLabel::alpha)
        .def_readwrite("left", &KittiLabel::left)
        .def_readwrite("top", &KittiLabel::top)
        .def_readwrite("right", &KittiLabel::right)
        .def_readwrite("bottom", &KittiLabel::bottom)
        .def("__str__", &format_kitti_label);
    m.def("parse_kitti_labels", py::overload_cast<std::string_view>(&parse_kitti_labels), py::arg("text"));
    m.def("format_kitti_labels", [](const std::vector<KittiLabel>& labels) {
        std::ostringstream out;
        write_kitti_labels(out, labels);
        return out.str();
    });

    py::class_<Sample>(m, "Sample")
        .def_readonly("id", &Sample::id)
        .def_readonly("labels", &Sample::labels)
        .def_property_readonly("image", [](const Sample& s) { return from_image(s.image); });
    m.def("generate_synthetic", [](int count, std::uint64_t seed, int size) {
              SyntheticSpec spec;
              spec.image_size = size;
              return generate_synthetic_dataset(spec, count, seed);
          },
          py::arg("count"), py::arg("seed"), py::arg("size") = 160);
    m.def("load_dataset", &load_dataset, py::arg("root"));
    m.def("write_dataset", [](const std::filesystem::path& root, const std::vector<Sample>& s) { write_dataset(root, s); },
          py::arg("root"), py::arg("samples"));
    m.def("read_ppm", [](const std::filesystem::path& p) { return from_image(read_ppm(p)); }, py::arg("path"));
    m.def("write_ppm", [](const std::filesystem::path& p, const ImageArray& a) { write_ppm(p, to_image(a)); },
          py::arg("path"), py::arg("image"));

    m.def("evaluate_directories",
          [](const std::filesystem::path& dets, const std::filesystem::path& labels, double iou_thresh) {
              EvalOptions options;
              options.iou_thresh = iou_thresh;
              return eval_dict(evaluate_directories(dets, labels, options));
          },
          py::arg("detections"), py::arg("labels"), py::arg("iou") = 0.5);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_static("reference_preset", &TrainConfig::reference_preset)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("momentum", &TrainConfig::momentum)
        .def_readwrite("weight_decay", &TrainConfig::weight_decay)
        .def_readwrite("iterations", &TrainConfig::iterations)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("checkpoint_every", &TrainConfig::checkpoint_every)
        .def_readwrite("max_grad_norm", &TrainConfig::max_grad_norm);

    py::class_<Detector>(m, "Detector")
        .def(py::init<NetworkConfig>(), py::arg("config"))
        .def_property_readonly("config", &Detector::config)
        .def("init", &Detector::init, py::arg("seed"))
        .def("load", &Detector::load, py::arg("path"))
        .def("save", &Detector::save, py::arg("path"))
        .def("detect", &Detector::detect, py::arg("image"), py::arg("conf") = kDefaultConfThreshold,
             py::arg("nms") = kDefaultNmsThreshold, py::arg("use_uncertainty") = true)
        .def("heads", &Detector::heads, py::arg("image"))
        .def("train", &Detector::train, py::arg("samples"), py::arg("config"), py::arg("directory") = py::none())
        .def("evaluate", &Detector::evaluate, py::arg("samples"), py::arg("iou") = 0.5);

    m.def("set_num_threads", &set_num_threads, py::arg("threads"));
}
