#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "neuromerge/cli.hpp"
#include "neuromerge/error.hpp"
#include "neuromerge/eval.hpp"
#include "neuromerge/identities.hpp"
#include "neuromerge/io.hpp"
#include "neuromerge/merge.hpp"
#include "neuromerge/parallel.hpp"
#include "neuromerge/report.hpp"
#include "neuromerge/zoo.hpp"

namespace py = pybind11;
using namespace neuromerge;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(std::move(shape), std::vector<float>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
    Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

// Reports cross the boundary as JSON text; the Python side parses them.
std::string dump(const nlohmann::json& doc) { return doc.dump(); }

Dataset make_dataset(const Array& inputs, const std::vector<std::uint32_t>& labels, std::size_t classes) {
    if (inputs.ndim() < 2) throw ShapeError("inputs need a leading sample axis");
    Dataset d;
    d.input_shape.assign(inputs.shape() + 1, inputs.shape() + inputs.ndim());
    d.class_count = classes;
    d.labels = labels;
    const std::size_t per = element_count(d.input_shape);
    for (py::ssize_t m = 0; m < inputs.shape(0); ++m) {
        const float* p = inputs.data() + m * per;
        d.inputs.emplace_back(d.input_shape, std::vector<float>(p, p + per));
    }
    check_dataset(d);
    return d;
}

Array dataset_inputs(const Dataset& d) {
    std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(d.size())};
    shape.insert(shape.end(), d.input_shape.begin(), d.input_shape.end());
    Array out(shape);
    float* dst = out.mutable_data();
    for (const Tensor& t : d.inputs) dst = std::copy(t.data().begin(), t.data().end(), dst);
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Neuron merging for structured pruning of FC and conv networks";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<DegenerateError>(m, "DegenerateError", base.ptr());
    py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());

    py::class_<Network>(m, "Network")
        .def_property_readonly("input_shape", [](const Network& n) { return n.input_shape; })
        .def_property_readonly("parameters", [](const Network& n) { return count_parameters(n); })
        .def("summary_json", [](const Network& n) { return dump(model_summary(n)); })
        .def("summary", &render_model_summary)
        .def("validate", &validate)
        .def("__eq__", [](const Network& a, const Network& b) { return bitwise_equal(a, b); });

    py::class_<Dataset>(m, "Dataset")
        .def(py::init(&make_dataset), py::arg("inputs"), py::arg("labels"), py::arg("classes"))
        .def_property_readonly("inputs", &dataset_inputs)
        .def_property_readonly("labels", [](const Dataset& d) { return d.labels; })
        .def_property_readonly("classes", [](const Dataset& d) { return d.class_count; })
        .def("__len__", &Dataset::size);

    m.def("load_model", [](const std::filesystem::path& p) { return load_model(p); }, py::arg("path"));
    m.def("save_model", [](const Network& n, const std::filesystem::path& p) { save_model(n, p); },
          py::arg("net"), py::arg("path"));
    m.def("load_dataset", [](const std::filesystem::path& p) { return load_dataset(p); }, py::arg("path"));
    m.def("save_dataset", [](const Dataset& d, const std::filesystem::path& p) { save_dataset(d, p); },
          py::arg("data"), py::arg("path"));

    m.def(
        "forward",
        [](const Network& net, const Array& x, const std::vector<std::string>& taps) {
            const ForwardResult r = forward(net, to_tensor(x), taps);
            py::dict tapped;
            for (const auto& [name, t] : r.taps) tapped[py::str(name)] = to_array(t);
            return py::make_tuple(to_array(r.logits), tapped);
        },
        py::arg("net"), py::arg("x"), py::arg("taps") = std::vector<std::string>{});
    m.def("accuracy", &accuracy, py::arg("net"), py::arg("data"));
    m.def("final_response_layer", &final_response_layer, py::arg("net"));
    m.def("tap_retained_indices", &tap_retained_indices, py::arg("original"), py::arg("tap"),
          py::arg("retained"));
    m.def(
        "ware",
        [](const Network& a, const Network& b, const Dataset& d, const std::string& tap,
           const std::vector<std::size_t>& retained) { return ware(a, b, d, tap, retained); },
        py::arg("original"), py::arg("compressed"), py::arg("data"), py::arg("tap"),
        py::arg("retained") = std::vector<std::size_t>{});

    m.def("prunable_layers", &prunable_layers, py::arg("net"));
    m.def("uniform_plan", &uniform_plan, py::arg("net"), py::arg("ratio"));
    m.def(
        "apply",
        [](const Network& net, const std::map<std::string, double>& plan, const std::string& criterion,
           double threshold, double lambda, const std::string& mode) {
            MergeConfig cfg{parse_criterion(criterion), plan, threshold, lambda, parse_mode(mode)};
            auto [out, report] = apply(net, cfg);
            return py::make_tuple(std::move(out), dump(to_json(report)));
        },
        py::arg("net"), py::arg("plan"), py::arg("criterion") = "l1", py::arg("threshold") = kDefaultThreshold,
        py::arg("lam") = kDefaultLambda, py::arg("mode") = "merge");

    m.def(
        "score_neurons",
        [](const Network& net, const std::string& layer, const std::string& criterion) {
            const Layer* l = find_layer(net, layer);
            if (!l) throw ArgumentError("no layer named '" + layer + "'");
            return score_neurons(NeuronView::of(*l), parse_criterion(criterion));
        },
        py::arg("net"), py::arg("layer"), py::arg("criterion") = "l1");
    m.def(
        "most_similar",
        [](const Array& w, const Array& candidates) {
            if (candidates.ndim() != 2) throw ShapeError("candidates must be (count, length)");
            const NeuronView view(candidates.shape(0), candidates.shape(1),
                                  std::vector<float>(candidates.data(), candidates.data() + candidates.size()));
            const SimilarityResult r = most_similar(to_tensor(w).data(), view);
            return py::make_tuple(r.index, r.sim, r.scale);
        },
        py::arg("w"), py::arg("candidates"));
    m.def(
        "n_mode_product",
        [](const Array& x, const Array& u, std::size_t mode) {
            return to_array(n_mode_product(to_tensor(x), to_tensor(u), mode));
        },
        py::arg("x"), py::arg("u"), py::arg("mode"));
    m.def(
        "tensor_conv",
        [](const Array& w, const Array& x, std::size_t stride, std::size_t padding) {
            return to_array(tensor_conv(to_tensor(w), to_tensor(x), stride, padding));
        },
        py::arg("weight"), py::arg("input"), py::arg("stride") = 1, py::arg("padding") = 0);

    m.def(
        "fixture",
        [](const std::string& kind, std::uint64_t seed, double noise) {
            std::map<std::string, double> plan;
            Rng rng(seed);
            Network net;
            if (kind == "planted-fc" || kind == "planted-conv") {
                PlantedFixture fx = kind == "planted-fc" ? planted_fc(seed, noise) : planted_conv(seed, noise);
                net = std::move(fx.net);
                plan = std::move(fx.plan);
            } else if (kind == "lenet300") {
                net = lenet300(rng);
            } else if (kind == "vgg16") {
                net = vgg16_cifar(rng);
                plan = vgg16_plan();
            } else if (kind == "random") {
                net = random_network(rng);
            } else {
                throw ArgumentError("unknown fixture kind '" + kind + "'");
            }
            return py::make_tuple(std::move(net), plan);
        },
        py::arg("kind"), py::arg("seed") = 0, py::arg("noise") = 0.0);
    m.def(
        "self_labelled_dataset",
        [](const Network& net, std::size_t samples, std::uint64_t seed) {
            Rng rng(seed);
            return self_labelled_dataset(net, samples, rng);
        },
        py::arg("net"), py::arg("samples"), py::arg("seed") = 0);

    m.def(
        "verify",
        [](std::uint64_t seed) {
            nlohmann::json rows = nlohmann::json::array();
            for (const auto& r : run_identity_suite(seed)) rows.push_back(to_json(r));
            return dump(rows);
        },
        py::arg("seed") = 0);
    m.def("set_thread_limit", &set_thread_limit, py::arg("threads"));
    m.def("thread_limit", &thread_limit);

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = cli::run(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
}
