#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <filesystem>
#include <string>
#include <vector>

#include "resmamba/autoencoder.hpp"
#include "resmamba/bench.hpp"
#include "resmamba/checkpoint.hpp"
#include "resmamba/config.hpp"
#include "resmamba/dataset.hpp"
#include "resmamba/metrics.hpp"
#include "resmamba/pipeline.hpp"
#include "resmamba/scan.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace rmb;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a)
{
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t)
{
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    Array out(shape);
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

ScanMode parse_mode(const std::string& mode)
{
    if (mode == "parallel") return ScanMode::Parallel;
    if (mode == "sequential") return ScanMode::Sequential;
    throw std::invalid_argument("mode must be 'parallel' or 'sequential', got '" + mode + "'");
}

ConfusionMatrix to_confusion(const std::vector<std::vector<std::uint64_t>>& counts, std::vector<std::string> names)
{
    if (names.empty()) {
        for (std::size_t i = 0; i < counts.size(); ++i) names.push_back("class" + std::to_string(i));
    }
    ConfusionMatrix cm{std::move(names), counts};
    cm.validate();
    return cm;
}

py::dict report_dict(const ClassReport& report)
{
    py::list classes;
    for (const auto& c : report.classes) {
        py::dict d;
        d["name"] = c.name;
        d["precision"] = py::make_tuple(c.precision.num, c.precision.den);
        d["recall"] = py::make_tuple(c.recall.num, c.recall.den);
        d["f1"] = py::make_tuple(c.f1.num, c.f1.den);
        classes.append(d);
    }
    py::dict out;
    out["classes"] = classes;
    out["accuracy"] = py::make_tuple(report.accuracy.num, report.accuracy.den);
    out["warnings"] = report.warnings;
    return out;
}

py::dict curve_dict(const Curve& c)
{
    py::dict d;
    d["train"] = c.train;
    d["val"] = c.val;
    return d;
}

std::pair<Dataset, Dataset> load_split(const PipelineConfig& config, const fs::path& data)
{
    const Dataset all = load_dataset(data, config.image_size, config.channels);
    return split(all, SplitSpec{config.train_fraction, config.seed});
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Selective-scan autoencoder residual classifier: core operations";

    m.def(
        "selective_scan",
        [](const Array& u, const Array& delta, const Array& a, const Array& b, const Array& c, const Array& d_skip,
           const std::string& mode) {
            const SSMParams p{to_tensor(delta), to_tensor(a), to_tensor(b), to_tensor(c), to_tensor(d_skip)};
            return to_array(selective_scan(to_tensor(u), p, parse_mode(mode)));
        },
        py::arg("u"), py::arg("delta"), py::arg("a"), py::arg("b"), py::arg("c"), py::arg("d_skip"),
        py::arg("mode") = "parallel",
        "Selective scan of u [L, D] (or [B, L, D]) with delta [L, D], A [D, N], B and C [L, N], D_skip [D].");

    m.def(
        "attention_reference", [](const Array& x, std::uint64_t seed) { return to_array(attention_reference(to_tensor(x), seed)); },
        py::arg("x"), py::arg("seed") = 0, "Single-head softmax attention baseline on x [n, d].");

    m.def(
        "kpis",
        [](const std::vector<std::vector<std::uint64_t>>& counts, std::vector<std::string> names) {
            return report_dict(kpis(to_confusion(counts, std::move(names))));
        },
        py::arg("counts"), py::arg("class_names") = std::vector<std::string>{},
        "Per-class precision, recall and F1 plus accuracy as exact (num, den) pairs.");

    m.def(
        "binary_collapse",
        [](const std::vector<std::vector<std::uint64_t>>& counts, std::vector<std::string> names, std::size_t positive) {
            const auto folded = binary_collapse(to_confusion(counts, std::move(names)), positive);
            return py::make_tuple(folded.counts, folded.class_names);
        },
        py::arg("counts"), py::arg("class_names"), py::arg("positive_class"));

    m.def(
        "format_percent",
        [](std::uint64_t num, std::uint64_t den, int decimals) { return format_percent(Ratio{num, den}, decimals); },
        py::arg("num"), py::arg("den"), py::arg("decimals") = 1);

    m.def("roc_auc", [](const std::vector<double>& pos, const std::vector<double>& neg) { return roc_auc(pos, neg); },
          py::arg("positive"), py::arg("negative"));

    m.def(
        "gen_synthetic",
        [](const fs::path& out, std::uint64_t seed, std::size_t per_class, std::size_t classes, std::size_t size) {
            gen_synthetic(out, SyntheticSpec{seed, per_class, classes, size});
        },
        py::arg("out"), py::arg("seed") = 0, py::arg("per_class") = 200, py::arg("num_classes") = 2,
        py::arg("size") = 64);

    m.def(
        "scaling_run",
        [](const std::vector<std::size_t>& n_list, std::size_t d, std::size_t repeats, double min_sample_ns) {
            ScalingOptions o;
            o.n_list = n_list;
            o.d = d;
            o.repeats = repeats;
            o.min_sample_ns = min_sample_ns;
            const auto report = scaling_run(o);
            py::list records;
            for (const auto& r : report.records) {
                py::dict rec;
                rec["impl"] = r.impl;
                rec["n"] = r.n;
                rec["d"] = r.d;
                rec["wall_ns"] = r.wall_ns;
                records.append(rec);
            }
            py::dict slopes;
            for (const auto& f : report.fits) slopes[py::str(f.impl)] = f.slope;
            return py::make_tuple(records, slopes);
        },
        py::arg("n_list"), py::arg("d") = 32, py::arg("repeats") = 5, py::arg("min_sample_ns") = 2e6);

    m.def(
        "read_checkpoint",
        [](const fs::path& path) {
            const auto ckpt = load_checkpoint(path);
            py::dict meta, tensors;
            for (const auto& [k, v] : ckpt.metadata) meta[py::str(k)] = v;
            for (const auto& t : ckpt.tensors) {
                std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
                Array a(shape);
                std::copy(t.values.begin(), t.values.end(), a.mutable_data());
                tensors[py::str(t.name)] = a;
            }
            return py::make_tuple(ckpt.version, meta, tensors);
        },
        py::arg("path"), "Returns (version, metadata, tensors) of a checkpoint file.");

    m.def(
        "parse_config", [](const std::string& text) { return parse_config(text).to_text(); }, py::arg("text"),
        "Validates configuration text and returns its canonical form with every key.");

    py::class_<AEModel>(m, "AutoEncoder")
        .def(py::init([](const std::string& config_text, std::uint64_t seed) {
                 return AEModel(parse_config(config_text).ae_config(), seed);
             }),
             py::arg("config") = "", py::arg("seed") = 0)
        .def("forward", [](const AEModel& ae, const Array& x) {
            NoGradGuard no_grad;
            return to_array(ae.forward(to_tensor(x)));
        })
        .def("residual", [](const AEModel& ae, const Array& x) {
            NoGradGuard no_grad;
            const Tensor t = to_tensor(x);
            return to_array(residual(t, ae.forward(t)));
        })
        .def_property_readonly("parameter_count",
                               [](const AEModel& ae) { return count_parameters(ae.named_parameters()); });

    m.def(
        "train_autoencoder",
        [](const std::string& config_text, const fs::path& data, const fs::path& out) {
            const auto config = parse_config(config_text);
            const auto [train, val] = load_split(config, data);
            Phase1Result result = [&] {
                py::gil_scoped_release release;
                return train_phase1(train, val, config);
            }();
            save_checkpoint(out, autoencoder_checkpoint(result.model, config, config.epochs_ae,
                                                        result.loss.train.empty() ? 0.0 : result.loss.train.back()));
            return curve_dict(result.loss);
        },
        py::arg("config"), py::arg("data"), py::arg("out"),
        "Phase 1: trains on target-class images, writes the checkpoint, returns the loss curve.");

    m.def(
        "train_classifier",
        [](const std::string& config_text, const fs::path& data, const fs::path& ae_path, const fs::path& out) {
            const auto config = parse_config(config_text);
            const auto [train, val] = load_split(config, data);
            const AEModel ae = load_autoencoder(load_checkpoint(ae_path), config);
            Phase2Result result = [&] {
                py::gil_scoped_release release;
                return train_phase2(ae, train, val, config);
            }();
            save_checkpoint(out, classifier_checkpoint(result.classifier, config, config.epochs_clf,
                                                       result.loss.train.empty() ? 0.0 : result.loss.train.back()));
            py::dict d;
            d["loss"] = curve_dict(result.loss);
            d["accuracy"] = curve_dict(result.accuracy);
            return d;
        },
        py::arg("config"), py::arg("data"), py::arg("ae"), py::arg("out"));

    m.def(
        "evaluate",
        [](const std::string& config_text, const fs::path& data, const fs::path& ae_path, const fs::path& clf_path,
           const std::string& which) {
            const auto config = parse_config(config_text);
            const Dataset all = load_dataset(data, config.image_size, config.channels);
            Dataset subset = all;
            if (which != "all") {
                auto [train, val] = split(all, SplitSpec{config.train_fraction, config.seed});
                if (which == "train") subset = std::move(train);
                else if (which == "val") subset = std::move(val);
                else throw std::invalid_argument("split must be 'val', 'train' or 'all'");
            }
            const AEModel ae = load_autoencoder(load_checkpoint(ae_path), config);
            const TrainedClassifier clf = load_classifier(load_checkpoint(clf_path), config);
            const Evaluation ev = evaluate(ae, clf, subset, config);
            py::dict d = report_dict(ev.report);
            d["confusion"] = ev.confusion.counts;
            d["class_names"] = ev.confusion.class_names;
            return d;
        },
        py::arg("config"), py::arg("data"), py::arg("ae"), py::arg("clf"), py::arg("split") = "val");
}
