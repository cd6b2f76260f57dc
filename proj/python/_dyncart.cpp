#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dyncart/cartography.hpp"
#include "dyncart/data_io.hpp"
#include "dyncart/detection.hpp"
#include "dyncart/error.hpp"
#include "dyncart/evaluation.hpp"
#include "dyncart/experiment.hpp"
#include "dyncart/gbdt.hpp"
#include "dyncart/noise_lab.hpp"

namespace py = pybind11;
using namespace dyncart;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

FeatureMatrix to_matrix(const Array& a) {
    if (a.ndim() != 2) throw Error("shape mismatch: X must be two-dimensional");
    const auto rows = static_cast<std::size_t>(a.shape(0));
    const auto cols = static_cast<std::size_t>(a.shape(1));
    return FeatureMatrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

LabelVector to_labels(const IntArray& a) {
    if (a.ndim() != 1) throw Error("shape mismatch: y must be one-dimensional");
    return LabelVector(a.data(), a.data() + a.shape(0));
}

std::vector<double> to_vector(const Array& a) { return std::vector<double>(a.data(), a.data() + a.size()); }

Array from_matrix(std::size_t rows, std::size_t cols, const std::vector<double>& v) {
    Array out({rows, cols});
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

Array from_vector(const std::vector<double>& v) {
    Array out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

py::object json_to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json py_to_json(const py::object& o) {
    return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

Dataset dataset_from_arrays(const Array& X, const IntArray& y, int num_classes) {
    Dataset ds;
    ds.X = to_matrix(X);
    ds.y = to_labels(y);
    ds.num_classes = num_classes ? num_classes : (ds.y.empty() ? 0 : *std::max_element(ds.y.begin(), ds.y.end()) + 1);
    ds.schema = numeric_schema(ds.X.cols(), ds.num_classes);
    for (std::size_t j = 0; j < ds.y.size(); ++j) ds.ids.push_back(static_cast<std::int64_t>(j));
    ds.validate();
    return ds;
}

TrainConfig config_from_kwargs(const py::kwargs& kw) {
    TrainConfig c;
    if (kw.contains("num_iterations")) c.num_iterations = kw["num_iterations"].cast<int>();
    if (kw.contains("learning_rate")) c.learning_rate = kw["learning_rate"].cast<double>();
    if (kw.contains("max_depth")) c.max_depth = kw["max_depth"].cast<int>();
    if (kw.contains("min_child_weight")) c.min_child_weight = kw["min_child_weight"].cast<double>();
    if (kw.contains("l2_reg")) c.l2_reg = kw["l2_reg"].cast<double>();
    if (kw.contains("seed")) c.seed = kw["seed"].cast<std::uint64_t>();
    c.validate();
    return c;
}

ExperimentConfig experiment_from_dict(const py::dict& d) {
    ExperimentConfig cfg;
    if (d.contains("dataset")) cfg.dataset.kind = d["dataset"].cast<std::string>();
    if (d.contains("n")) cfg.dataset.n = d["n"].cast<std::size_t>();
    if (d.contains("data_seed")) cfg.dataset.seed = d["data_seed"].cast<std::uint64_t>();
    if (d.contains("path")) {
        cfg.dataset.kind = "file";
        cfg.dataset.path = d["path"].cast<std::string>();
    }
    if (d.contains("noise")) cfg.noise = noise_type_from_string(d["noise"].cast<std::string>());
    if (d.contains("rate")) cfg.rate = d["rate"].cast<double>();
    if (d.contains("methods")) {
        cfg.methods.clear();
        for (const auto& m : d["methods"].cast<std::vector<std::string>>()) cfg.methods.push_back(method_from_string(m));
    }
    if (d.contains("seed")) cfg.seed = d["seed"].cast<std::uint64_t>();
    if (d.contains("tune_budget")) cfg.tune_budget = d["tune_budget"].cast<int>();
    if (d.contains("rounds")) cfg.rounds = d["rounds"].cast<int>();
    if (d.contains("workers")) cfg.workers = d["workers"].cast<unsigned>();
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_dyncart, m) {
    m.doc() = "Training-dynamics label-noise detection with gradient-boosted trees";

    py::register_exception<Error>(m, "DyncartError", PyExc_RuntimeError);

    py::class_<Dataset>(m, "Dataset")
        .def(py::init(&dataset_from_arrays), py::arg("X"), py::arg("y"), py::arg("num_classes") = 0)
        .def_property_readonly("X", [](const Dataset& d) { return from_matrix(d.X.rows(), d.X.cols(), {d.X.values().begin(), d.X.values().end()}); })
        .def_property_readonly("y", [](const Dataset& d) { return py::array_t<int>(static_cast<py::ssize_t>(d.y.size()), d.y.data()); })
        .def_property_readonly("num_classes", [](const Dataset& d) { return d.num_classes; })
        .def_property_readonly("ids", [](const Dataset& d) { return d.ids; })
        .def_property_readonly("noise_mask", [](const Dataset& d) -> py::object {
            if (!d.noise_mask) return py::none();
            py::array_t<bool> out(static_cast<py::ssize_t>(d.noise_mask->size()));
            for (std::size_t j = 0; j < d.noise_mask->size(); ++j) out.mutable_data()[j] = (*d.noise_mask)[j];
            return out;
        })
        .def_property_readonly("provenance", [](const Dataset& d) { return json_to_py(d.provenance); })
        .def("class_counts", &Dataset::class_counts)
        .def("noisy_count", &Dataset::noisy_count)
        .def("__len__", &Dataset::size);

    py::class_<Ensemble>(m, "Ensemble")
        .def_property_readonly("num_classes", &Ensemble::num_classes)
        .def_property_readonly("num_iterations", &Ensemble::num_iterations)
        .def("predict_proba", [](const Ensemble& e, const Array& X) {
            const auto p = e.predict_proba(to_matrix(X));
            return from_matrix(p.rows, p.cols, p.values);
        })
        .def("predict_proba_at", [](const Ensemble& e, const Array& X, int iteration) {
            const auto p = predict_proba_at(e, to_matrix(X), iteration);
            return from_matrix(p.rows, p.cols, p.values);
        })
        .def("serialize", [](const Ensemble& e) { return serialize(e); })
        .def_static("deserialize", [](const std::string& s) { return deserialize(s); });

    m.def("gen_binary_synthetic", &gen_binary_synthetic, py::arg("n") = 15100, py::arg("seed") = 7);
    m.def("gen_multiclass_synthetic", &gen_multiclass_synthetic, py::arg("n") = 16500, py::arg("seed") = 7);
    m.def("inject_ncar", &inject_ncar, py::arg("dataset"), py::arg("rate"), py::arg("seed") = 0);
    m.def(
        "inject_nnar",
        [](const Dataset& ds, double rate, int k, double p, std::uint64_t seed) {
            NnarOptions o;
            o.rate = rate;
            o.k = k;
            o.swap_probability = p;
            o.seed = seed;
            return inject_nnar(ds, o).dataset;
        },
        py::arg("dataset"), py::arg("rate"), py::arg("k") = 10, py::arg("p") = 0.5, py::arg("seed") = 0);
    m.def("load_dataset", [](const std::string& stem) { return load_dataset(stem); }, py::arg("stem"));
    m.def("save_dataset", [](const Dataset& ds, const std::string& stem) { save_dataset(ds, stem); },
          py::arg("dataset"), py::arg("stem"));

    m.def(
        "fit",
        [](const Array& X, const IntArray& y, py::object weights, unsigned workers, const py::kwargs& kw) {
            const auto fx = to_matrix(X);
            const auto fy = to_labels(y);
            const auto w = weights.is_none() ? std::vector<double>(fy.size(), 1.0) : to_vector(weights.cast<Array>());
            return fit(fx, fy, w, config_from_kwargs(kw), {workers, 0});
        },
        py::arg("X"), py::arg("y"), py::arg("weights") = py::none(), py::arg("workers") = 1,
        "Fit a boosted ensemble; keyword arguments set num_iterations, learning_rate, max_depth, "
        "min_child_weight, l2_reg and seed.");

    m.def(
        "compute_dynamics",
        [](const Ensemble& e, const Array& X, const IntArray& y) {
            const auto d = compute_dynamics(e, to_matrix(X), to_labels(y));
            py::dict out;
            out["mu"] = from_vector(d.mu);
            out["sigma"] = from_vector(d.sigma);
            out["correctness"] = from_vector(d.correctness);
            out["product"] = from_vector(d.product);
            out["iterations"] = d.iterations;
            return out;
        },
        py::arg("model"), py::arg("X"), py::arg("y"));

    m.def(
        "learn_weights",
        [](const Array& X, const IntArray& y, int rounds, unsigned workers, py::object config) {
            WeightLearningOptions o;
            o.rounds = rounds;
            o.workers = workers;
            const TrainConfig cfg = config.is_none() ? default_detection_config() : config_from_json(py_to_json(config));
            const auto traj = learn_weights(to_matrix(X), to_labels(y), cfg, o);
            std::vector<double> flat;
            for (const auto& r : traj.rounds) flat.insert(flat.end(), r.begin(), r.end());
            return from_matrix(traj.rounds.size(), traj.rounds.empty() ? 0 : traj.rounds[0].size(), flat);
        },
        py::arg("X"), py::arg("y"), py::arg("rounds") = 10, py::arg("workers") = 1, py::arg("config") = py::none(),
        "Weights after each round as a (rounds, n) array.");

    m.def(
        "auto_valley_threshold",
        [](const Array& values) {
            const auto r = auto_valley_threshold(to_vector(values));
            return py::make_tuple(r.threshold, r.unimodal_fallback);
        },
        py::arg("values"), "Returns (threshold, unimodal_fallback).");

    m.def(
        "detection_score",
        [](const std::vector<bool>& flags, const std::vector<bool>& truth) {
            const auto s = detection_score(flags, truth);
            return json_to_py(detection_to_json(s));
        },
        py::arg("flags"), py::arg("truth"));

    m.def(
        "pr_auc", [](const std::vector<bool>& y, const Array& scores) { return pr_auc(y, to_vector(scores)); },
        py::arg("y_true"), py::arg("scores"));

    m.def(
        "run_experiment",
        [](const py::dict& config) {
            ExperimentConfig cfg = experiment_from_dict(config);
            ExperimentReport r;
            {
                py::gil_scoped_release release;
                r = run_experiment(cfg);
            }
            return json_to_py(r.to_json());
        },
        py::arg("config"),
        "Keys: dataset, n, data_seed, path, noise, rate, methods, seed, tune_budget, rounds, workers.");

    m.def("default_detection_config", [] { return json_to_py(config_to_json(default_detection_config())); });
}
