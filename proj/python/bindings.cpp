#include <optional>

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "baccae/ccae.hpp"
#include "baccae/cluster.hpp"
#include "baccae/config.hpp"
#include "baccae/data.hpp"
#include "baccae/embed.hpp"
#include "baccae/error.hpp"
#include "baccae/eval.hpp"
#include "baccae/imgproc.hpp"
#include "baccae/optim.hpp"
#include "baccae/pipeline.hpp"

namespace py = pybind11;
using namespace baccae;
using nlohmann::json;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Image to_image(const U8Array& a) {
    if (a.ndim() != 2) throw Error(ErrorKind::Dimension, "expected a 2-D uint8 array, got " + std::to_string(a.ndim()) + "-D");
    const auto h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
    return Image(w, h, std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

U8Array from_image(const Image& img) {
    U8Array out({img.height(), img.width()});
    std::copy(img.pixels().begin(), img.pixels().end(), out.mutable_data());
    return out;
}

cluster::FeatureMatrix to_features(const F64Array& a) {
    if (a.ndim() != 2) throw Error(ErrorKind::Dimension, "expected a 2-D float array of shape (n, d)");
    std::vector<std::string> ids;
    for (py::ssize_t i = 0; i < a.shape(0); ++i) ids.push_back(std::to_string(i));
    return cluster::FeatureMatrix(std::move(ids), static_cast<std::size_t>(a.shape(1)),
                                  std::vector<double>(a.data(), a.data() + a.size()));
}

F64Array matrix(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
    F64Array out({rows, cols});
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

py::object to_python(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_python(const py::object& o) {
    return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

// A dict is parsed as config, a str/path is loaded as a file (relative paths
// resolve against it), None means defaults.
RunConfig to_run_config(const py::object& o) {
    RunConfig cfg;
    if (o.is_none()) {
        cfg = RunConfig{};
    } else if (py::isinstance<py::dict>(o)) {
        cfg = run_config_from_json(from_python(o));
    } else {
        cfg = load_run_config(o.cast<std::filesystem::path>());
    }
    const auto problems = cfg.validate();
    if (!problems.empty()) {
        std::string msg = std::to_string(problems.size()) + " problem(s):";
        for (const auto& p : problems) msg += " [" + p + "]";
        throw Error(ErrorKind::Config, msg);
    }
    return cfg;
}

std::vector<nn::Tensor> to_tensors(const py::array& images) {
    const auto info = images.request();
    if (info.ndim != 3) throw Error(ErrorKind::Dimension, "expected images of shape (n, h, w)");
    const auto n = static_cast<std::size_t>(info.shape[0]), h = static_cast<std::size_t>(info.shape[1]),
               w = static_cast<std::size_t>(info.shape[2]);
    const bool bytes = py::isinstance<py::array_t<std::uint8_t>>(images);
    std::vector<nn::Tensor> out;
    if (bytes) {
        const U8Array a = images;
        for (std::size_t i = 0; i < n; ++i) {
            nn::Tensor t({1, h, w});
            for (std::size_t p = 0; p < h * w; ++p) t[p] = a.data()[i * h * w + p] / 255.0;
            out.push_back(std::move(t));
        }
    } else {
        const F64Array a = images;
        for (std::size_t i = 0; i < n; ++i) {
            nn::Tensor t({1, h, w});
            std::copy(a.data() + i * h * w, a.data() + (i + 1) * h * w, t.values().begin());
            out.push_back(std::move(t));
        }
    }
    return out;
}

F64Array tensor_array(const nn::Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    F64Array out(shape);
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

ccae::CCAEModel make_model(int region_id, int input_h, int input_w, const py::object& encoder, int latent_dim,
                           double lambda, int epochs, int batch_size, double learning_rate, std::uint64_t seed) {
    auto cfg = ccae::CCAEConfig::defaults(region_id, input_h, input_w);
    if (!encoder.is_none()) {
        cfg.encoder.clear();
        for (const auto& spec : from_python(encoder)) cfg.encoder.push_back(layer_spec_from_json(spec));
    }
    cfg.latent_dim = latent_dim;
    cfg.lambda = lambda;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.learning_rate = learning_rate;
    cfg.seed = seed;
    return ccae::build(cfg);
}

}  // namespace

PYBIND11_MODULE(_baccae, m) {
    m.doc() = "Unsupervised bone-age clustering: preprocessing, autoencoders, k-means, evaluation, t-SNE.";

    static py::exception<Error> error_type(m, "BaccaeError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
            exc.attr("kind") = to_string(e.kind());
            PyErr_SetObject(error_type.ptr(), exc.ptr());
        }
    });

    // Images.
    m.def("load_grayscale", [](const std::filesystem::path& p) { return from_image(load_grayscale(p)); }, py::arg("path"));
    m.def("save_png", [](const std::filesystem::path& p, const U8Array& a) { save_png(p, to_image(a)); }, py::arg("path"),
          py::arg("image"));
    m.def("histogram_equalize", [](const U8Array& a) { return from_image(imgproc::histogram_equalize(to_image(a))); },
          py::arg("image"));
    m.def("gaussian_kernel", &imgproc::gaussian_kernel, py::arg("kernel_size"), py::arg("sigma"));
    m.def("gaussian_blur",
          [](const U8Array& a, double sigma, int size) { return from_image(imgproc::gaussian_blur(to_image(a), sigma, size)); },
          py::arg("image"), py::arg("sigma") = 1.2, py::arg("kernel_size") = 5);
    m.def("adaptive_threshold",
          [](const U8Array& a, int block, double c) { return from_image(imgproc::adaptive_threshold(to_image(a), block, c)); },
          py::arg("image"), py::arg("block_size") = 31, py::arg("offset_c") = 10.0);
    m.def(
        "preprocess",
        [](const U8Array& a, bool equalize, int blur_kernel, double blur_sigma, int threshold_block, double threshold_c) {
            return from_image(imgproc::preprocess(
                to_image(a), imgproc::PreprocessParams{equalize, blur_kernel, blur_sigma, threshold_block, threshold_c}));
        },
        py::arg("image"), py::arg("equalize") = true, py::arg("blur_kernel") = 5, py::arg("blur_sigma") = 1.2,
        py::arg("threshold_block") = 31, py::arg("threshold_c") = 10.0);
    m.def("resize_bilinear",
          [](const U8Array& a, int w, int h) { return from_image(imgproc::resize_bilinear(to_image(a), w, h)); },
          py::arg("image"), py::arg("width"), py::arg("height"));

    // Autoencoder.
    py::class_<ccae::CCAEModel>(m, "CCAE")
        .def(py::init(&make_model), py::arg("region_id"), py::arg("input_h"), py::arg("input_w"),
             py::arg("encoder") = py::none(), py::arg("latent_dim") = 16, py::arg("lam") = 0.01, py::arg("epochs") = 50,
             py::arg("batch_size") = 32, py::arg("learning_rate") = 1e-3, py::arg("seed") = 0)
        .def_property_readonly("config", [](const ccae::CCAEModel& mdl) { return to_python(to_json(mdl.config())); })
        .def_property_readonly("history", [](const ccae::CCAEModel& mdl) { return mdl.history(); })
        .def("train",
             [](ccae::CCAEModel& mdl, const py::array& images) {
                 const auto data = to_tensors(images);
                 py::gil_scoped_release release;
                 ccae::train(mdl, data);
                 return mdl.history();
             },
             py::arg("images"), "Train on (n, h, w) images, uint8 or floats in [0, 1]; returns per-epoch mean loss.")
        .def("loss", [](const ccae::CCAEModel& mdl, const py::array& images) { return mdl.loss(to_tensors(images)); },
             py::arg("images"))
        .def("encode",
             [](const ccae::CCAEModel& mdl, const py::array& images) {
                 const auto data = to_tensors(images);
                 std::vector<double> z;
                 for (const auto& t : data) {
                     const auto lv = ccae::encode(mdl, "", t);
                     z.insert(z.end(), lv.z.begin(), lv.z.end());
                 }
                 return matrix(z, data.size(), static_cast<std::size_t>(mdl.config().latent_dim));
             },
             py::arg("images"), "Latent codes, shape (n, latent_dim).")
        .def("reconstruct",
             [](const ccae::CCAEModel& mdl, const py::array& images) {
                 py::list out;
                 for (const auto& t : to_tensors(images)) out.append(tensor_array(mdl.reconstruct(t)));
                 return out;
             },
             py::arg("images"))
        .def("save", [](const ccae::CCAEModel& mdl, const std::filesystem::path& p) { nn::save_checkpoint(p, mdl.params()); },
             py::arg("path"))
        .def("load", [](ccae::CCAEModel& mdl, const std::filesystem::path& p) { mdl.load_params(nn::load_checkpoint(p)); },
             py::arg("path"));

    // Clustering.
    m.def(
        "kmeans",
        [](const F64Array& x, int k, int restarts, std::uint64_t seed, int max_iters, double tol, bool standardize) {
            cluster::KMeansConfig cfg{k, max_iters, tol, seed, restarts, standardize};
            auto fm = to_features(x);
            if (standardize) fm = cluster::standardize(fm);
            const auto a = cluster::kmeans(fm, cfg);
            py::dict out;
            out["labels"] = a.labels;
            out["centroids"] = matrix(a.centroids, a.k, a.dims);
            out["inertia"] = a.inertia;
            out["inertia_trace"] = a.inertia_trace;
            out["iterations"] = a.iterations_run;
            out["best_restart"] = a.best_restart;
            return out;
        },
        py::arg("x"), py::arg("k") = 16, py::arg("restarts") = 10, py::arg("seed") = 0, py::arg("max_iters") = 300,
        py::arg("tol") = 1e-6, py::arg("standardize") = false);

    // Evaluation.
    m.def(
        "assign_interval_label",
        [](int age, int origin, int interval, int classes) {
            return eval::assign_interval_label(age, eval::IntervalRule{origin, interval, classes});
        },
        py::arg("age_months"), py::arg("origin_months") = 24, py::arg("interval_months") = 48, py::arg("num_classes") = 4);
    m.def(
        "report_from_counts",
        [](const std::vector<std::vector<long long>>& counts) {
            eval::IntervalRule rule;
            if (!counts.empty()) rule.num_classes = static_cast<int>(counts.front().size());
            return to_python(pipeline::report_to_json(eval::report_from_counts(counts), rule));
        },
        py::arg("counts"), "Dominant-label report from a clusters x classes count matrix.");
    m.def(
        "dominant_label_report",
        [](const std::vector<int>& clusters, const std::vector<int>& classes, int k, int num_classes) {
            eval::IntervalRule rule;
            rule.num_classes = num_classes;
            return to_python(pipeline::report_to_json(eval::dominant_label_report(clusters, classes, k, num_classes), rule));
        },
        py::arg("cluster_labels"), py::arg("true_labels"), py::arg("num_clusters"), py::arg("num_classes") = 4);

    // Embedding.
    m.def(
        "perplexity_affinities",
        [](const F64Array& x, double perplexity) {
            const auto p = embed::perplexity_affinities(to_features(x), perplexity);
            return matrix(p.p, p.n, p.n);
        },
        py::arg("x"), py::arg("perplexity") = 30.0);
    m.def(
        "tsne",
        [](const F64Array& x, double perplexity, int iterations, std::uint64_t seed, double learning_rate) {
            embed::TsneConfig cfg;
            cfg.perplexity = perplexity;
            cfg.iterations = iterations;
            cfg.seed = seed;
            cfg.learning_rate = learning_rate;
            const auto fm = to_features(x);
            embed::Embedding2D e;
            {
                py::gil_scoped_release release;
                e = embed::tsne(fm, cfg);
            }
            py::dict out;
            out["points"] = matrix(e.points, e.size(), 2);
            out["kl_initial"] = e.kl_initial;
            out["kl_final"] = e.kl_final;
            return out;
        },
        py::arg("x"), py::arg("perplexity") = 30.0, py::arg("iterations") = 1000, py::arg("seed") = 0,
        py::arg("learning_rate") = 200.0);

    // Data.
    m.def(
        "synthesize",
        [](int per_class, int image_h, int image_w, double noise_level, std::uint64_t seed, int num_classes) {
            data::SynthConfig cfg;
            cfg.per_class = per_class;
            cfg.image_h = image_h;
            cfg.image_w = image_w;
            cfg.noise_level = noise_level;
            cfg.seed = seed;
            cfg.num_classes = num_classes;
            cfg.rule.num_classes = num_classes;
            const auto ds = data::synthesize(cfg);
            U8Array images({static_cast<py::ssize_t>(ds.images.size()), static_cast<py::ssize_t>(image_h),
                            static_cast<py::ssize_t>(image_w)});
            auto* dst = images.mutable_data();
            for (const auto& img : ds.images) dst = std::copy(img.pixels().begin(), img.pixels().end(), dst);
            py::dict out;
            out["sample_ids"] = ds.sample_ids;
            out["images"] = images;
            out["ages"] = ds.ages;
            out["classes"] = ds.classes;
            return out;
        },
        py::arg("per_class") = 50, py::arg("image_h") = 28, py::arg("image_w") = 28, py::arg("noise_level") = 0.05,
        py::arg("seed") = 0, py::arg("num_classes") = 4);

    // Configuration and pipeline stages.
    m.def("default_config", [] { return to_python(to_json(RunConfig{})); });
    m.def("load_config", [](const std::filesystem::path& p) { return to_python(to_json(to_run_config(py::cast(p)))); },
          py::arg("path"), "Parsed, validated config with paths resolved against the file.");
    m.def(
        "run_stage",
        [](const std::string& stage, const py::object& config, const py::object& counts,
           const std::function<void(const std::string&)>& log) {
            const auto cfg = to_run_config(config);
            const pipeline::Logger logger = log ? pipeline::Logger([&log](const std::string& s) {
                py::gil_scoped_acquire acquire;
                log(s);
            })
                                                : pipeline::Logger{};
            const std::optional<std::filesystem::path> counts_path =
                counts.is_none() ? std::nullopt : std::optional(counts.cast<std::filesystem::path>());
            json result;
            {
                py::gil_scoped_release release;
                if (stage == "synth") result = pipeline::synth(cfg, logger);
                else if (stage == "preprocess") result = pipeline::preprocess(cfg, logger);
                else if (stage == "train") result = pipeline::train(cfg, logger);
                else if (stage == "encode") result = pipeline::encode(cfg, logger);
                else if (stage == "cluster") result = pipeline::cluster(cfg, logger);
                else if (stage == "evaluate" && counts_path) result = pipeline::evaluate_counts(cfg, *counts_path, logger);
                else if (stage == "evaluate") result = pipeline::evaluate(cfg, logger);
                else if (stage == "embed") result = pipeline::embed(cfg, logger);
                else if (stage == "sweep") result = pipeline::sweep(cfg, logger);
                else if (stage == "run") result = pipeline::run_all(cfg, logger);
                else throw Error(ErrorKind::Usage, "unknown stage '" + stage + "'");
            }
            return to_python(result);
        },
        py::arg("stage"), py::arg("config") = py::none(), py::arg("counts") = py::none(), py::arg("log") = nullptr,
        "Run one pipeline stage; config is a dict, a path to a JSON file, or None for defaults.");
}
