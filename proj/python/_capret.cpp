#include "capret/captionsel.hpp"
#include "capret/errors.hpp"
#include "capret/evaluator.hpp"
#include "capret/sweep.hpp"
#include "capret/trainer.hpp"

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/operators.h>
#include <pybind11/stl/filesystem.h>

#include <map>

namespace py = pybind11;
using namespace capret;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const F64Array& a) {
    if (a.ndim() != 2) throw py::value_error("expected a 2-d array");
    Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), m.data().begin());
    return m;
}

Vec to_vec(const F64Array& a) {
    if (a.ndim() != 1) throw py::value_error("expected a 1-d array");
    return Vec(a.data(), a.data() + a.size());
}

py::array_t<double> from_matrix(const Matrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

py::array_t<double> from_vec(const Vec& v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

py::object json_loads(const std::string& s) { return py::module_::import("json").attr("loads")(s); }

std::string json_dumps(const py::object& o) { return py::module_::import("json").attr("dumps")(o).cast<std::string>(); }

}  // namespace

PYBIND11_MODULE(_capret, m) {
    m.doc() = "capret core bindings";

    // Python classes live as long as the interpreter; plain handles avoid
    // destructor ordering trouble at exit.
    static std::map<std::string, PyObject*> classes;
    PyObject* base = PyErr_NewException("capret._capret.CapretError", PyExc_RuntimeError, nullptr);
    m.attr("CapretError") = py::handle(base);
    for (const char* kind : {"FormatError", "DataError", "ShapeError", "MissingCaptionerError", "StatsUnavailable",
                             "EvalError", "EmptyDatasetError", "SpecError", "ConfigError", "IoError",
                             "EmptyBatchError", "DivergenceError"}) {
        PyObject* cls = PyErr_NewException((std::string("capret._capret.") + kind).c_str(), base, nullptr);
        m.attr(kind) = py::handle(cls);
        classes[kind] = cls;
    }
    classes[""] = base;
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            const auto it = classes.find(e.kind());
            PyErr_SetString(it == classes.end() ? classes.at("") : it->second, e.what());
        }
    });

    // embstore
    m.def("read_table", [](const fs::path& path) {
        const auto t = load_table(path);
        py::array_t<float> out({t.row_count(), static_cast<std::size_t>(t.dim())});
        std::copy(t.data().begin(), t.data().end(), out.mutable_data());
        return out;
    }, py::arg("path"), "Load an EMB1 table as a float32 (rows, dim) array.");
    m.def("write_table", [](const fs::path& path, py::array_t<float, py::array::c_style | py::array::forcecast> a) {
        if (a.ndim() != 2) throw py::value_error("expected a 2-d array");
        EmbeddingTable t(static_cast<std::uint32_t>(a.shape(1)), std::vector<float>(a.data(), a.data() + a.size()));
        write_table(t, path);
    }, py::arg("path"), py::arg("array"));

    py::class_<Dataset>(m, "Dataset")
        .def_property_readonly("name", &Dataset::name)
        .def_property_readonly("dim", &Dataset::dim)
        .def_property_readonly("video_ids", [](const Dataset& d) {
            std::vector<std::string> ids;
            for (const auto& v : d.manifest.videos) ids.push_back(v.video_id);
            return ids;
        })
        .def_property_readonly("captioners", &Dataset::captioner_labels)
        .def_property_readonly("caption_count", [](const Dataset& d) { return d.manifest.captions.size(); })
        .def("videos_in_split", [](const Dataset& d, const std::string& split) {
            std::vector<std::string> ids;
            for (auto i : d.videos_in_split(split)) ids.push_back(d.manifest.videos[i].video_id);
            return ids;
        })
        .def("frames", [](const Dataset& d, std::size_t i) { return from_matrix(d.video_frames(i)); })
        .def("write", [](const Dataset& d, const fs::path& dir) { return write_dataset(d, dir); });

    m.def("load_dataset", &load_dataset, py::arg("manifest"));
    m.def("synthesize", [](std::uint64_t seed, const py::dict& spec) {
        SynthSpec s;
        for (auto [k, v] : spec) {
            const auto key = k.cast<std::string>();
            if (key == "name") s.name = v.cast<std::string>();
            else if (key == "videos") s.videos = v.cast<int>();
            else if (key == "dim") s.dim = v.cast<int>();
            else if (key == "frames") s.frames = v.cast<int>();
            else if (key == "captions_per_captioner") s.captions_per_captioner = v.cast<int>();
            else if (key == "captioners") s.captioners = v.cast<std::vector<std::string>>();
            else if (key == "frame_noise") s.frame_noise = v.cast<double>();
            else if (key == "caption_noise") s.caption_noise = v.cast<double>();
            else if (key == "junk_fraction") s.junk_fraction = v.cast<double>();
            else if (key == "queries_per_video") s.queries_per_video = v.cast<int>();
            else if (key == "test_fraction") s.test_fraction = v.cast<double>();
            else if (key == "nuisance_rank") s.nuisance_rank = v.cast<int>();
            else if (key == "nuisance_share") s.nuisance_share = v.cast<double>();
            else if (key == "domain_seed") s.domain_seed = v.cast<std::uint64_t>();
            else throw ConfigError("unknown synth option '" + key + "'");
        }
        return synthesize(seed, s);
    }, py::arg("seed"), py::arg("spec") = py::dict());

    // captionsel / poolcore
    m.def("clipscore", [](const F64Array& a, const F64Array& b) { return compute_clipscore(to_vec(a), to_vec(b)); });
    m.def("qs_pool", [](const F64Array& frames, const F64Array& text, double tau) {
        const auto r = qs_pool(to_matrix(frames), to_vec(text), tau);
        return py::make_tuple(from_vec(r.pooled), from_vec(r.weights));
    }, py::arg("frames"), py::arg("text"), py::arg("tau") = 0.1);
    m.def("mcqs_similarity", [](const F64Array& frames, const F64Array& captions, double tau, const std::string& combine,
                                std::optional<F64Array> clipscores) {
        PoolingConfig pc;
        pc.tau = tau;
        pc.caption_combine = parse_caption_combine(combine);
        std::optional<Vec> cs;
        if (clipscores) cs = to_vec(*clipscores);
        std::optional<VecView> view;
        if (cs) view = VecView(*cs);
        return mcqs_similarity(to_matrix(frames), to_matrix(captions), pc, view);
    }, py::arg("frames"), py::arg("captions"), py::arg("tau") = 0.1, py::arg("combine") = "mean",
          py::arg("clipscores") = py::none());
    m.def("select", [](const Dataset& ds, const std::string& strategy, std::vector<std::string> captioners) {
        const auto s = resolve_strategy(SelectionStrategy::parse(strategy, std::move(captioners)), ds);
        py::dict out;
        for (const auto& pool : select_dataset(ds, s)) {
            py::list ids;
            for (const auto& r : pool.selected) ids.append(r.caption_id);
            out[py::str(pool.video_id)] = ids;
        }
        return out;
    }, py::arg("dataset"), py::arg("strategy") = "top2", py::arg("captioners") = std::vector<std::string>{});
    m.def("caption_stats", [](const Dataset& ds, const std::string& strategy) {
        return json_loads(caption_stats(ds, resolve_strategy(SelectionStrategy::parse(strategy), ds)).to_json());
    }, py::arg("dataset"), py::arg("strategy") = "top2");

    // trainer
    py::class_<ProjectionModel>(m, "ProjectionModel")
        .def_static("identity", &ProjectionModel::identity)
        .def_property_readonly("dim", &ProjectionModel::dim)
        .def_property_readonly("w_visual", [](const ProjectionModel& p) { return from_matrix(p.w_visual); })
        .def_property_readonly("b_visual", [](const ProjectionModel& p) { return from_vec(p.b_visual); })
        .def_property_readonly("w_text", [](const ProjectionModel& p) { return from_matrix(p.w_text); })
        .def_property_readonly("b_text", [](const ProjectionModel& p) { return from_vec(p.b_text); })
        .def("embed", [](const ProjectionModel& p, const F64Array& x, const std::string& modality) {
            if (modality != "visual" && modality != "text") throw py::value_error("modality must be visual or text");
            return from_vec(forward_embed(p, to_vec(x), modality == "visual" ? Modality::Visual : Modality::Text));
        }, py::arg("raw"), py::arg("modality"))
        .def("save", [](const ProjectionModel& p, const fs::path& path) { save_checkpoint(p, {}, path); })
        .def(py::self == py::self);
    m.def("load_checkpoint", [](const fs::path& p) { return load_checkpoint(p); });

    m.def("train", [](const std::vector<const Dataset*>& datasets, const py::dict& config,
                      std::optional<ProjectionModel> init) {
        const auto c = TrainConfig::from_json(json_dumps(config));
        std::vector<TrainInput> inputs;
        for (const auto* d : datasets) inputs.push_back({d, {}});
        TrainResult r;
        {
            py::gil_scoped_release release;
            r = train(inputs, c, std::move(init));
        }
        py::list log;
        for (const auto& e : r.log) log.append(json_loads(e.to_jsonl()));
        return py::make_tuple(r.model, log);
    }, py::arg("datasets"), py::arg("config") = py::dict(), py::arg("init") = py::none(),
          "Train on the union of the datasets' train splits. Returns (model, per-epoch log).");

    // evaluator
    m.def("evaluate", [](const ProjectionModel* model, const Dataset& ds, const std::string& mode, double tau,
                         const std::string& split) {
        PoolingConfig pc;
        pc.tau = tau;
        pc.eval_mode = parse_eval_mode(mode);
        return json_loads(evaluate(model, ds, pc.eval_mode, pc, kDefaultKs, split).to_json());
    }, py::arg("model"), py::arg("dataset"), py::arg("mode") = "qs", py::arg("tau") = 0.1, py::arg("split") = "test",
          "Retrieval metrics; pass model=None for the frozen backbone.");
    m.def("recall_at_k", [](const F64Array& sim, std::vector<std::string> row_ids, std::vector<std::string> col_ids,
                            std::map<std::string, std::string> gt, std::vector<int> ks) {
        SimilarityMatrix s{to_matrix(sim), std::move(row_ids), std::move(col_ids)};
        s.check();
        return json_loads(recall_at_k(s, gt, ks).to_json());
    }, py::arg("sim"), py::arg("row_ids"), py::arg("col_ids"), py::arg("gt"), py::arg("ks") = kDefaultKs);
    m.def("caption_bottleneck_eval", [](const Dataset& ds, int k) {
        return json_loads(caption_bottleneck_eval(ds, k).to_json());
    }, py::arg("dataset"), py::arg("k_select") = 2);

    m.def("run_sweep", [](const std::string& axis, const std::vector<const Dataset*>& datasets, const py::dict& config,
                          std::vector<std::uint64_t> seeds) {
        SweepOptions o;
        o.axis = axis;
        o.base = TrainConfig::from_json(json_dumps(config));
        o.seeds = std::move(seeds);
        SweepResult r;
        {
            py::gil_scoped_release release;
            r = run_sweep(o, datasets);
        }
        return py::make_tuple(r.csv, r.failures);
    }, py::arg("axis"), py::arg("datasets"), py::arg("config") = py::dict(),
          py::arg("seeds") = std::vector<std::uint64_t>{0});
}
