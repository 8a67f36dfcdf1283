#include "capret/captionsel.hpp"
#include "capret/errors.hpp"
#include "capret/evaluator.hpp"
#include "capret/sweep.hpp"
#include "capret/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <functional>
#include <iostream>
#include <map>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Options are bound to plain variables; the registry lets a JSON config file
// feed them before parsing and lets the resolved values be written back out.
struct Bound {
    std::string key;
    CLI::Option* opt = nullptr;
    std::function<json()> get;
    std::function<void(const json&)> set_flag;  // only for flags
};

struct Registry {
    std::map<const CLI::App*, std::vector<Bound>> entries;

    template <typename T>
    CLI::Option* add(CLI::App* app, const std::string& key, T& var, const std::string& desc) {
        auto* o = app->add_option("--" + key, var, desc);
        if constexpr (requires { var.push_back(var.front()); }) o->delimiter(',');
        o->capture_default_str();
        entries[app].push_back({key, o, [&var] { return json(var); }, {}});
        return o;
    }

    CLI::Option* flag(CLI::App* app, const std::string& key, bool& var, const std::string& desc) {
        auto* o = app->add_flag("--" + key, var, desc);
        entries[app].push_back({key, o, [&var] { return json(var); }, [&var](const json& j) {
                                    if (!j.is_boolean()) throw capret::ConfigError("'" + j.dump() + "' is not a boolean");
                                    var = j.get<bool>();
                                }});
        return o;
    }
};

std::string normalize_key(std::string k) {
    std::replace(k.begin(), k.end(), '_', '-');
    return k;
}

std::string value_string(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_array()) {
        std::string out;
        for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + value_string(v[i]);
        return out;
    }
    return v.dump();
}

void apply_section(Registry& reg, const CLI::App* app, const json& section, const std::string& where) {
    for (const auto& [raw_key, value] : section.items()) {
        if (value.is_object()) continue;  // subcommand sections are handled by the caller
        const std::string key = normalize_key(raw_key);
        auto& list = reg.entries[app];
        auto it = std::find_if(list.begin(), list.end(), [&](const Bound& b) { return b.key == key; });
        if (it == list.end() || key == "config") {
            throw capret::ConfigError("unknown config key '" + raw_key + "'" + where);
        }
        if (it->set_flag) {
            it->set_flag(value);
        } else if (!(value.is_array() && value.empty())) {
            it->opt->default_val(value_string(value));
        }
    }
}

void apply_config(Registry& reg, CLI::App& app, const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw capret::IoError("cannot read config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw capret::ConfigError(path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw capret::ConfigError(path.string() + ": config must be a JSON object");
    apply_section(reg, &app, j, "");
    for (const auto& [key, value] : j.items()) {
        if (!value.is_object()) continue;
        CLI::App* sub = nullptr;
        try {
            sub = app.get_subcommand(key);
        } catch (const CLI::OptionNotFound&) {
            throw capret::ConfigError("unknown config section '" + key + "'");
        }
        apply_section(reg, sub, value, " in section '" + key + "'");
    }
}

std::optional<std::string> find_config_arg(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) return argv[i + 1];
        if (a.rfind("--config=", 0) == 0) return a.substr(9);
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------

struct Globals {
    std::string config;
    std::uint64_t seed = 0;
    std::string out = "capret_out";
    int jobs = 1;
    bool table = false;
    bool to_stdout = false;
};

struct SynthOpts {
    capret::SynthSpec spec;
};

struct TrainOpts {
    std::vector<std::string> datasets;
    std::vector<std::string> selection_files;
    std::string strategy = "top2";
    std::vector<std::string> captioners;
    int batch_size = 32;
    int epochs = 10;
    double lr = 1e-2;
    double infonce_temperature = 0.05;
    bool literal_eq3 = false;
    int warmup_steps = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double tau = 0.1;
    std::string caption_combine = "mean";
    double weighted_temperature = 0.1;
    std::string temporal = "qs";
    bool single_caption = false;
    std::string init;
    bool eval_each_epoch = false;
    std::string gt_mode = "all";
};

struct EvalOpts {
    std::vector<std::string> datasets;
    std::string checkpoint;
    bool frozen = false;
    std::string mode = "qs";
    double tau = 0.1;
    std::string caption_combine = "mean";
    double weighted_temperature = 0.1;
    std::string split = "test";
    std::vector<int> ks{1, 5, 10};
    int bottleneck = 0;
    std::vector<std::string> captioners;
    std::vector<std::string> models;
};

struct SelectOpts {
    std::string dataset;
    std::string strategy = "top2";
    std::vector<std::string> captioners;
};

struct SweepOpts {
    std::string axis = "selection";
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> cells;
    bool keep_cells = false;
};

void add_pooling_options(Registry& r, CLI::App* app, double& tau, std::string& combine, double& wt) {
    r.add(app, "tau", tau, "query-scoring softmax temperature");
    r.add(app, "caption-combine", combine, "mean | weighted");
    r.add(app, "weighted-temperature", wt, "softmax temperature over CLIPScores for weighted combine");
}

void add_train_options(Registry& r, CLI::App* app, TrainOpts& t) {
    r.add(app, "dataset", t.datasets, "manifest.json or its directory (repeatable)");
    r.add(app, "strategy", t.strategy, "all | middle1 | top<K> | rand-top<K> | combined<K>");
    r.add(app, "captioners", t.captioners, "captioner labels (default: all in the data)");
    r.add(app, "batch-size", t.batch_size, "mini-batch size");
    r.add(app, "epochs", t.epochs, "training epochs");
    r.add(app, "lr", t.lr, "initial learning rate");
    r.add(app, "infonce-temperature", t.infonce_temperature, "logit temperature of the contrastive loss");
    r.flag(app, "literal-eq3", t.literal_eq3, "use raw similarities as logits (temperature 1)");
    r.add(app, "warmup-steps", t.warmup_steps, "linear warmup steps");
    r.add(app, "adam-beta1", t.adam_beta1, "Adam beta1");
    r.add(app, "adam-beta2", t.adam_beta2, "Adam beta2");
    r.add(app, "adam-eps", t.adam_eps, "Adam epsilon");
    add_pooling_options(r, app, t.tau, t.caption_combine, t.weighted_temperature);
    r.add(app, "temporal", t.temporal, "temporal pooling inside the loss: qs | mean");
    r.flag(app, "single-caption", t.single_caption, "draw one caption per step");
    r.flag(app, "eval-each-epoch", t.eval_each_epoch, "evaluate on the test split after every epoch");
}

capret::TrainConfig train_config(const TrainOpts& t, std::uint64_t seed) {
    capret::TrainConfig c;
    c.batch_size = t.batch_size;
    c.epochs = t.epochs;
    c.lr0 = t.lr;
    c.infonce_temperature = t.literal_eq3 ? 1.0 : t.infonce_temperature;
    c.warmup_steps = t.warmup_steps;
    c.adam_beta1 = t.adam_beta1;
    c.adam_beta2 = t.adam_beta2;
    c.adam_eps = t.adam_eps;
    c.seed = seed;
    c.pooling.tau = t.tau;
    c.pooling.caption_combine = capret::parse_caption_combine(t.caption_combine);
    c.pooling.weighted_temperature = t.weighted_temperature;
    c.temporal = capret::parse_temporal_pooling(t.temporal);
    c.strategy = capret::SelectionStrategy::parse(t.strategy, t.captioners);
    c.single_caption = t.single_caption;
    c.check();
    return c;
}

fs::path manifest_path(const std::string& p) {
    fs::path path(p);
    return fs::is_directory(path) ? path / "manifest.json" : path;
}

std::vector<capret::Dataset> load_all(const std::vector<std::string>& paths) {
    std::vector<capret::Dataset> out;
    for (const auto& p : paths) out.push_back(capret::load_dataset(manifest_path(p)));
    return out;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw capret::IoError("cannot write " + path.string());
    f << text;
    if (!f) throw capret::IoError("write failed for " + path.string());
}

struct Output {
    const Globals& g;
    fs::path dir;

    // Data goes to stdout only when --stdout is set.
    void data(const std::string& csv_or_text, bool is_csv = true) const {
        if (!g.to_stdout) return;
        std::cout << (g.table && is_csv ? capret::render_table(csv_or_text) : csv_or_text);
        std::cout.flush();
    }
};

capret::EpochHook eval_hook(const std::vector<capret::Dataset>& data, const capret::TrainConfig& c) {
    return [&data, c](int, const capret::ProjectionModel& m) {
        json j;
        for (const auto& ds : data) {
            const auto rep = capret::evaluate(&m, ds, capret::EvalMode::QS, c.pooling);
            j[ds.name()] = {{"t2v_R@1", rep.t2v.recall.at(1)}, {"v2t_R@1", rep.v2t.recall.at(1)}};
        }
        return j.dump();
    };
}

void write_training(const Output& out, const capret::TrainResult& r, const capret::TrainConfig& c) {
    std::string log;
    if (r.initial_eval_json) log += json{{"epoch", 0}, {"eval", json::parse(*r.initial_eval_json)}}.dump() + "\n";
    for (const auto& e : r.log) log += e.to_jsonl() + "\n";
    write_file(out.dir / "train_log.jsonl", log);
    capret::save_checkpoint(r.model, {c.hash(), static_cast<std::uint64_t>(r.steps)}, out.dir / "model.ckpt");
    std::cerr << "trained " << r.steps << " steps; final loss "
              << (r.log.empty() ? 0.0 : r.log.back().mean_loss) << "; wrote " << (out.dir / "model.ckpt").string()
              << "\n";
    out.data(log, false);
}

int run(int argc, char** argv) {
    CLI::App app{"capret: caption-supervised text-to-video retrieval"};
    app.require_subcommand(1);
    app.fallthrough();
    Registry reg;
    Globals g;
    app.add_option("--config", g.config, "JSON config file (flags override it)");
    reg.entries[&app].push_back({"config", nullptr, [&g] { return json(g.config); }, {}});
    reg.add(&app, "seed", g.seed, "run seed");
    reg.add(&app, "out", g.out, "output directory");
    reg.add(&app, "jobs", g.jobs, "parallel sweep cells");
    reg.flag(&app, "table", g.table, "render CSV output as an aligned table");
    reg.flag(&app, "stdout", g.to_stdout, "also print results on stdout");

    SynthOpts so;
    auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
    reg.add(synth, "name", so.spec.name, "dataset name");
    reg.add(synth, "videos", so.spec.videos, "number of videos");
    reg.add(synth, "dim", so.spec.dim, "embedding dimension");
    reg.add(synth, "frames", so.spec.frames, "frames per video");
    reg.add(synth, "captions-per-captioner", so.spec.captions_per_captioner, "captioned frames per video");
    reg.add(synth, "captioners", so.spec.captioners, "captioner labels");
    reg.add(synth, "frame-noise", so.spec.frame_noise, "frame jitter scale");
    reg.add(synth, "caption-noise", so.spec.caption_noise, "caption and query jitter scale");
    reg.add(synth, "junk-fraction", so.spec.junk_fraction, "probability that a caption is unrelated");
    reg.add(synth, "queries-per-video", so.spec.queries_per_video, "ground-truth queries per video");
    reg.add(synth, "test-fraction", so.spec.test_fraction, "share of videos in the test split");
    reg.add(synth, "nuisance-rank", so.spec.nuisance_rank, "rank of the per-modality jitter subspace");
    reg.add(synth, "nuisance-share", so.spec.nuisance_share, "share of jitter energy in that subspace");
    reg.add(synth, "domain-seed", so.spec.domain_seed, "seed of the shared embedding geometry");

    SelectOpts sel;
    auto* select_cmd = app.add_subcommand("select", "materialize a caption selection");
    reg.add(select_cmd, "dataset", sel.dataset, "manifest");
    reg.add(select_cmd, "strategy", sel.strategy, "selection strategy");
    reg.add(select_cmd, "captioners", sel.captioners, "captioner labels");

    TrainOpts to;
    auto* train_cmd = app.add_subcommand("train", "train projection heads");
    add_train_options(reg, train_cmd, to);
    reg.add(train_cmd, "selection-file", to.selection_files, "selection JSONL per dataset (same order)");
    reg.add(train_cmd, "init", to.init, "checkpoint to start from");

    TrainOpts fo;
    fo.strategy = "all";
    auto* ft_cmd = app.add_subcommand("finetune-gt", "finetune on ground-truth caption groups");
    add_train_options(reg, ft_cmd, fo);
    reg.add(ft_cmd, "init", fo.init, "checkpoint to start from (default: identity)");
    reg.add(ft_cmd, "gt-mode", fo.gt_mode, "all (joint MCQS) | single (one GT per step)");

    EvalOpts eo;
    auto* eval_cmd = app.add_subcommand("eval", "retrieval metrics");
    reg.add(eval_cmd, "dataset", eo.datasets, "manifest (repeatable)");
    reg.add(eval_cmd, "checkpoint", eo.checkpoint, "trained model");
    reg.flag(eval_cmd, "frozen-baseline", eo.frozen, "evaluate the untrained backbone");
    reg.add(eval_cmd, "mode", eo.mode, "mean | qs | mcqs");
    add_pooling_options(reg, eval_cmd, eo.tau, eo.caption_combine, eo.weighted_temperature);
    reg.add(eval_cmd, "split", eo.split, "train | test | all");
    reg.add(eval_cmd, "ks", eo.ks, "recall cutoffs");
    reg.add(eval_cmd, "bottleneck", eo.bottleneck, "caption-bottleneck baseline with K captions (0 = off)");
    reg.add(eval_cmd, "captioners", eo.captioners, "captioners for the bottleneck baseline");

    EvalOpts co;
    auto* cross_cmd = app.add_subcommand("cross-eval", "evaluate every model on every dataset");
    reg.add(cross_cmd, "dataset", co.datasets, "manifest (repeatable)");
    reg.add(cross_cmd, "model", co.models, "NAME=CHECKPOINT (repeatable)");
    reg.add(cross_cmd, "mode", co.mode, "mean | qs | mcqs");
    add_pooling_options(reg, cross_cmd, co.tau, co.caption_combine, co.weighted_temperature);

    SelectOpts st;
    st.strategy = "top2";
    auto* stats_cmd = app.add_subcommand("stats", "caption statistics");
    reg.add(stats_cmd, "dataset", st.dataset, "manifest");
    reg.add(stats_cmd, "strategy", st.strategy, "selection strategy");
    reg.add(stats_cmd, "captioners", st.captioners, "captioner labels");

    TrainOpts wo;
    SweepOpts sw;
    auto* sweep_cmd = app.add_subcommand("sweep", "ablation grids");
    add_train_options(reg, sweep_cmd, wo);
    reg.add(sweep_cmd, "axis", sw.axis, "selection | captioners | pooling | datasets | cross");
    reg.add(sweep_cmd, "seeds", sw.seeds, "seed list (default: --seed)");
    reg.add(sweep_cmd, "cells", sw.cells, "restrict to these cell labels");
    reg.flag(sweep_cmd, "keep-cells", sw.keep_cells, "keep per-cell logs and checkpoints");

    if (auto cfg = find_config_arg(argc, argv)) apply_config(reg, app, *cfg);
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return static_cast<int>(capret::ErrorClass::Config);
    }

    CLI::App* active = app.get_subcommands().front();
    Output out{g, fs::path(g.out)};
    fs::create_directories(out.dir);

    json resolved;
    for (const auto& b : reg.entries[&app]) {
        if (b.key != "config") resolved[b.key] = b.get();
    }
    json section;
    for (const auto& b : reg.entries[active]) section[b.key] = b.get();
    resolved[active->get_name()] = section;
    write_file(out.dir / "resolved_config.json", resolved.dump(2) + "\n");

    const std::string name = active->get_name();
    auto need = [](bool ok, const char* what) {
        if (!ok) throw capret::ConfigError(std::string(what) + " is required");
    };
    if (name == "select") need(!sel.dataset.empty(), "--dataset");
    if (name == "stats") need(!st.dataset.empty(), "--dataset");
    if (name == "train") need(!to.datasets.empty(), "--dataset");
    if (name == "finetune-gt") need(!fo.datasets.empty(), "--dataset");
    if (name == "eval") need(!eo.datasets.empty(), "--dataset");
    if (name == "cross-eval") need(!co.datasets.empty(), "--dataset");
    if (name == "sweep") need(!wo.datasets.empty(), "--dataset");
    if (name == "synth") {
        const auto path = capret::synthesize_to(g.seed, so.spec, out.dir);
        const auto ds = capret::load_dataset(path);
        json summary{{"manifest", path.string()},
                     {"videos", ds.manifest.videos.size()},
                     {"captions", ds.manifest.captions.size()},
                     {"queries", ds.manifest.queries.size()},
                     {"dim", ds.dim()},
                     {"train_videos", ds.videos_in_split("train").size()},
                     {"test_videos", ds.videos_in_split("test").size()}};
        std::cerr << "wrote " << path.string() << " (" << ds.manifest.videos.size() << " videos, "
                  << ds.manifest.captions.size() << " captions, dim " << ds.dim() << ")\n";
        out.data(summary.dump(2) + "\n", false);
    } else if (name == "select") {
        const auto ds = capret::load_dataset(manifest_path(sel.dataset));
        const auto strategy = capret::resolve_strategy(capret::SelectionStrategy::parse(sel.strategy, sel.captioners), ds);
        const auto pools = capret::select_dataset(ds, strategy);
        std::size_t warnings = 0;
        for (const auto& p : pools) {
            for (const auto& w : p.warnings) {
                std::cerr << "warning: " << w << "\n";
                ++warnings;
            }
        }
        capret::write_selection(pools, out.dir / "selection.jsonl");
        std::cerr << "selected captions for " << pools.size() << " videos (" << strategy.name() << ", " << warnings
                  << " warnings)\n";
        if (g.to_stdout) {
            std::ifstream in(out.dir / "selection.jsonl");
            std::cout << in.rdbuf();
        }
    } else if (name == "train") {
        const auto c = train_config(to, g.seed);
        const auto data = load_all(to.datasets);
        if (!to.selection_files.empty() && to.selection_files.size() != data.size()) {
            throw capret::ConfigError("give one --selection-file per --dataset");
        }
        std::vector<capret::TrainInput> inputs;
        for (std::size_t i = 0; i < data.size(); ++i) {
            capret::TrainInput in{&data[i], {}};
            if (!to.selection_files.empty()) in.pools = capret::read_selection(data[i], to.selection_files[i]);
            inputs.push_back(std::move(in));
        }
        std::optional<capret::ProjectionModel> init;
        if (!to.init.empty()) init = capret::load_checkpoint(to.init);
        const auto r = capret::train(inputs, c, init, to.eval_each_epoch ? eval_hook(data, c) : capret::EpochHook{});
        write_training(out, r, c);
    } else if (name == "finetune-gt") {
        if (fo.gt_mode != "all" && fo.gt_mode != "single") throw capret::ConfigError("--gt-mode must be all or single");
        const auto c = train_config(fo, g.seed);
        const auto data = load_all(fo.datasets);
        if (data.size() != 1) throw capret::ConfigError("finetune-gt takes exactly one --dataset");
        const auto init = fo.init.empty() ? capret::ProjectionModel::identity(data[0].dim())
                                          : capret::load_checkpoint(fo.init);
        const auto r = capret::finetune_gt(init, data[0], c, fo.gt_mode == "all",
                                           fo.eval_each_epoch ? eval_hook(data, c) : capret::EpochHook{});
        write_training(out, r, c);
    } else if (name == "eval") {
        if (eo.bottleneck == 0 && eo.frozen == !eo.checkpoint.empty()) {
            throw capret::ConfigError("give exactly one of --checkpoint or --frozen-baseline");
        }
        const auto data = load_all(eo.datasets);
        std::optional<capret::ProjectionModel> model;
        if (!eo.checkpoint.empty()) model = capret::load_checkpoint(eo.checkpoint);
        capret::PoolingConfig pc{eo.tau, capret::parse_caption_combine(eo.caption_combine), eo.weighted_temperature,
                                 capret::parse_eval_mode(eo.mode)};
        json reports = json::array();
        std::string csv;
        for (const auto& ds : data) {
            const auto rep = eo.bottleneck > 0
                                 ? capret::caption_bottleneck_eval(ds, eo.bottleneck, eo.captioners, eo.ks, eo.split)
                                 : capret::evaluate(model ? &*model : nullptr, ds, pc.eval_mode, pc, eo.ks, eo.split);
            reports.push_back(json::parse(rep.to_json()));
            csv += rep.to_csv(csv.empty());
        }
        write_file(out.dir / "eval.json", reports.dump(2) + "\n");
        write_file(out.dir / "eval.csv", csv);
        out.data(csv);
    } else if (name == "cross-eval") {
        const auto data = load_all(co.datasets);
        std::vector<std::pair<std::string, capret::ProjectionModel>> models;
        for (const auto& spec : co.models) {
            const auto eq = spec.find('=');
            if (eq == std::string::npos || eq == 0) throw capret::ConfigError("--model expects NAME=CHECKPOINT, got " + spec);
            models.emplace_back(spec.substr(0, eq), capret::load_checkpoint(spec.substr(eq + 1)));
        }
        std::vector<std::pair<std::string, const capret::Dataset*>> named;
        for (const auto& ds : data) named.emplace_back(ds.name(), &ds);
        capret::PoolingConfig pc{co.tau, capret::parse_caption_combine(co.caption_combine), co.weighted_temperature,
                                 capret::parse_eval_mode(co.mode)};
        const auto grid = capret::cross_eval(models, named, pc.eval_mode, pc);
        const auto csv = grid.to_csv();
        write_file(out.dir / "cross_eval.csv", csv);
        out.data(csv);
    } else if (name == "stats") {
        const auto ds = capret::load_dataset(manifest_path(st.dataset));
        const auto strategy = capret::resolve_strategy(capret::SelectionStrategy::parse(st.strategy, st.captioners), ds);
        const auto rep = capret::caption_stats(ds, strategy);
        write_file(out.dir / "stats.json", rep.to_json() + "\n");
        for (const auto& u : rep.unavailable) std::cerr << "unavailable: " << u << "\n";
        if (g.to_stdout) std::cout << (g.table ? rep.to_table() : rep.to_json() + "\n");
    } else if (name == "sweep") {
        const auto data = load_all(wo.datasets);
        std::vector<const capret::Dataset*> ptrs;
        for (const auto& d : data) ptrs.push_back(&d);
        capret::SweepOptions opt;
        opt.axis = sw.axis;
        opt.base = train_config(wo, g.seed);
        opt.seeds = sw.seeds.empty() ? std::vector<std::uint64_t>{g.seed} : sw.seeds;
        opt.jobs = g.jobs;
        opt.cells = sw.cells;
        if (sw.keep_cells) opt.cell_dir = out.dir / ("cells_" + sw.axis);
        const auto res = capret::run_sweep(opt, ptrs);
        write_file(out.dir / ("sweep_" + sw.axis + ".csv"), res.csv);
        out.data(res.csv);
        std::cerr << "sweep " << sw.axis << ": " << res.cells << " cells x " << opt.seeds.size() << " seeds, "
                  << res.failures.size() << " failed\n";
        for (const auto& f : res.failures) std::cerr << "failed: " << f << "\n";
        if (!res.failures.empty()) return static_cast<int>(capret::ErrorClass::Runtime);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const capret::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.error_class());
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(capret::ErrorClass::Config);
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error (IoError): " << e.what() << "\n";
        return static_cast<int>(capret::ErrorClass::Runtime);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(capret::ErrorClass::Runtime);
    }
}
