#include "capret/sweep.hpp"

#include "capret/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <set>
#include <thread>

namespace capret {

std::vector<std::string> sweep_axes() { return {"selection", "captioners", "pooling", "datasets", "cross"}; }

namespace {

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
    return out;
}

// One caption drawn per step from the chosen pool.
TrainConfig single(const TrainConfig& base, const std::string& strategy, std::vector<std::string> caps) {
    TrainConfig c = base;
    c.strategy = SelectionStrategy::parse(strategy, std::move(caps));
    c.single_caption = true;
    return c;
}

std::vector<SweepCell> per_dataset(const std::vector<SweepCell>& proto, std::size_t n) {
    std::vector<SweepCell> out;
    for (const auto& p : proto) {
        for (std::size_t d = 0; d < n; ++d) {
            SweepCell c = p;
            if (c.config) c.train_datasets = {d};
            c.eval_datasets = {d};
            out.push_back(std::move(c));
        }
    }
    return out;
}

}  // namespace

std::vector<SweepCell> plan_sweep(const SweepOptions& o, const std::vector<const Dataset*>& datasets) {
    o.base.check();
    if (datasets.empty()) throw ConfigError("sweep needs at least one dataset");
    const std::size_t n = datasets.size();
    std::vector<std::string> caps = o.base.strategy.captioners;
    if (caps.empty()) caps = datasets[0]->captioner_labels();
    if (caps.empty()) throw ConfigError("sweep needs at least one captioner");

    std::vector<SweepCell> proto;
    const auto train_name = to_string(o.base.temporal);
    if (o.axis == "selection") {
        const auto& m = datasets[0]->manifest.captioned_frames;
        const std::string all_label = "Rand(" + (m ? std::to_string(*m) : std::string("All")) + ")";
        for (const auto& cap : caps) {
            const std::vector<std::string> one{cap};
            proto.push_back({cap, all_label, train_name, single(o.base, "all", one), {}, {}, EvalMode::QS});
            proto.push_back({cap, "Middle 1", train_name, single(o.base, "middle1", one), {}, {}, EvalMode::QS});
            proto.push_back({cap, "Top 1", train_name, single(o.base, "top1", one), {}, {}, EvalMode::QS});
            proto.push_back({cap, "Rand(Top 2)", train_name, single(o.base, "rand-top2", one), {}, {}, EvalMode::QS});
            proto.push_back({cap, "Rand(Top 3)", train_name, single(o.base, "rand-top3", one), {}, {}, EvalMode::QS});
        }
    } else if (o.axis == "captioners") {
        const int k = o.base.strategy.k;
        for (const auto& cap : caps) {
            proto.push_back({"single", cap, train_name, single(o.base, "rand-top" + std::to_string(k), {cap}), {}, {},
                             EvalMode::QS});
        }
        if (caps.size() > 1) {
            const auto both = join(caps, "+");
            proto.push_back({"combined", both + " Top " + std::to_string(k) + " each", train_name,
                             single(o.base, "rand-top" + std::to_string(k), caps), {}, {}, EvalMode::QS});
            const int total = k * static_cast<int>(caps.size());
            proto.push_back({"combined", both + " Top " + std::to_string(total) + " of all", train_name,
                             single(o.base, "combined" + std::to_string(total), caps), {}, {}, EvalMode::QS});
        }
    } else if (o.axis == "pooling") {
        TrainConfig joint = o.base;
        joint.strategy = SelectionStrategy::parse("top" + std::to_string(o.base.strategy.k), caps);
        joint.single_caption = false;
        joint.temporal = TemporalPooling::QS;
        TrainConfig rand_mean = joint;
        rand_mean.single_caption = true;
        rand_mean.temporal = TemporalPooling::Mean;
        TrainConfig rand_qs = rand_mean;
        rand_qs.temporal = TemporalPooling::QS;
        TrainConfig weighted = joint;
        weighted.pooling.caption_combine = CaptionCombine::WeightedByClipScore;
        TrainConfig mean = joint;
        mean.pooling.caption_combine = CaptionCombine::Mean;
        const std::string l = std::to_string(o.base.strategy.k * static_cast<int>(caps.size()));
        proto.push_back({"baseline", "Frozen", "-", std::nullopt, {}, {}, EvalMode::MeanPool});
        proto.push_back({"baseline", "Frozen", "-", std::nullopt, {}, {}, EvalMode::QS});
        proto.push_back({"single", "Rand(" + l + ")", "mean", rand_mean, {}, {}, EvalMode::MeanPool});
        proto.push_back({"single", "Rand(" + l + ")", "mean", rand_mean, {}, {}, EvalMode::QS});
        proto.push_back({"single", "Rand(" + l + ")", "qs", rand_qs, {}, {}, EvalMode::QS});
        proto.push_back({"multi", "Weighted(" + l + ")", "mcqs", weighted, {}, {}, EvalMode::QS});
        proto.push_back({"multi", "Mean(" + l + ")", "mcqs", mean, {}, {}, EvalMode::QS});
    } else if (o.axis == "datasets") {
        if (n < 2) throw ConfigError("the datasets axis needs at least two datasets");
        proto = per_dataset({{"baseline", "Frozen", "-", std::nullopt, {}, {}, EvalMode::QS},
                             {"ours", "Self", train_name, o.base, {}, {}, EvalMode::QS}},
                            n);
        proto.push_back({"ours", "Combined", train_name, o.base, all_indices(n), all_indices(n), EvalMode::QS});
    } else if (o.axis == "cross") {
        proto.push_back({"baseline", "Frozen", "-", std::nullopt, {}, all_indices(n), EvalMode::QS});
        for (std::size_t d = 0; d < n; ++d) {
            proto.push_back({"trained", datasets[d]->name(), train_name, o.base, {d}, all_indices(n), EvalMode::QS});
        }
    } else {
        throw ConfigError("unknown sweep axis '" + o.axis + "' (expected " + join(sweep_axes(), ", ") + ")");
    }

    std::vector<SweepCell> cells =
        (o.axis == "selection" || o.axis == "captioners" || o.axis == "pooling") ? per_dataset(proto, n) : proto;
    if (!o.cells.empty()) {
        std::set<std::string> known;
        for (const auto& c : cells) known.insert(c.label);
        for (const auto& want : o.cells) {
            if (!known.count(want)) throw ConfigError("unknown sweep cell '" + want + "'");
        }
        std::erase_if(cells, [&](const SweepCell& c) {
            return std::find(o.cells.begin(), o.cells.end(), c.label) == o.cells.end();
        });
    }
    return cells;
}

namespace {

struct Outcome {
    std::vector<EvalReport> reports;  // one per eval dataset
    std::string error;
};

Outcome run_cell(const SweepCell& cell, std::uint64_t seed, const std::vector<const Dataset*>& datasets,
                 const PoolingConfig& base_pooling, const std::optional<fs::path>& dir) {
    Outcome out;
    try {
        std::optional<ProjectionModel> model;
        PoolingConfig eval_pooling = base_pooling;
        if (cell.config) {
            TrainConfig c = *cell.config;
            c.seed = seed;
            eval_pooling = c.pooling;
            eval_pooling.caption_combine = CaptionCombine::Mean;
            std::vector<TrainInput> inputs;
            for (auto d : cell.train_datasets) inputs.push_back({datasets[d], {}});
            auto r = train(inputs, c);
            if (dir) {
                fs::create_directories(*dir);
                std::ofstream log(*dir / "train_log.jsonl");
                for (const auto& e : r.log) log << e.to_jsonl() << '\n';
                save_checkpoint(r.model, {c.hash(), static_cast<std::uint64_t>(r.steps)}, *dir / "model.ckpt");
            }
            model = std::move(r.model);
        }
        for (auto d : cell.eval_datasets) {
            out.reports.push_back(evaluate(model ? &*model : nullptr, *datasets[d], cell.eval_mode, eval_pooling));
        }
    } catch (const std::exception& e) {
        out.reports.clear();
        out.error = e.what();
    }
    return out;
}

std::string f6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string csv_field(std::string s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c == '\n' ? ' ' : c);
    return q + "\"";
}

std::string metrics_fields(const EvalReport& r) {
    std::string out;
    for (const auto* m : {&r.t2v, &r.v2t}) {
        for (int k : kDefaultKs) out += "," + f6(m->recall.at(k));
    }
    return out + "," + f6(r.t2v.median_rank);
}

}  // namespace

SweepResult run_sweep(const SweepOptions& o, const std::vector<const Dataset*>& datasets) {
    const auto cells = plan_sweep(o, datasets);
    if (o.seeds.empty()) throw ConfigError("sweep needs at least one seed");
    if (o.jobs < 1) throw ConfigError("--jobs must be >= 1");

    struct Task {
        std::size_t cell;
        std::size_t seed;
    };
    std::vector<Task> tasks;
    for (std::size_t c = 0; c < cells.size(); ++c)
        for (std::size_t s = 0; s < o.seeds.size(); ++s) tasks.push_back({c, s});
    std::vector<Outcome> outcomes(tasks.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t t; (t = next.fetch_add(1)) < tasks.size();) {
            const auto& task = tasks[t];
            std::optional<fs::path> dir;
            if (o.cell_dir) {
                dir = *o.cell_dir / ("cell" + std::to_string(task.cell) + "_seed" + std::to_string(o.seeds[task.seed]));
            }
            outcomes[t] = run_cell(cells[task.cell], o.seeds[task.seed], datasets, o.base.pooling, dir);
        }
    };
    const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(o.jobs), tasks.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    SweepResult res;
    res.cells = cells.size();
    res.csv = "axis,block,cell,train,eval_mode,dataset,seed,t2v_R@1,t2v_R@5,t2v_R@10,v2t_R@1,v2t_R@5,v2t_R@10,"
              "t2v_median_rank,status\n";
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const auto& cell = cells[c];
        const std::string prefix = o.axis + "," + csv_field(cell.block) + "," + csv_field(cell.label) + "," +
                                   cell.train + "," + to_string(cell.eval_mode) + ",";
        for (std::size_t e = 0; e < cell.eval_datasets.size(); ++e) {
            const auto& dname = datasets[cell.eval_datasets[e]]->name();
            std::vector<const EvalReport*> ok;
            for (std::size_t s = 0; s < o.seeds.size(); ++s) {
                const Outcome& out = outcomes[c * o.seeds.size() + s];
                res.csv += prefix + csv_field(dname) + "," + std::to_string(o.seeds[s]);
                if (out.error.empty()) {
                    res.csv += metrics_fields(out.reports[e]) + ",ok\n";
                    ok.push_back(&out.reports[e]);
                } else {
                    res.csv += ",,,,,,,," + csv_field("failed: " + out.error) + "\n";
                    if (e == 0) res.failures.push_back(cell.label + " seed " + std::to_string(o.seeds[s]) + ": " + out.error);
                }
            }
            if (o.seeds.size() > 1 && !ok.empty()) {
                EvalReport mean = *ok[0];
                for (auto* m : {&mean.t2v, &mean.v2t}) {
                    for (auto& [k, v] : m->recall) v = 0.0;
                    m->median_rank = 0.0;
                }
                for (const auto* r : ok) {
                    for (int k : kDefaultKs) {
                        mean.t2v.recall[k] += r->t2v.recall.at(k) / static_cast<double>(ok.size());
                        mean.v2t.recall[k] += r->v2t.recall.at(k) / static_cast<double>(ok.size());
                    }
                    mean.t2v.median_rank += r->t2v.median_rank / static_cast<double>(ok.size());
                }
                res.csv += prefix + csv_field(dname) + ",mean" + metrics_fields(mean) +
                           (ok.size() == o.seeds.size() ? ",ok\n" : ",partial\n");
            }
        }
    }
    return res;
}

}  // namespace capret
