#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "capret/errors.hpp"
#include "capret/sweep.hpp"

#include "../support/oracles.hpp"

#include <sstream>

using namespace capret;

namespace {

SynthSpec spec(const std::string& name, int videos = 24) {
    SynthSpec s;
    s.name = name;
    s.videos = videos;
    s.dim = 8;
    s.frames = 3;
    s.captions_per_captioner = 4;
    return s;
}

TrainConfig quick() {
    TrainConfig c;
    c.epochs = 2;
    c.batch_size = 8;
    return c;
}

std::vector<std::vector<std::string>> rows(const std::string& csv) {
    std::vector<std::vector<std::string>> out;
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::string field;
        std::istringstream ls(line);
        while (std::getline(ls, field, ',')) f.push_back(field);
        out.push_back(f);
    }
    return out;
}

std::string f6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

TEST_CASE("selection axis mirrors the caption selection table") {
    const auto ds = synthesize(1, spec("a"));
    SweepOptions o;
    o.axis = "selection";
    o.base = quick();
    o.base.strategy.captioners = {"C"};
    const auto cells = plan_sweep(o, {&ds});
    std::vector<std::string> labels;
    for (const auto& c : cells) labels.push_back(c.label);
    CHECK(labels == std::vector<std::string>{"Rand(4)", "Middle 1", "Top 1", "Rand(Top 2)", "Rand(Top 3)"});
    for (const auto& c : cells) CHECK(c.config->single_caption);

    const auto res = run_sweep(o, {&ds});
    const auto r = rows(res.csv);
    CHECK(r.size() == 6);
    CHECK(r[0][0] == "axis");
    CHECK(r[1][2] == "Rand(4)");
    CHECK(r[5][2] == "Rand(Top 3)");
    CHECK(res.failures.empty());
}

TEST_CASE("pooling axis has the multi-caption block") {
    const auto ds = synthesize(1, spec("a"));
    SweepOptions o;
    o.axis = "pooling";
    o.base = quick();
    const auto cells = plan_sweep(o, {&ds});
    REQUIRE(cells.size() == 7);
    CHECK(cells[4].label == "Rand(4)");
    CHECK(cells[5].label == "Weighted(4)");
    CHECK(cells[6].label == "Mean(4)");
    CHECK(cells[6].config->pooling.caption_combine == CaptionCombine::Mean);
    CHECK(cells[5].config->pooling.caption_combine == CaptionCombine::WeightedByClipScore);
    CHECK_FALSE(cells[6].config->single_caption);
}

TEST_CASE("a single-cell sweep equals a direct train and evaluate") {
    const auto ds = synthesize(2, spec("a"));
    SweepOptions o;
    o.axis = "pooling";
    o.base = quick();
    o.cells = {"Mean(4)"};
    o.seeds = {5};
    const auto res = run_sweep(o, {&ds});
    const auto r = rows(res.csv);
    REQUIRE(r.size() == 2);

    TrainConfig c = quick();
    c.seed = 5;
    c.strategy = SelectionStrategy::parse("top2", {"B", "C"});
    const auto model = train({{&ds, {}}}, c).model;
    const auto rep = evaluate(&model, ds, EvalMode::QS, c.pooling);
    CHECK(r[1][7] == f6(rep.t2v.recall.at(1)));
    CHECK(r[1][8] == f6(rep.t2v.recall.at(5)));
    CHECK(r[1][10] == f6(rep.v2t.recall.at(1)));
    CHECK(r[1][13] == f6(rep.t2v.median_rank));
    CHECK(r[1][14] == "ok");
}

TEST_CASE("sweeps are deterministic and independent of job count") {
    const auto a = synthesize(3, spec("a")), b = synthesize(4, spec("b", 16));
    SweepOptions o;
    o.axis = "datasets";
    o.base = quick();
    o.seeds = {1, 2};
    const auto one = run_sweep(o, {&a, &b});
    o.jobs = 4;
    const auto four = run_sweep(o, {&a, &b});
    CHECK(one.csv == four.csv);
    CHECK(one.csv == run_sweep(o, {&a, &b}).csv);
    // 2 datasets x (Frozen, Self) + Combined evaluated on both, each with 2 seeds and a mean row.
    CHECK(rows(one.csv).size() == 1 + 6 * 3);
}

TEST_CASE("failed cells are recorded and the sweep continues") {
    const auto a = synthesize(3, spec("a"));
    auto only_c = spec("c_only");
    only_c.captioners = {"C"};
    const auto b = synthesize(4, only_c);
    SweepOptions o;
    o.axis = "selection";
    o.base = quick();
    const auto res = run_sweep(o, {&a, &b});
    // Captioner B is missing from the second dataset: its five cells fail there.
    CHECK(res.failures.size() == 5);
    std::size_t ok = 0, failed = 0;
    for (const auto& r : rows(res.csv)) {
        if (r.back() == "ok") ++ok;
        if (r.back().rfind("failed: MissingCaptionerError", 0) == 0) ++failed;
    }
    CHECK(ok == 15);
    CHECK(failed == 5);
}

TEST_CASE("cell artifacts") {
    const auto a = synthesize(3, spec("a"));
    oracle::TempDir dir("sweep_cells");
    SweepOptions o;
    o.axis = "pooling";
    o.base = quick();
    o.cells = {"Mean(4)"};
    o.cell_dir = dir.path;
    run_sweep(o, {&a});
    CHECK(fs::exists(dir.path / "cell0_seed0" / "model.ckpt"));
    CHECK(fs::exists(dir.path / "cell0_seed0" / "train_log.jsonl"));
}

TEST_CASE("plan errors") {
    const auto a = synthesize(3, spec("a"));
    SweepOptions o;
    o.base = quick();
    o.axis = "nope";
    CHECK_THROWS_AS(plan_sweep(o, {&a}), ConfigError);
    o.axis = "datasets";
    CHECK_THROWS_AS(plan_sweep(o, {&a}), ConfigError);
    o.axis = "pooling";
    o.cells = {"Mean(99)"};
    CHECK_THROWS_AS(plan_sweep(o, {&a}), ConfigError);
    o.cells.clear();
    CHECK_THROWS_AS(plan_sweep(o, {}), ConfigError);
    o.seeds.clear();
    CHECK_THROWS_AS(run_sweep(o, {&a}), ConfigError);
    CHECK(sweep_axes().size() == 5);
}

TEST_CASE("cross axis evaluates every trained row on every dataset") {
    const auto a = synthesize(3, spec("a")), b = synthesize(4, spec("b"));
    SweepOptions o;
    o.axis = "cross";
    o.base = quick();
    const auto cells = plan_sweep(o, {&a, &b});
    REQUIRE(cells.size() == 3);
    CHECK(cells[0].label == "Frozen");
    CHECK(cells[1].train_datasets == std::vector<std::size_t>{0});
    CHECK(cells[2].eval_datasets == std::vector<std::size_t>{0, 1});
    CHECK(rows(run_sweep(o, {&a, &b}).csv).size() == 1 + 3 * 2);
}
