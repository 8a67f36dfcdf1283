#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "capret/captionsel.hpp"
#include "capret/errors.hpp"

#include "../support/oracles.hpp"

#include <cmath>
#include <set>

using namespace capret;

namespace {

CaptionRecord rec(const std::string& captioner, int frame, double score, const std::string& video = "v0") {
    CaptionRecord r;
    r.video_id = video;
    r.captioner = captioner;
    r.frame_index = frame;
    r.clipscore = score;
    r.caption_id = video + ":" + captioner + ":" + std::to_string(frame);
    return r;
}

std::vector<int> frames_of(const CaptionPool& p) {
    std::vector<int> out;
    for (const auto& r : p.selected) out.push_back(r.frame_index);
    return out;
}

std::set<std::string> ids_of(const std::vector<CaptionRecord>& rs) {
    std::set<std::string> out;
    for (const auto& r : rs) out.insert(r.caption_id);
    return out;
}

SelectionStrategy strat(SelectionKind kind, int k, std::vector<std::string> caps) {
    SelectionStrategy s;
    s.kind = kind;
    s.k = k;
    s.captioners = std::move(caps);
    return s;
}

// Full-sort reference for "top K by (score desc, frame asc, id asc)".
std::vector<CaptionRecord> oracle_top(std::vector<CaptionRecord> rs, std::size_t k) {
    std::sort(rs.begin(), rs.end(), [](const auto& a, const auto& b) {
        return std::tie(b.clipscore, a.frame_index, a.caption_id) < std::tie(a.clipscore, b.frame_index, b.caption_id);
    });
    rs.resize(std::min(k, rs.size()));
    return rs;
}

// Pool with coarse scores so ties are common.
std::vector<CaptionRecord> random_pool(Rng& rng, const std::vector<std::string>& caps, int m) {
    std::vector<CaptionRecord> pool;
    for (const auto& c : caps)
        for (int f = 0; f < m; ++f) pool.push_back(rec(c, f, 0.25 * static_cast<double>(rng.index(6))));
    rng.shuffle(pool);
    return pool;
}

Dataset stats_dataset(const std::vector<std::vector<CaptionRecord>>& per_video) {
    Dataset ds;
    ds.frames = EmbeddingTable(2, {1, 0});
    ds.captions = EmbeddingTable(2);
    ds.queries = EmbeddingTable(2);
    ds.manifest.name = "hand";
    for (std::size_t v = 0; v < per_video.size(); ++v) {
        VideoEntry e;
        e.video_id = per_video[v].front().video_id;
        e.frame_rows = {0};
        ds.manifest.videos.push_back(e);
        for (auto r : per_video[v]) {
            r.embedding_row = ds.captions.append(Vec{1.0, 0.5});
            ds.manifest.captions.push_back(r);
        }
    }
    return ds;
}

}  // namespace

TEST_CASE("clipscore") {
    CHECK(compute_clipscore(Vec{1, 0, 0}, Vec{1, 0, 0}) == 2.5);
    CHECK(compute_clipscore(Vec{1, 0}, Vec{0, 1}) == 0.0);
    CHECK(compute_clipscore(Vec{1, 0}, Vec{-1, 0}) == 0.0);
    CHECK(text_clipscore(Vec{0.3, 0.4}, Vec{0.3, 0.4}) == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(text_clipscore(Vec{1, 0}, Vec{0, 2}) == 0.0);
    // cos = 0.8 by construction
    CHECK(text_clipscore(Vec{1, 0}, Vec{0.8, 0.6}) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK_THROWS_AS(compute_clipscore(Vec{0, 0}, Vec{1, 0}), DataError);
    CHECK_THROWS_AS(compute_clipscore(Vec{1, 0}, Vec{1, 0, 0}), ShapeError);
}

TEST_CASE("clipscore range and scale invariance") {
    Rng rng(4);
    for (int t = 0; t < 200; ++t) {
        const std::size_t d = 1 + rng.index(10);
        Vec x(d), y(d);
        for (auto& v : x) v = rng.normal();
        for (auto& v : y) v = rng.normal();
        const double s = compute_clipscore(x, y);
        CHECK(s >= 0.0);
        CHECK(s <= 2.5);
        const double a = 0.01 + 10 * rng.uniform(), b = 0.01 + 10 * rng.uniform();
        Vec ax = x, by = y;
        for (auto& v : ax) v *= a;
        for (auto& v : by) v *= b;
        CHECK(compute_clipscore(ax, by) == doctest::Approx(s).epsilon(1e-12));
        CHECK(s == doctest::Approx(2.5 * std::max(oracle::cos_raw(x, y), 0.0)).epsilon(1e-12));
    }
}

TEST_CASE("strategy parsing") {
    CHECK(SelectionStrategy::parse("all").kind == SelectionKind::All);
    CHECK(SelectionStrategy::parse("middle1").kind == SelectionKind::MiddleOne);
    auto s = SelectionStrategy::parse("top3");
    CHECK((s.kind == SelectionKind::TopKPerCaptioner && s.k == 3));
    s = SelectionStrategy::parse("rand-top2");
    CHECK((s.kind == SelectionKind::RandOfTopK && s.k == 2));
    s = SelectionStrategy::parse("combined4");
    CHECK((s.kind == SelectionKind::TopKCombined && s.k == 4));
    CHECK(SelectionStrategy::parse("top4-combined").kind == SelectionKind::TopKCombined);
    for (const char* bad : {"top0", "top", "best2", "rand-top", "topx"}) CHECK_THROWS_AS(SelectionStrategy::parse(bad), ConfigError);
    CHECK_THROWS_AS(select({rec("C", 0, 1.0)}, strat(SelectionKind::All, 1, {})), ConfigError);
}

TEST_CASE("top-K examples") {
    std::vector<CaptionRecord> pool{rec("C", 0, 0.6), rec("C", 1, 0.9), rec("C", 2, 0.9), rec("C", 3, 0.3)};
    CHECK(frames_of(select(pool, strat(SelectionKind::TopKPerCaptioner, 2, {"C"}))) == std::vector<int>{1, 2});

    std::vector<CaptionRecord> ties{rec("C", 2, 0.9), rec("C", 0, 0.9), rec("C", 1, 0.9)};
    CHECK(frames_of(select(ties, strat(SelectionKind::TopKPerCaptioner, 2, {"C"}))) == std::vector<int>{0, 1});

    Rng rng(2);
    const auto two = random_pool(rng, {"C", "B"}, 10);
    const auto p = select(two, strat(SelectionKind::TopKPerCaptioner, 2, {"C", "B"}));
    REQUIRE(p.selected.size() == 4);
    CHECK(p.selected[0].captioner == "C");
    CHECK(p.selected[1].captioner == "C");
    CHECK(p.selected[2].captioner == "B");
    CHECK(p.selected[3].captioner == "B");
}

TEST_CASE("all, middle and rand-top pools") {
    std::vector<CaptionRecord> pool;
    for (int f = 9; f >= 0; --f) pool.push_back(rec("C", f, 0.1 * f));
    const auto all = select(pool, strat(SelectionKind::All, 1, {"C"}));
    CHECK(all.selected.size() == 10);
    CHECK(frames_of(all).front() == 0);
    CHECK_FALSE(all.sample_one_per_step);

    CHECK(frames_of(select(pool, strat(SelectionKind::MiddleOne, 1, {"C"}))) == std::vector<int>{5});

    const auto r = select(pool, strat(SelectionKind::RandOfTopK, 2, {"C"}));
    CHECK(r.sample_one_per_step);
    CHECK(frames_of(r) == std::vector<int>{9, 8});
}

TEST_CASE("short captioners and missing captioners") {
    std::vector<CaptionRecord> pool{rec("C", 0, 0.5), rec("B", 0, 0.4), rec("B", 1, 0.7)};
    const auto p = select(pool, strat(SelectionKind::TopKPerCaptioner, 2, {"C", "B"}));
    CHECK(p.selected.size() == 3);
    CHECK(p.warnings.size() == 1);
    CHECK_THROWS_AS(select(pool, strat(SelectionKind::TopKPerCaptioner, 2, {"C", "X"})), MissingCaptionerError);
    CHECK_THROWS_AS(select({}, strat(SelectionKind::All, 1, {"C"})), DataError);
}

TEST_CASE("top-K selection matches a full-sort oracle") {
    Rng rng(77);
    const std::vector<std::string> caps{"C", "B", "O"};
    for (int t = 0; t < 150; ++t) {
        const auto n_caps = 1 + rng.index(3);
        const std::vector<std::string> use(caps.begin(), caps.begin() + static_cast<std::ptrdiff_t>(n_caps));
        const int m = 1 + static_cast<int>(rng.index(12));
        const int k = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(m)));
        const auto pool = random_pool(rng, use, m);

        const auto per = select(pool, strat(SelectionKind::TopKPerCaptioner, k, use));
        std::vector<CaptionRecord> expected;
        for (const auto& c : use) {
            std::vector<CaptionRecord> mine;
            for (const auto& r : pool)
                if (r.captioner == c) mine.push_back(r);
            const auto top = oracle_top(mine, static_cast<std::size_t>(k));
            expected.insert(expected.end(), top.begin(), top.end());
            // Every selected score dominates every unselected one of the same captioner.
            double lowest_in = 1e9, highest_out = -1e9;
            const auto chosen = ids_of(top);
            for (const auto& r : mine) {
                if (chosen.count(r.caption_id)) lowest_in = std::min(lowest_in, r.clipscore);
                else highest_out = std::max(highest_out, r.clipscore);
            }
            CHECK(lowest_in >= highest_out);
        }
        REQUIRE(per.selected.size() == expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) CHECK(per.selected[i].caption_id == expected[i].caption_id);

        const int kc = 1 + static_cast<int>(rng.index(pool.size()));
        const auto comb = select(pool, strat(SelectionKind::TopKCombined, kc, use));
        const auto comb_expected = oracle_top(pool, static_cast<std::size_t>(kc));
        REQUIRE(comb.selected.size() == comb_expected.size());
        for (std::size_t i = 0; i < comb_expected.size(); ++i) CHECK(comb.selected[i].caption_id == comb_expected[i].caption_id);

        // Idempotent.
        CHECK(ids_of(select(per.selected, strat(SelectionKind::TopKPerCaptioner, k, use)).selected) == ids_of(per.selected));
        std::vector<std::string> present;
        for (const auto& c : use)
            for (const auto& r : comb.selected)
                if (r.captioner == c) {
                    present.push_back(c);
                    break;
                }
        CHECK(ids_of(select(comb.selected, strat(SelectionKind::TopKCombined, kc, present)).selected) == ids_of(comb.selected));
    }
}

TEST_CASE("combined and per-captioner top-K coincide when every top-K dominates every remainder") {
    Rng rng(8);
    for (int t = 0; t < 40; ++t) {
        const int k = 1 + static_cast<int>(rng.index(4));
        const int m = k + 1 + static_cast<int>(rng.index(5));
        std::vector<CaptionRecord> pool;
        for (const std::string c : {"C", "B"}) {
            for (int f = 0; f < m; ++f) {
                const bool top = f < k;
                pool.push_back(rec(c, f, top ? 2.0 + 0.4 * rng.uniform() : 1.5 * rng.uniform()));
            }
        }
        const auto per = select(pool, strat(SelectionKind::TopKPerCaptioner, k, {"C", "B"}));
        const auto comb = select(pool, strat(SelectionKind::TopKCombined, 2 * k, {"C", "B"}));
        CHECK(ids_of(per.selected) == ids_of(comb.selected));
    }
    // Without that structure they differ: one captioner owns all the best scores.
    std::vector<CaptionRecord> skew;
    for (int f = 0; f < 4; ++f) {
        skew.push_back(rec("C", f, 2.0 + 0.1 * f));
        skew.push_back(rec("B", f, 0.1 * f));
    }
    CHECK(ids_of(select(skew, strat(SelectionKind::TopKPerCaptioner, 2, {"C", "B"})).selected) !=
          ids_of(select(skew, strat(SelectionKind::TopKCombined, 4, {"C", "B"})).selected));
}

TEST_CASE("selection file round trip") {
    SynthSpec s;
    s.videos = 10;
    s.dim = 6;
    s.captions_per_captioner = 4;
    const auto ds = synthesize(1, s);
    oracle::TempDir dir("sel_rt");
    for (const char* name : {"top2", "rand-top2", "all", "combined3", "middle1"}) {
        const auto pools = select_dataset(ds, SelectionStrategy::parse(name, {"C", "B"}));
        write_selection(pools, dir.path / "sel.jsonl");
        const auto back = read_selection(ds, dir.path / "sel.jsonl");
        REQUIRE(back.size() == pools.size());
        for (std::size_t i = 0; i < pools.size(); ++i) {
            CHECK(back[i].video_id == pools[i].video_id);
            CHECK(back[i].sample_one_per_step == pools[i].sample_one_per_step);
            CHECK(ids_of(back[i].selected) == ids_of(pools[i].selected));
        }
    }
    CHECK_THROWS_AS(read_selection(ds, dir.path / "none.jsonl"), IoError);
}

TEST_CASE("nn_caption_retrieve examples") {
    EmbeddingTable g(3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    CHECK(nn_caption_retrieve(Vec{0, 1, 0}, g, 1).rows == std::vector<std::size_t>{1});
    const auto all = nn_caption_retrieve(Vec{0, 0.2, 1}, g, 3);
    CHECK(all.rows == std::vector<std::size_t>{2, 1, 0});
    CHECK_FALSE(all.truncated);
    const auto over = nn_caption_retrieve(Vec{1, 1, 1}, g, 5);
    CHECK(over.truncated);
    CHECK(over.rows == std::vector<std::size_t>{0, 1, 2});
    CHECK_THROWS_AS(nn_caption_retrieve(Vec{1, 0}, g, 1), ShapeError);
    CHECK_THROWS_AS(nn_caption_retrieve(Vec{1, 0, 0}, g, 0), ConfigError);
}

TEST_CASE("nn_caption_retrieve matches exhaustive search") {
    Rng rng(31);
    for (int t = 0; t < 120; ++t) {
        // d = 1 makes every same-sign row an exact tie that rounding then splits.
        const std::size_t rows = 1 + rng.index(200), d = 2 + rng.index(15);
        std::vector<float> data(rows * d);
        for (auto& x : data) x = static_cast<float>(rng.normal());
        // Duplicate a few rows to force ties.
        for (int dup = 0; dup < 3 && rows > 1; ++dup) {
            const auto a = rng.index(rows), b = rng.index(rows);
            std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(a * d), d, data.begin() + static_cast<std::ptrdiff_t>(b * d));
        }
        EmbeddingTable g(static_cast<std::uint32_t>(d), data);
        Vec q(d);
        if (rng.uniform() < 0.3) q = g.row_f64(rng.index(rows));
        else
            for (auto& x : q) x = rng.normal();
        const auto k = 1 + rng.index(rows);
        std::vector<std::vector<double>> gal;
        for (std::size_t r = 0; r < rows; ++r) gal.push_back(g.row_f64(r));
        CHECK(nn_caption_retrieve(q, g, static_cast<int>(k)).rows == oracle::full_sort_nn(q, gal, k));
    }
}

TEST_CASE("gallery containing the frame returns it first") {
    SynthSpec s;
    s.videos = 6;
    s.dim = 8;
    const auto ds = synthesize(2, s);
    const auto nn = with_nn_captions(ds, ds.frames, 3);
    for (std::size_t v = 0; v < ds.manifest.videos.size(); ++v) {
        const auto& video = ds.manifest.videos[v];
        CHECK(nn_caption_retrieve(ds.frames.row_f64(video.frame_rows[1]), ds.frames, 1).rows.front() == video.frame_rows[1]);
    }
    // Each NN caption is its own frame, so every CLIPScore is the maximum.
    for (const auto& c : nn.manifest.captions) CHECK(c.clipscore == doctest::Approx(2.5).epsilon(1e-6));
    CHECK(nn.manifest.captions.size() == 3 * ds.manifest.videos.size());
}

TEST_CASE("stats: distinct frames, uniqueness, sharing") {
    // Top-2 frames {1,3} for C and {1,5} for B: three distinct frames.
    std::vector<CaptionRecord> v0{rec("C", 1, 2.0), rec("C", 3, 1.9), rec("C", 0, 0.1),
                                  rec("B", 1, 2.0), rec("B", 5, 1.8), rec("B", 2, 0.2)};
    for (auto& r : v0) r.text_hash = r.caption_id;
    auto ds = stats_dataset({v0});
    auto rep = caption_stats(ds, strat(SelectionKind::TopKPerCaptioner, 2, {"C", "B"}));
    CHECK(rep.distinct_frames_pct == std::map<int, double>{{3, 100.0}});
    CHECK(*rep.unique_before_pct == 100.0);
    CHECK(*rep.shared_across_captioners_pct == 0.0);

    std::vector<CaptionRecord> same;
    for (int f = 0; f < 10; ++f) {
        same.push_back(rec("C", f, 1.0, "v1"));
        same.back().text_hash = "h";
    }
    ds = stats_dataset({same});
    rep = caption_stats(ds, strat(SelectionKind::All, 1, {"C"}));
    CHECK(*rep.unique_before_pct == doctest::Approx(10.0));

    // One text produced by both captioners.
    auto shared = v0;
    shared[0].text_hash = shared[3].text_hash = "same";
    rep = caption_stats(stats_dataset({shared}), strat(SelectionKind::TopKPerCaptioner, 2, {"C", "B"}));
    CHECK(*rep.shared_across_captioners_pct == doctest::Approx(100.0 * 2 / 6));

    // Without hashes the text statistics are unavailable but frame overlap is still there.
    auto bare = v0;
    for (auto& r : bare) r.text_hash.reset();
    rep = caption_stats(stats_dataset({bare}), strat(SelectionKind::TopKPerCaptioner, 2, {"C", "B"}));
    CHECK_FALSE(rep.unique_before_pct.has_value());
    CHECK_FALSE(rep.unavailable.empty());
    CHECK(rep.distinct_frames_pct.at(3) == 100.0);
}

TEST_CASE("stats on synthetic data partition to 100%") {
    SynthSpec s;
    s.videos = 50;
    const auto ds = synthesize(13, s);
    const auto rep = caption_stats(ds, strat(SelectionKind::TopKPerCaptioner, 2, {"C", "B"}));
    double total = 0;
    for (const auto& [k, pct] : rep.distinct_frames_pct) {
        CHECK(k >= 1);
        CHECK(k <= 4);
        total += pct;
    }
    CHECK(total == doctest::Approx(100.0));
    CHECK(*rep.unique_before_pct == 100.0);
    CHECK(*rep.shared_across_captioners_pct == 0.0);
    double share = 0;
    for (const auto& c : rep.captioners) share += c.combined_topk_share_pct;
    CHECK(share == doctest::Approx(100.0));
    CHECK(rep.to_json().find("\"dataset\"") != std::string::npos);
    CHECK_FALSE(rep.to_table().empty());
}
