#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "capret/errors.hpp"
#include "capret/evaluator.hpp"

#include "../support/oracles.hpp"

#include <cmath>
#include <cstdio>

using namespace capret;

namespace {

std::string id(const char* prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%04zu", prefix, i);
    return buf;
}

struct Instance {
    SimilarityMatrix sim;
    std::map<std::string, std::string> gt;
};

// Coarse values so that ties are frequent; several queries may share a video.
Instance random_instance(Rng& rng, std::size_t q, std::size_t g, int levels) {
    Instance in;
    in.sim.values = Matrix(q, g);
    for (auto& v : in.sim.values.data()) v = -1.0 + 2.0 * static_cast<double>(rng.index(static_cast<std::size_t>(levels))) / (levels - 1);
    for (std::size_t c = 0; c < g; ++c) in.sim.col_ids.push_back(id("v", c));
    for (std::size_t r = 0; r < q; ++r) {
        in.sim.row_ids.push_back(id("q", r));
        in.gt[in.sim.row_ids.back()] = in.sim.col_ids[r < g ? r : rng.index(g)];
    }
    rng.shuffle(in.sim.col_ids);
    return in;
}

struct OracleMetrics {
    std::vector<std::size_t> t2v, v2t;
};

OracleMetrics brute_force(const Instance& in) {
    OracleMetrics out;
    const auto& s = in.sim;
    for (std::size_t r = 0; r < s.row_ids.size(); ++r) {
        std::vector<double> row(s.values.row(r).begin(), s.values.row(r).end());
        const auto gt_col = static_cast<std::size_t>(
            std::find(s.col_ids.begin(), s.col_ids.end(), in.gt.at(s.row_ids[r])) - s.col_ids.begin());
        out.t2v.push_back(oracle::full_sort_rank(row, s.col_ids, gt_col));
    }
    for (std::size_t c = 0; c < s.col_ids.size(); ++c) {
        std::vector<double> col;
        for (std::size_t r = 0; r < s.row_ids.size(); ++r) col.push_back(s.values(r, c));
        std::size_t best = 0;
        for (std::size_t r = 0; r < s.row_ids.size(); ++r) {
            if (in.gt.at(s.row_ids[r]) != s.col_ids[c]) continue;
            const auto rank = oracle::full_sort_rank(col, s.row_ids, r);
            if (best == 0 || rank < best) best = rank;
        }
        if (best) out.v2t.push_back(best);
    }
    return out;
}

double oracle_recall(const std::vector<std::size_t>& ranks, int k) {
    double hit = 0;
    for (auto r : ranks) hit += r <= static_cast<std::size_t>(k) ? 1 : 0;
    return hit / static_cast<double>(ranks.size());
}

void check_same(const DirectionMetrics& a, const DirectionMetrics& b) {
    CHECK(a.recall == b.recall);
    CHECK(a.median_rank == b.median_rank);
    CHECK(a.mean_rank == b.mean_rank);
    CHECK(a.count == b.count);
}

SynthSpec small(int videos = 30) {
    SynthSpec s;
    s.videos = videos;
    s.dim = 12;
    s.frames = 4;
    s.captions_per_captioner = 4;
    return s;
}

}  // namespace

TEST_CASE("hand-ranked example") {
    SimilarityMatrix s{Matrix::from_rows({{0.9, 0.8}, {0.95, 0.1}}), {"q0", "q1"}, {"v0", "v1"}};
    const auto rep = recall_at_k(s, {{"q0", "v0"}, {"q1", "v1"}}, {1, 2});
    CHECK(rep.t2v.recall.at(1) == 0.5);
    CHECK(rep.t2v.recall.at(2) == 1.0);
    CHECK(t2v_ranks(s, {{"q0", "v0"}, {"q1", "v1"}}) == std::vector<std::size_t>{1, 2});
    CHECK(rep.t2v.median_rank == 1.0);
    CHECK(rep.t2v.mean_rank == 1.5);

    SimilarityMatrix eye{Matrix::identity(4), {"a", "b", "c", "d"}, {"A", "B", "C", "D"}};
    const auto r = recall_at_k(eye, {{"a", "A"}, {"b", "B"}, {"c", "C"}, {"d", "D"}});
    CHECK(r.t2v.recall.at(1) == 1.0);
    CHECK(r.v2t.recall.at(1) == 1.0);
}

TEST_CASE("ties go to the smaller gallery id") {
    SimilarityMatrix s{Matrix::from_rows({{0.5, 0.5, 0.5}}), {"q"}, {"b", "a", "c"}};
    CHECK(t2v_ranks(s, {{"q", "a"}}) == std::vector<std::size_t>{1});
    CHECK(t2v_ranks(s, {{"q", "b"}}) == std::vector<std::size_t>{2});
    CHECK(t2v_ranks(s, {{"q", "c"}}) == std::vector<std::size_t>{3});
}

TEST_CASE("video-to-text uses the best ground-truth query") {
    // v0 has two queries: q1 ranks first in its column, q0 third.
    SimilarityMatrix s{Matrix::from_rows({{0.1, 0.0}, {0.9, 0.2}, {0.5, 0.8}}), {"q0", "q1", "q2"}, {"v0", "v1"}};
    const auto rep = recall_at_k(s, {{"q0", "v0"}, {"q1", "v0"}, {"q2", "v1"}}, {1});
    CHECK(rep.v2t.count == 2);
    CHECK(rep.v2t.recall.at(1) == 1.0);
}

TEST_CASE("median rank takes the lower middle") {
    SimilarityMatrix s{Matrix::from_rows({{1.0, 0.0, 0.0, 0.0}, {0.0, 1.0, 0.0, 0.0}, {0.9, 0.8, 0.7, 0.0}, {0.9, 0.8, 0.7, 0.6}}),
                       {"q0", "q1", "q2", "q3"}, {"v0", "v1", "v2", "v3"}};
    const auto rep = recall_at_k(s, {{"q0", "v0"}, {"q1", "v1"}, {"q2", "v2"}, {"q3", "v3"}});
    // ranks 1, 1, 3, 4
    CHECK(rep.t2v.median_rank == 1.0);
}

TEST_CASE("errors") {
    SimilarityMatrix s{Matrix::from_rows({{0.1, 0.2}}), {"q"}, {"a", "b"}};
    CHECK_THROWS_AS(recall_at_k(s, {{"q", "z"}}), EvalError);
    CHECK_THROWS_AS(recall_at_k(s, {{"other", "a"}}), EvalError);
    SimilarityMatrix bad{Matrix::from_rows({{1.5}}), {"q"}, {"a"}};
    CHECK_THROWS_AS(bad.check(), EvalError);
    SimilarityMatrix dup{Matrix::from_rows({{0.1, 0.2}}), {"q"}, {"a", "a"}};
    CHECK_THROWS_AS(dup.check(), EvalError);
}

TEST_CASE("recall_at_k matches the brute-force oracle") {
    Rng rng(2024);
    for (int t = 0; t < 150; ++t) {
        const std::size_t g = 1 + rng.index(t < 10 ? 200 : 60);
        const std::size_t q = 1 + rng.index(t < 10 ? 200 : 80);
        const int levels = 2 + static_cast<int>(rng.index(30));
        const auto in = random_instance(rng, q, g, levels);
        const std::vector<int> ks{1, 2, 5, 10, static_cast<int>(g)};
        const auto rep = recall_at_k(in.sim, in.gt, ks);
        const auto o = brute_force(in);
        CHECK(t2v_ranks(in.sim, in.gt) == o.t2v);
        for (int k : ks) {
            CHECK(rep.t2v.recall.at(k) == oracle_recall(o.t2v, k));
            CHECK(rep.v2t.recall.at(k) == oracle_recall(o.v2t, k));
        }
        CHECK(rep.t2v.recall.at(static_cast<int>(g)) == 1.0);
        CHECK(rep.t2v.recall.at(1) <= rep.t2v.recall.at(5));
        CHECK(rep.t2v.recall.at(5) <= rep.t2v.recall.at(10));
        CHECK(rep.v2t.count == o.v2t.size());
    }
}

TEST_CASE("recalls survive column permutation and monotone transforms") {
    Rng rng(55);
    for (int t = 0; t < 60; ++t) {
        const std::size_t g = 2 + rng.index(40), q = 1 + rng.index(50);
        const auto in = random_instance(rng, q, g, 1000);
        const auto base = recall_at_k(in.sim, in.gt);

        // Permute columns together with their ids.
        std::vector<std::size_t> perm(g);
        for (std::size_t i = 0; i < g; ++i) perm[i] = i;
        rng.shuffle(perm);
        Instance p = in;
        for (std::size_t c = 0; c < g; ++c) {
            p.sim.col_ids[c] = in.sim.col_ids[perm[c]];
            for (std::size_t r = 0; r < q; ++r) p.sim.values(r, c) = in.sim.values(r, perm[c]);
        }
        const auto permuted = recall_at_k(p.sim, p.gt);
        check_same(permuted.t2v, base.t2v);
        check_same(permuted.v2t, base.v2t);

        // Strictly increasing map of one row at a time keeps t2v ranks.
        Instance m = in;
        const auto r = rng.index(q);
        for (std::size_t c = 0; c < g; ++c) m.sim.values(r, c) = std::tanh(3 * m.sim.values(r, c)) * 0.5 + 0.1;
        CHECK(t2v_ranks(m.sim, m.gt) == t2v_ranks(in.sim, in.gt));
    }
}

TEST_CASE("QS similarity matches a straight-line recomputation") {
    auto s = small(6);
    s.frames = 2;
    s.test_fraction = 0.5;
    const auto ds = synthesize(4, s);
    PoolingConfig pc;
    const auto setup = build_similarity(nullptr, ds, EvalMode::QS, pc);
    REQUIRE(setup.sim.col_ids.size() == 3);
    for (std::size_t r = 0; r < setup.sim.row_ids.size(); ++r) {
        const auto& q = *std::find_if(ds.manifest.queries.begin(), ds.manifest.queries.end(),
                                      [&](const auto& x) { return x.query_id == setup.sim.row_ids[r]; });
        const auto text = ds.queries.row_f64(q.embedding_row);
        for (std::size_t c = 0; c < 3; ++c) {
            const auto vi = static_cast<std::size_t>(std::find_if(ds.manifest.videos.begin(), ds.manifest.videos.end(), [&](const auto& v) {
                                                         return v.video_id == setup.sim.col_ids[c];
                                                     }) - ds.manifest.videos.begin());
            std::vector<std::vector<double>> frames;
            for (auto fr : ds.manifest.videos[vi].frame_rows) frames.push_back(ds.frames.row_f64(fr));
            CHECK(setup.sim.values(r, c) == doctest::Approx(oracle::qs_sim(frames, text, 0.1)).epsilon(1e-12));
        }
    }
}

TEST_CASE("single-frame videos make QS and mean pooling identical") {
    auto s = small();
    s.frames = 1;
    const auto ds = synthesize(3, s);
    PoolingConfig pc;
    const auto qs = build_similarity(nullptr, ds, EvalMode::QS, pc);
    const auto mp = build_similarity(nullptr, ds, EvalMode::MeanPool, pc);
    CHECK(qs.sim.values == mp.sim.values);
    const auto a = evaluate(nullptr, ds, EvalMode::QS, pc), b = evaluate(nullptr, ds, EvalMode::MeanPool, pc);
    check_same(a.t2v, b.t2v);
    check_same(a.v2t, b.v2t);
}

TEST_CASE("zero noise puts the ground truth on top") {
    auto s = small();
    s.frame_noise = s.caption_noise = 0;
    s.junk_fraction = 0;
    const auto ds = synthesize(8, s);
    PoolingConfig pc;
    const auto setup = build_similarity(nullptr, ds, EvalMode::QS, pc);
    for (std::size_t r = 0; r < setup.sim.row_ids.size(); ++r) {
        const auto gt = setup.gt.at(setup.sim.row_ids[r]);
        const auto c = static_cast<std::size_t>(std::find(setup.sim.col_ids.begin(), setup.sim.col_ids.end(), gt) - setup.sim.col_ids.begin());
        const auto row = setup.sim.values.row(r);
        CHECK(row[c] == *std::max_element(row.begin(), row.end()));
    }
    CHECK(evaluate(nullptr, ds, EvalMode::QS, pc).t2v.recall.at(1) == 1.0);
    CHECK(evaluate(nullptr, ds, EvalMode::MCQS, pc).t2v.recall.at(1) == 1.0);
}

TEST_CASE("identity model evaluates exactly like the frozen backbone") {
    const auto ds = synthesize(12, small());
    const auto id = ProjectionModel::identity(ds.dim());
    PoolingConfig pc;
    for (auto mode : {EvalMode::MeanPool, EvalMode::QS, EvalMode::MCQS}) {
        CHECK(build_similarity(&id, ds, mode, pc).sim.values == build_similarity(nullptr, ds, mode, pc).sim.values);
        CHECK(evaluate(&id, ds, mode, pc).to_json() == evaluate(nullptr, ds, mode, pc).to_json());
    }
    const auto wrong = ProjectionModel::identity(ds.dim() + 1);
    CHECK_THROWS_AS(evaluate(&wrong, ds, EvalMode::QS, pc), ShapeError);
}

TEST_CASE("MCQS evaluation needs caption groups") {
    auto ds = synthesize(12, small());
    PoolingConfig pc;
    const auto setup = build_similarity(nullptr, ds, EvalMode::MCQS, pc);
    CHECK(setup.sim.row_ids.front().find("#gt") != std::string::npos);
    ds.manifest.gt_caption_groups.clear();
    CHECK_THROWS_AS(build_similarity(nullptr, ds, EvalMode::MCQS, pc), ConfigError);
    // One query per video: MCQS rows reduce to QS rows.
    auto one = synthesize(12, small());
    const auto qs = build_similarity(nullptr, one, EvalMode::QS, pc);
    const auto mc = build_similarity(nullptr, one, EvalMode::MCQS, pc);
    CHECK(qs.sim.values == mc.sim.values);
}

TEST_CASE("caption bottleneck") {
    // One caption per video and k = 1: the representation is that caption.
    auto s = small();
    s.captioners = {"C"};
    s.captions_per_captioner = 1;
    const auto ds = synthesize(6, s);
    const auto rep = caption_bottleneck_eval(ds, 1);
    Instance in;
    const auto gallery = ds.videos_in_split("test");
    const auto by_video = ds.captions_by_video();
    in.sim.values = Matrix(0, gallery.size());
    for (auto vi : gallery) in.sim.col_ids.push_back(ds.manifest.videos[vi].video_id);
    for (const auto& q : ds.manifest.queries) {
        if (std::find(in.sim.col_ids.begin(), in.sim.col_ids.end(), q.video_id) == in.sim.col_ids.end()) continue;
        Vec row;
        for (const auto& vid : in.sim.col_ids) {
            const auto& c = ds.manifest.captions[by_video.at(vid).front()];
            row.push_back(oracle::cos_raw(ds.queries.row_f64(q.embedding_row), ds.captions.row_f64(c.embedding_row)));
        }
        in.sim.values.append_row(row);
        in.sim.row_ids.push_back(q.query_id);
        in.gt[q.query_id] = q.video_id;
    }
    const auto o = brute_force(in);
    for (int k : kDefaultKs) CHECK(rep.t2v.recall.at(k) == oracle_recall(o.t2v, k));

    // Identical captions per video: every k gives the same representation.
    auto z = small();
    z.caption_noise = 0;
    z.junk_fraction = 0;
    const auto same = synthesize(6, z);
    const auto k1 = caption_bottleneck_eval(same, 1), k3 = caption_bottleneck_eval(same, 3);
    check_same(k1.t2v, k3.t2v);
    CHECK(k1.t2v.recall.at(1) == 1.0);

    auto bare = ds;
    bare.caption_text.reset();
    CHECK_THROWS_AS(caption_bottleneck_eval(bare, 2), ConfigError);
}

TEST_CASE("cross evaluation grid") {
    auto s = small();
    const auto a = synthesize(1, s);
    s.name = "other";
    const auto b = synthesize(2, s);
    PoolingConfig pc;
    auto m = ProjectionModel::identity(a.dim());
    m.w_text(0, 1) = 0.3;
    m.b_visual[2] = -0.1;

    const auto one = cross_eval({{"m", m}}, {{a.name(), &a}}, EvalMode::QS, pc);
    REQUIRE(one.reports.size() == 2);
    CHECK(one.reports[1][0].to_json() == evaluate(&m, a, EvalMode::QS, pc).to_json());

    const auto grid = cross_eval({{"id", ProjectionModel::identity(a.dim())}, {"m", m}}, {{"a", &a}, {"other", &b}}, EvalMode::QS, pc);
    CHECK(grid.row_names == std::vector<std::string>{"frozen", "id", "m"});
    for (std::size_t c = 0; c < 2; ++c) {
        CHECK(grid.reports[0][c].to_json() == grid.reports[1][c].to_json());
        CHECK(grid.reports[2][c].to_json() == cross_eval({{"m", m}}, {{grid.col_names[c], c == 0 ? &a : &b}}, EvalMode::QS, pc).reports[1][0].to_json());
    }
    const auto csv = grid.to_csv();
    CHECK(csv.rfind("train,eval,direction,R@1,R@5,R@10,median_rank\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 2 * 2);
    CHECK_FALSE(render_table(csv).empty());

    s.dim = 5;
    const auto small_dim = synthesize(3, s);
    try {
        cross_eval({{"m", m}}, {{"tiny", &small_dim}}, EvalMode::QS, pc);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("'m'") != std::string::npos);
        CHECK(std::string(e.what()).find("'tiny'") != std::string::npos);
    }
}

TEST_CASE("report serialization") {
    const auto ds = synthesize(12, small());
    PoolingConfig pc;
    const auto rep = evaluate(nullptr, ds, EvalMode::QS, pc);
    const auto csv = rep.to_csv();
    CHECK(csv.rfind("dataset,mode,direction,k,recall,median_rank\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
    CHECK(rep.to_csv(false).find("dataset,") == std::string::npos);
    CHECK(rep.to_json().find("\"fingerprint\"") != std::string::npos);
}
