#include "capret/evaluator.hpp"

#include "capret/captionsel.hpp"
#include "capret/errors.hpp"
#include "capret/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_map>

namespace capret {

using nlohmann::json;

void SimilarityMatrix::check() const {
    if (values.rows() != row_ids.size() || values.cols() != col_ids.size()) {
        throw EvalError("similarity matrix shape does not match its ids");
    }
    for (double v : values.data()) {
        if (!std::isfinite(v) || v < -1.0 || v > 1.0) throw EvalError("similarity value outside [-1, 1]");
    }
    if (std::set<std::string>(row_ids.begin(), row_ids.end()).size() != row_ids.size()) {
        throw EvalError("duplicate query ids");
    }
    if (std::set<std::string>(col_ids.begin(), col_ids.end()).size() != col_ids.size()) {
        throw EvalError("duplicate gallery ids");
    }
}

namespace {

Matrix project_rows(const ProjectionModel* model, const Matrix& raw, Modality m) {
    return model ? forward_embed_rows(*model, raw, m) : raw;
}

Vec project_vec(const ProjectionModel* model, Vec raw, Modality m) {
    return model ? forward_embed(*model, raw, m) : raw;
}

std::string fingerprint_of(EvalMode mode, const PoolingConfig& p, const std::string& split) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "mode=%s;tau=%.17g;combine=%s;wt=%.17g;split=%s", to_string(mode).c_str(), p.tau,
                  to_string(p.caption_combine).c_str(), p.weighted_temperature, split.c_str());
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(buf)));
    return hex;
}

}  // namespace

RetrievalSetup build_similarity(const ProjectionModel* model, const Dataset& ds, EvalMode mode,
                                const PoolingConfig& pooling, const std::string& split) {
    pooling.check();
    if (model && model->dim() != ds.dim()) {
        throw ShapeError("model dim " + std::to_string(model->dim()) + " != dataset '" + ds.name() + "' dim " +
                         std::to_string(ds.dim()));
    }
    const auto gallery = ds.videos_in_split(split);
    if (gallery.empty()) throw EvalError("dataset '" + ds.name() + "' has no videos in split " + split);

    RetrievalSetup out;
    std::vector<Matrix> frames;
    std::unordered_map<std::string, std::size_t> col_of;
    for (auto vi : gallery) {
        const auto& id = ds.manifest.videos[vi].video_id;
        col_of[id] = out.sim.col_ids.size();
        out.sim.col_ids.push_back(id);
        frames.push_back(project_rows(model, ds.video_frames(vi), Modality::Visual));
    }

    auto score_row = [&](auto&& sim_fn) {
        Vec row(frames.size());
        for (std::size_t c = 0; c < frames.size(); ++c) row[c] = sim_fn(frames[c]);
        out.sim.values.append_row(row);
    };
    out.sim.values = Matrix(0, frames.size());

    if (mode == EvalMode::MCQS) {
        if (ds.manifest.gt_caption_groups.empty()) {
            throw ConfigError("MCQS evaluation needs ground-truth caption groups in dataset '" + ds.name() + "'");
        }
        for (const auto& vid : out.sim.col_ids) {
            auto it = ds.manifest.gt_caption_groups.find(vid);
            if (it == ds.manifest.gt_caption_groups.end() || it->second.empty()) continue;
            Matrix caps;
            for (auto r : it->second) caps.append_row(project_vec(model, ds.queries.row_f64(r), Modality::Text));
            score_row([&](const Matrix& f) { return mcqs_similarity(f, caps, pooling); });
            out.sim.row_ids.push_back(vid + "#gt");
            out.gt[vid + "#gt"] = vid;
        }
    } else {
        for (const auto& q : ds.manifest.queries) {
            if (!col_of.count(q.video_id)) continue;
            const Vec t = project_vec(model, ds.queries.row_f64(q.embedding_row), Modality::Text);
            if (mode == EvalMode::QS) {
                score_row([&](const Matrix& f) { return qs_similarity(f, t, pooling.tau); });
            } else {
                score_row([&](const Matrix& f) { return mean_pool_similarity(f, t); });
            }
            out.sim.row_ids.push_back(q.query_id);
            out.gt[q.query_id] = q.video_id;
        }
    }
    if (out.sim.row_ids.empty()) throw EvalError("no queries for split " + split + " of '" + ds.name() + "'");
    return out;
}

namespace {

std::vector<std::size_t> gt_columns(const SimilarityMatrix& sim, const std::map<std::string, std::string>& gt) {
    std::unordered_map<std::string, std::size_t> col_of;
    for (std::size_t c = 0; c < sim.col_ids.size(); ++c) col_of[sim.col_ids[c]] = c;
    std::vector<std::size_t> cols;
    for (const auto& q : sim.row_ids) {
        auto g = gt.find(q);
        if (g == gt.end()) throw EvalError("query " + q + " has no ground-truth video");
        auto c = col_of.find(g->second);
        if (c == col_of.end()) throw EvalError("ground-truth video " + g->second + " of query " + q + " is not in the gallery");
        cols.push_back(c->second);
    }
    return cols;
}

DirectionMetrics summarize(std::vector<std::size_t> ranks, const std::vector<int>& ks) {
    DirectionMetrics m;
    m.count = ranks.size();
    if (ranks.empty()) return m;
    for (int k : ks) {
        std::size_t hit = 0;
        for (auto r : ranks) hit += r <= static_cast<std::size_t>(std::max(k, 0));
        m.recall[k] = static_cast<double>(hit) / static_cast<double>(ranks.size());
    }
    std::sort(ranks.begin(), ranks.end());
    m.median_rank = static_cast<double>(ranks[(ranks.size() - 1) / 2]);
    double sum = 0;
    for (auto r : ranks) sum += static_cast<double>(r);
    m.mean_rank = sum / static_cast<double>(ranks.size());
    return m;
}

}  // namespace

std::vector<std::size_t> t2v_ranks(const SimilarityMatrix& sim, const std::map<std::string, std::string>& gt) {
    const auto cols = gt_columns(sim, gt);
    std::vector<std::size_t> ranks(cols.size());
    for (std::size_t q = 0; q < cols.size(); ++q) {
        const auto row = sim.values.row(q);
        const double s = row[cols[q]];
        const auto& gid = sim.col_ids[cols[q]];
        std::size_t rank = 1;
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (row[c] > s || (row[c] == s && sim.col_ids[c] < gid)) ++rank;
        }
        ranks[q] = rank;
    }
    return ranks;
}

EvalReport recall_at_k(const SimilarityMatrix& sim, const std::map<std::string, std::string>& gt,
                       const std::vector<int>& ks) {
    EvalReport rep;
    rep.t2v = summarize(t2v_ranks(sim, gt), ks);

    const auto cols = gt_columns(sim, gt);
    std::vector<std::size_t> best(sim.col_ids.size(), 0);
    for (std::size_t q = 0; q < cols.size(); ++q) {
        const std::size_t c = cols[q];
        const double s = sim.values(q, c);
        std::size_t rank = 1;
        for (std::size_t r = 0; r < sim.row_ids.size(); ++r) {
            const double o = sim.values(r, c);
            if (o > s || (o == s && sim.row_ids[r] < sim.row_ids[q])) ++rank;
        }
        if (best[c] == 0 || rank < best[c]) best[c] = rank;
    }
    std::vector<std::size_t> v2t;
    for (auto b : best) {
        if (b) v2t.push_back(b);
    }
    rep.v2t = summarize(std::move(v2t), ks);
    return rep;
}

EvalReport evaluate(const ProjectionModel* model, const Dataset& ds, EvalMode mode, const PoolingConfig& pooling,
                    const std::vector<int>& ks, const std::string& split) {
    const auto setup = build_similarity(model, ds, mode, pooling, split);
    EvalReport rep = recall_at_k(setup.sim, setup.gt, ks);
    rep.dataset = ds.name();
    rep.mode = to_string(mode);
    rep.fingerprint = fingerprint_of(mode, pooling, split);
    return rep;
}

EvalReport caption_bottleneck_eval(const Dataset& ds, int k_select, const std::vector<std::string>& captioners,
                                   const std::vector<int>& ks, const std::string& split) {
    if (!ds.caption_text) throw ConfigError("dataset '" + ds.name() + "' has no caption text-embedding table");
    if (k_select < 1) throw ConfigError("bottleneck K must be >= 1");
    const EmbeddingTable& text = *ds.caption_text;
    if (text.dim() != ds.queries.dim()) {
        throw ShapeError("caption text dim " + std::to_string(text.dim()) + " != query dim " +
                         std::to_string(ds.queries.dim()));
    }
    SelectionStrategy strategy{SelectionKind::TopKCombined, k_select,
                               captioners.empty() ? ds.captioner_labels() : captioners};
    const auto by_video = ds.captions_by_video();

    SimilarityMatrix sim;
    std::vector<Vec> reps;
    for (auto vi : ds.videos_in_split(split)) {
        const auto& vid = ds.manifest.videos[vi].video_id;
        std::vector<CaptionRecord> pool;
        if (auto it = by_video.find(vid); it != by_video.end()) {
            for (auto i : it->second) pool.push_back(ds.manifest.captions[i]);
        }
        const auto chosen = select(pool, strategy).selected;
        if (chosen.empty()) throw DataError("video " + vid + " has no captions for the bottleneck baseline");
        Vec rep(text.dim(), 0.0);
        for (const auto& c : chosen) {
            const Vec e = text.row_f64(c.embedding_row);
            for (std::size_t k = 0; k < rep.size(); ++k) rep[k] += e[k];
        }
        for (double& x : rep) x /= static_cast<double>(chosen.size());
        reps.push_back(std::move(rep));
        sim.col_ids.push_back(vid);
    }
    if (reps.empty()) throw EvalError("no videos in split " + split);
    std::set<std::string> in_gallery(sim.col_ids.begin(), sim.col_ids.end());
    std::map<std::string, std::string> gt;
    sim.values = Matrix(0, reps.size());
    for (const auto& q : ds.manifest.queries) {
        if (!in_gallery.count(q.video_id)) continue;
        const Vec t = ds.queries.row_f64(q.embedding_row);
        Vec row(reps.size());
        for (std::size_t c = 0; c < reps.size(); ++c) row[c] = cosine(t, reps[c]);
        sim.values.append_row(row);
        sim.row_ids.push_back(q.query_id);
        gt[q.query_id] = q.video_id;
    }
    EvalReport rep = recall_at_k(sim, gt, ks);
    rep.dataset = ds.name();
    rep.mode = "bottleneck" + std::to_string(k_select);
    rep.fingerprint = fingerprint_of(EvalMode::MeanPool, PoolingConfig{}, split + ";bottleneck");
    return rep;
}

namespace {

json direction_json(const DirectionMetrics& m) {
    json j;
    for (const auto& [k, r] : m.recall) j["R@" + std::to_string(k)] = r;
    j["median_rank"] = m.median_rank;
    j["mean_rank"] = m.mean_rank;
    j["count"] = m.count;
    return j;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

std::string EvalReport::to_json() const {
    json j{{"dataset", dataset},
           {"mode", mode},
           {"fingerprint", fingerprint},
           {"t2v", direction_json(t2v)},
           {"v2t", direction_json(v2t)}};
    return j.dump();
}

std::string EvalReport::to_csv(bool header) const {
    std::string out = header ? "dataset,mode,direction,k,recall,median_rank\n" : "";
    for (const auto& [name, m] : {std::pair{"t2v", &t2v}, std::pair{"v2t", &v2t}}) {
        for (const auto& [k, r] : m->recall) {
            out += dataset + "," + mode + "," + name + "," + std::to_string(k) + "," + fmt(r) + "," +
                   fmt(m->median_rank) + "\n";
        }
    }
    return out;
}

CrossEvalGrid cross_eval(const std::vector<std::pair<std::string, ProjectionModel>>& models,
                         const std::vector<std::pair<std::string, const Dataset*>>& datasets, EvalMode mode,
                         const PoolingConfig& pooling, const std::vector<int>& ks) {
    CrossEvalGrid g;
    g.row_names.push_back("frozen");
    for (const auto& [name, _] : models) g.row_names.push_back(name);
    for (const auto& [name, _] : datasets) g.col_names.push_back(name);
    for (std::size_t r = 0; r < g.row_names.size(); ++r) {
        const ProjectionModel* model = r == 0 ? nullptr : &models[r - 1].second;
        std::vector<EvalReport> row;
        for (const auto& [dname, ds] : datasets) {
            if (model && model->dim() != ds->dim()) {
                throw ShapeError("model '" + g.row_names[r] + "' (dim " + std::to_string(model->dim()) +
                                 ") cannot evaluate dataset '" + dname + "' (dim " + std::to_string(ds->dim()) + ")");
            }
            EvalReport rep = evaluate(model, *ds, mode, pooling, ks);
            rep.dataset = dname;
            row.push_back(std::move(rep));
        }
        g.reports.push_back(std::move(row));
    }
    return g;
}

std::string CrossEvalGrid::to_csv() const {
    std::ostringstream out;
    out << "train,eval,direction";
    std::vector<int> ks;
    if (!reports.empty() && !reports[0].empty()) {
        for (const auto& [k, _] : reports[0][0].t2v.recall) ks.push_back(k);
    }
    for (int k : ks) out << ",R@" << k;
    out << ",median_rank\n";
    for (std::size_t r = 0; r < row_names.size(); ++r) {
        for (std::size_t c = 0; c < col_names.size(); ++c) {
            const auto& rep = reports[r][c];
            for (const auto& [name, m] : {std::pair{"t2v", &rep.t2v}, std::pair{"v2t", &rep.v2t}}) {
                out << row_names[r] << ',' << col_names[c] << ',' << name;
                for (int k : ks) out << ',' << fmt(m->recall.at(k));
                out << ',' << fmt(m->median_rank) << '\n';
            }
        }
    }
    return out.str();
}

std::string render_table(const std::string& csv) {
    std::vector<std::vector<std::string>> cells;
    std::istringstream in(csv);
    std::string line;
    std::vector<std::size_t> width;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> row;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) row.push_back(cell);
        if (width.size() < row.size()) width.resize(row.size(), 0);
        for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
        cells.push_back(std::move(row));
    }
    std::string out;
    for (std::size_t r = 0; r < cells.size(); ++r) {
        for (std::size_t i = 0; i < cells[r].size(); ++i) {
            out += cells[r][i];
            if (i + 1 < cells[r].size()) out += std::string(width[i] - cells[r][i].size() + 2, ' ');
        }
        out += '\n';
        if (r == 0) {
            std::size_t total = 0;
            for (auto w : width) total += w + 2;
            out += std::string(total > 2 ? total - 2 : total, '-') + '\n';
        }
    }
    return out;
}

}  // namespace capret
