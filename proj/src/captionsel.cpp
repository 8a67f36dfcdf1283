#include "capret/captionsel.hpp"

#include "capret/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace capret {

using nlohmann::json;

double compute_clipscore(VecView image_emb, VecView text_emb) {
    require_same_dim(image_emb, text_emb, "clipscore");
    return 2.5 * std::max(cosine(image_emb, text_emb), 0.0);
}

double text_clipscore(VecView text_a, VecView text_b) { return compute_clipscore(text_a, text_b); }

// ---------------------------------------------------------------------------
// Strategy

SelectionStrategy SelectionStrategy::parse(const std::string& text, std::vector<std::string> captioners) {
    SelectionStrategy s;
    s.captioners = std::move(captioners);
    auto number_after = [&](const std::string& prefix, const std::string& suffix = "") -> std::optional<int> {
        if (text.size() <= prefix.size() + suffix.size()) return std::nullopt;
        if (text.compare(0, prefix.size(), prefix) != 0) return std::nullopt;
        if (!suffix.empty() && text.compare(text.size() - suffix.size(), suffix.size(), suffix) != 0) return std::nullopt;
        const std::string digits = text.substr(prefix.size(), text.size() - prefix.size() - suffix.size());
        if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) return std::nullopt;
        return std::stoi(digits);
    };
    if (text == "all") {
        s.kind = SelectionKind::All;
        s.k = 1;
    } else if (text == "middle1" || text == "middle") {
        s.kind = SelectionKind::MiddleOne;
        s.k = 1;
    } else if (auto k = number_after("rand-top")) {
        s.kind = SelectionKind::RandOfTopK;
        s.k = *k;
    } else if (auto k = number_after("combined")) {
        s.kind = SelectionKind::TopKCombined;
        s.k = *k;
    } else if (auto k = number_after("top", "-combined")) {
        s.kind = SelectionKind::TopKCombined;
        s.k = *k;
    } else if (auto k = number_after("top")) {
        s.kind = SelectionKind::TopKPerCaptioner;
        s.k = *k;
    } else {
        throw ConfigError("unknown selection strategy '" + text +
                          "' (expected all, middle1, top<K>, rand-top<K>, combined<K>)");
    }
    if (s.k < 1) throw ConfigError("selection K must be >= 1");
    return s;
}

std::string SelectionStrategy::name() const {
    switch (kind) {
        case SelectionKind::All: return "all";
        case SelectionKind::MiddleOne: return "middle1";
        case SelectionKind::TopKPerCaptioner: return "top" + std::to_string(k);
        case SelectionKind::TopKCombined: return "combined" + std::to_string(k);
        case SelectionKind::RandOfTopK: return "rand-top" + std::to_string(k);
    }
    return "?";
}

void SelectionStrategy::check() const {
    if (k < 1) throw ConfigError("selection K must be >= 1");
    if (captioners.empty()) throw ConfigError("selection strategy needs at least one captioner");
}

// ---------------------------------------------------------------------------
// select

namespace {

bool ranks_before(const CaptionRecord& a, const CaptionRecord& b) {
    if (a.clipscore != b.clipscore) return a.clipscore > b.clipscore;
    if (a.frame_index != b.frame_index) return a.frame_index < b.frame_index;
    return a.caption_id < b.caption_id;
}

bool frame_order(const CaptionRecord& a, const CaptionRecord& b) {
    if (a.frame_index != b.frame_index) return a.frame_index < b.frame_index;
    return a.caption_id < b.caption_id;
}

}  // namespace

CaptionPool select(const std::vector<CaptionRecord>& pool, const SelectionStrategy& strategy) {
    strategy.check();
    if (pool.empty()) throw DataError("cannot select from an empty caption pool");

    CaptionPool out;
    out.video_id = pool.front().video_id;
    out.strategy = strategy;
    out.sample_one_per_step = strategy.kind == SelectionKind::RandOfTopK;

    std::vector<std::vector<CaptionRecord>> per_captioner;
    for (const auto& label : strategy.captioners) {
        std::vector<CaptionRecord> mine;
        for (const auto& r : pool) {
            if (r.video_id != out.video_id) throw DataError("caption pool mixes videos " + out.video_id + " and " + r.video_id);
            if (r.captioner == label) mine.push_back(r);
        }
        if (mine.empty()) {
            throw MissingCaptionerError("captioner '" + label + "' has no captions for video " + out.video_id);
        }
        per_captioner.push_back(std::move(mine));
    }

    switch (strategy.kind) {
        case SelectionKind::All:
            for (auto& mine : per_captioner) {
                std::sort(mine.begin(), mine.end(), frame_order);
                out.selected.insert(out.selected.end(), mine.begin(), mine.end());
            }
            break;
        case SelectionKind::MiddleOne:
            for (auto& mine : per_captioner) {
                const int target = static_cast<int>(mine.size()) / 2;
                auto best = std::min_element(mine.begin(), mine.end(), [&](const auto& a, const auto& b) {
                    const int da = std::abs(a.frame_index - target);
                    const int db = std::abs(b.frame_index - target);
                    if (da != db) return da < db;
                    return frame_order(a, b);
                });
                out.selected.push_back(*best);
            }
            break;
        case SelectionKind::TopKPerCaptioner:
        case SelectionKind::RandOfTopK:
            for (std::size_t i = 0; i < per_captioner.size(); ++i) {
                auto& mine = per_captioner[i];
                std::sort(mine.begin(), mine.end(), ranks_before);
                if (static_cast<int>(mine.size()) < strategy.k) {
                    out.warnings.push_back("captioner '" + strategy.captioners[i] + "' has only " +
                                           std::to_string(mine.size()) + " captions for video " + out.video_id +
                                           ", wanted " + std::to_string(strategy.k));
                }
                const auto take = std::min<std::size_t>(mine.size(), static_cast<std::size_t>(strategy.k));
                out.selected.insert(out.selected.end(), mine.begin(), mine.begin() + static_cast<std::ptrdiff_t>(take));
            }
            break;
        case SelectionKind::TopKCombined: {
            std::vector<CaptionRecord> all;
            for (auto& mine : per_captioner) all.insert(all.end(), mine.begin(), mine.end());
            std::sort(all.begin(), all.end(), ranks_before);
            if (static_cast<int>(all.size()) < strategy.k) {
                out.warnings.push_back("video " + out.video_id + " has only " + std::to_string(all.size()) +
                                       " captions, wanted " + std::to_string(strategy.k));
            }
            const auto take = std::min<std::size_t>(all.size(), static_cast<std::size_t>(strategy.k));
            out.selected.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take));
            break;
        }
    }
    return out;
}

std::vector<CaptionPool> select_dataset(const Dataset& ds, const SelectionStrategy& strategy) {
    const auto by_video = ds.captions_by_video();
    std::vector<CaptionPool> pools;
    for (const auto& v : ds.manifest.videos) {
        auto it = by_video.find(v.video_id);
        if (it == by_video.end()) continue;
        std::vector<CaptionRecord> records;
        for (auto i : it->second) records.push_back(ds.manifest.captions[i]);
        pools.push_back(select(records, strategy));
    }
    return pools;
}

void write_selection(const std::vector<CaptionPool>& pools, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& p : pools) {
        json ids = json::array();
        for (const auto& r : p.selected) ids.push_back(r.caption_id);
        out << json{{"video_id", p.video_id}, {"caption_ids", ids}, {"sample_one", p.sample_one_per_step},
                    {"strategy", p.strategy.name()}, {"captioners", p.strategy.captioners}}
                   .dump()
            << "\n";
    }
    if (!out) throw IoError("write failed for " + path.string());
}

std::vector<CaptionPool> read_selection(const Dataset& ds, const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open selection file " + path.string());
    std::map<std::string, const CaptionRecord*> by_id;
    for (const auto& c : ds.manifest.captions) by_id[c.caption_id] = &c;

    std::vector<CaptionPool> pools;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            const auto j = json::parse(line);
            CaptionPool p;
            p.video_id = j.at("video_id").get<std::string>();
            p.sample_one_per_step = j.value("sample_one", false);
            p.strategy = SelectionStrategy::parse(j.value("strategy", std::string("all")),
                                                  j.value("captioners", std::vector<std::string>{}));
            for (const auto& id : j.at("caption_ids")) {
                auto it = by_id.find(id.get<std::string>());
                if (it == by_id.end()) throw DataError("selection references unknown caption " + id.get<std::string>());
                if (it->second->video_id != p.video_id) {
                    throw DataError("caption " + it->second->caption_id + " does not belong to video " + p.video_id);
                }
                p.selected.push_back(*it->second);
            }
            pools.push_back(std::move(p));
        } catch (const json::exception& e) {
            throw FormatError(path.string() + ": " + e.what());
        }
    }
    return pools;
}

// ---------------------------------------------------------------------------
// Nearest-neighbour captions

NnResult nn_caption_retrieve(VecView frame_emb, const EmbeddingTable& gallery, int k) {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (gallery.row_count() == 0) throw DataError("empty caption gallery");
    if (gallery.dim() != frame_emb.size()) {
        throw ShapeError("gallery dim " + std::to_string(gallery.dim()) + " != query dim " +
                         std::to_string(frame_emb.size()));
    }
    std::vector<std::pair<double, std::size_t>> scored(gallery.row_count());
    for (std::size_t r = 0; r < gallery.row_count(); ++r) scored[r] = {cosine(frame_emb, gallery.row_f64(r)), r};

    NnResult res;
    std::size_t take = static_cast<std::size_t>(k);
    if (take > scored.size()) {
        take = scored.size();
        res.truncated = true;
    }
    auto better = [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; };
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), better);
    for (std::size_t i = 0; i < take; ++i) res.rows.push_back(scored[i].second);
    return res;
}

Dataset with_nn_captions(const Dataset& ds, const EmbeddingTable& gallery, int frames_per_video, const std::string& label,
                         const std::vector<std::string>& gallery_hashes) {
    if (frames_per_video < 1) throw ConfigError("frames per video must be >= 1");
    if (!gallery_hashes.empty() && gallery_hashes.size() != gallery.row_count()) {
        throw ShapeError("gallery hash list does not match gallery rows");
    }
    Dataset out = ds;
    out.manifest.captions.clear();
    out.manifest.caption_text_table.reset();
    out.caption_text.reset();
    out.captions = EmbeddingTable(ds.dim());
    int max_frames = 0;
    for (std::size_t vi = 0; vi < ds.manifest.videos.size(); ++vi) {
        const auto& video = ds.manifest.videos[vi];
        const Matrix frames = ds.video_frames(vi);
        const int n = std::min<int>(frames_per_video, static_cast<int>(frames.rows()));
        max_frames = std::max(max_frames, n);
        for (int f = 0; f < n; ++f) {
            const auto hit = nn_caption_retrieve(frames.row(f), gallery, 1).rows.front();
            CaptionRecord rec;
            rec.video_id = video.video_id;
            rec.captioner = label;
            rec.frame_index = f;
            rec.caption_id = video.video_id + ":" + label + ":" + std::to_string(f);
            rec.embedding_row = out.captions.append(gallery.row(hit));
            rec.clipscore = compute_clipscore(frames.row(f), out.captions.row_f64(rec.embedding_row));
            rec.text_hash = gallery_hashes.empty() ? "gallery:" + std::to_string(hit) : gallery_hashes[hit];
            out.manifest.captions.push_back(std::move(rec));
        }
    }
    out.manifest.captioned_frames = max_frames;
    validate(out);
    return out;
}

// ---------------------------------------------------------------------------
// Statistics

namespace {

double unique_fraction(const std::vector<const CaptionRecord*>& recs) {
    std::set<std::string> hashes;
    for (const auto* r : recs) hashes.insert(*r->text_hash);
    return static_cast<double>(hashes.size()) / static_cast<double>(recs.size());
}

ScoreSummary summarize(const std::vector<double>& xs) {
    ScoreSummary s;
    s.histogram.assign(StatsReport::kHistogramBins, 0);
    s.count = xs.size();
    if (xs.empty()) return s;
    s.min = *std::min_element(xs.begin(), xs.end());
    s.max = *std::max_element(xs.begin(), xs.end());
    double sum = 0.0;
    for (double x : xs) sum += x;
    s.mean = sum / static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(xs.size()));
    for (double x : xs) {
        int bin = static_cast<int>(x / 2.5 * StatsReport::kHistogramBins);
        bin = std::clamp(bin, 0, StatsReport::kHistogramBins - 1);
        ++s.histogram[bin];
    }
    return s;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string fmt_pct(const std::optional<double>& v) {
    if (!v) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", *v);
    return buf;
}

std::string fmt(double v, int prec = 3) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

std::string render_rows(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width;
    for (const auto& r : rows) {
        width.resize(std::max(width.size(), r.size()), 0);
        for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
    }
    std::string out;
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            out += r[i];
            if (i + 1 < r.size()) out += std::string(width[i] - r[i].size() + 2, ' ');
        }
        out += "\n";
    }
    return out;
}

}  // namespace

StatsReport caption_stats(const Dataset& ds, const SelectionStrategy& strategy) {
    strategy.check();
    StatsReport rep;
    rep.dataset = ds.name();
    rep.strategy = strategy.name();

    const bool have_hashes = std::all_of(ds.manifest.captions.begin(), ds.manifest.captions.end(),
                                         [](const auto& c) { return c.text_hash.has_value(); });
    if (!have_hashes) {
        rep.unavailable.push_back("StatsUnavailable: text_hash missing on caption records; "
                                  "uniqueness and cross-captioner sharing not computed");
    }
    const bool have_text = ds.caption_text.has_value() && !ds.manifest.queries.empty() &&
                           ds.caption_text->dim() == ds.queries.dim();
    if (!have_text) {
        rep.unavailable.push_back("StatsUnavailable: no caption text table aligned with the query table; "
                                  "text CLIPScore not computed");
    }

    const auto by_video = ds.captions_by_video();
    std::map<std::string, std::vector<std::size_t>> queries_by_video;
    for (const auto& q : ds.manifest.queries) queries_by_video[q.video_id].push_back(q.embedding_row);

    SelectionStrategy combined = strategy;
    combined.kind = SelectionKind::TopKCombined;
    if (strategy.kind == SelectionKind::TopKPerCaptioner || strategy.kind == SelectionKind::RandOfTopK) {
        combined.k = strategy.k * static_cast<int>(strategy.captioners.size());
    }

    const std::size_t n_cap = strategy.captioners.size();
    std::vector<std::vector<double>> scores(n_cap);
    std::vector<double> uniq_before_sum(n_cap, 0.0), uniq_after_sum(n_cap, 0.0);
    std::vector<std::size_t> uniq_videos(n_cap, 0), uniq_after_videos(n_cap, 0);
    std::vector<std::size_t> combined_picks(n_cap, 0);
    std::size_t combined_total = 0;
    std::vector<double> tcs_all_sum(n_cap, 0.0), tcs_sel_sum(n_cap, 0.0), tcs_best_sum(n_cap, 0.0);
    std::vector<std::size_t> tcs_all_n(n_cap, 0), tcs_sel_n(n_cap, 0), tcs_best_n(n_cap, 0);
    double overall_before = 0.0, overall_after = 0.0;
    std::size_t shared = 0, shared_total = 0;
    std::map<int, std::size_t> distinct_frames;

    auto caption_tcs = [&](const CaptionRecord& c) {
        const auto& qs = queries_by_video[c.video_id];
        const Vec text = ds.caption_text->row_f64(c.embedding_row);
        double s = 0.0;
        for (auto q : qs) s += text_clipscore(text, ds.queries.row_f64(q));
        return s / static_cast<double>(qs.size());
    };

    for (const auto& video : ds.manifest.videos) {
        auto it = by_video.find(video.video_id);
        if (it == by_video.end()) continue;
        std::vector<CaptionRecord> records;
        for (auto i : it->second) records.push_back(ds.manifest.captions[i]);
        const CaptionPool pool = select(records, strategy);
        ++rep.videos;

        std::set<int> frames;
        for (const auto& r : pool.selected) frames.insert(r.frame_index);
        ++distinct_frames[static_cast<int>(frames.size())];

        for (const auto& r : select(records, combined).selected) {
            const auto pos = std::find(strategy.captioners.begin(), strategy.captioners.end(), r.captioner);
            ++combined_picks[static_cast<std::size_t>(pos - strategy.captioners.begin())];
            ++combined_total;
        }

        std::vector<const CaptionRecord*> included, chosen;
        for (std::size_t ci = 0; ci < n_cap; ++ci) {
            std::vector<const CaptionRecord*> mine, mine_sel;
            for (const auto& r : records) {
                if (r.captioner == strategy.captioners[ci]) mine.push_back(&r);
            }
            for (const auto& r : pool.selected) {
                if (r.captioner == strategy.captioners[ci]) mine_sel.push_back(&r);
            }
            included.insert(included.end(), mine.begin(), mine.end());
            chosen.insert(chosen.end(), mine_sel.begin(), mine_sel.end());
            for (const auto* r : mine) scores[ci].push_back(r->clipscore);
            if (have_hashes) {
                uniq_before_sum[ci] += unique_fraction(mine);
                ++uniq_videos[ci];
                if (!mine_sel.empty()) {
                    uniq_after_sum[ci] += unique_fraction(mine_sel);
                    ++uniq_after_videos[ci];
                }
            }
            if (have_text && !queries_by_video[video.video_id].empty()) {
                double best = 0.0;
                for (const auto* r : mine) {
                    const double s = caption_tcs(*r);
                    tcs_all_sum[ci] += s;
                    ++tcs_all_n[ci];
                    best = std::max(best, s);
                }
                for (const auto* r : mine_sel) {
                    tcs_sel_sum[ci] += caption_tcs(*r);
                    ++tcs_sel_n[ci];
                }
                tcs_best_sum[ci] += best;
                ++tcs_best_n[ci];
            }
        }
        if (have_hashes) {
            overall_before += unique_fraction(included);
            if (!chosen.empty()) overall_after += unique_fraction(chosen);
            std::map<std::string, std::set<std::string>> owners;
            for (const auto* r : included) owners[*r->text_hash].insert(r->captioner);
            for (const auto* r : included) {
                if (owners[*r->text_hash].size() > 1) ++shared;
                ++shared_total;
            }
        }
    }

    for (std::size_t ci = 0; ci < n_cap; ++ci) {
        CaptionerStats cs;
        cs.captioner = strategy.captioners[ci];
        cs.clipscore = summarize(scores[ci]);
        if (have_hashes && uniq_videos[ci] > 0) {
            cs.unique_before_pct = 100.0 * uniq_before_sum[ci] / static_cast<double>(uniq_videos[ci]);
            if (uniq_after_videos[ci] > 0) cs.unique_after_pct = 100.0 * uniq_after_sum[ci] / static_cast<double>(uniq_after_videos[ci]);
        }
        cs.combined_topk_share_pct = combined_total ? 100.0 * static_cast<double>(combined_picks[ci]) / static_cast<double>(combined_total) : 0.0;
        if (tcs_all_n[ci] > 0) {
            cs.text_clipscore = TextScoreSummary{tcs_all_sum[ci] / static_cast<double>(tcs_all_n[ci]),
                                                 tcs_sel_n[ci] ? tcs_sel_sum[ci] / static_cast<double>(tcs_sel_n[ci]) : 0.0,
                                                 tcs_best_sum[ci] / static_cast<double>(tcs_best_n[ci])};
        }
        rep.captioners.push_back(std::move(cs));
    }
    if (rep.videos > 0) {
        if (have_hashes) {
            rep.unique_before_pct = 100.0 * overall_before / static_cast<double>(rep.videos);
            rep.unique_after_pct = 100.0 * overall_after / static_cast<double>(rep.videos);
            rep.shared_across_captioners_pct = shared_total ? 100.0 * static_cast<double>(shared) / static_cast<double>(shared_total) : 0.0;
        }
        for (const auto& [k, n] : distinct_frames) {
            rep.distinct_frames_pct[k] = 100.0 * static_cast<double>(n) / static_cast<double>(rep.videos);
        }
    }
    return rep;
}

std::string StatsReport::to_json() const {
    json j;
    j["dataset"] = dataset;
    j["strategy"] = strategy;
    j["videos"] = videos;
    j["unique_before_pct"] = opt(unique_before_pct);
    j["unique_after_pct"] = opt(unique_after_pct);
    j["shared_across_captioners_pct"] = opt(shared_across_captioners_pct);
    json frames = json::object();
    for (const auto& [k, v] : distinct_frames_pct) frames[std::to_string(k)] = v;
    j["distinct_frames_pct"] = frames;
    j["captioners"] = json::array();
    for (const auto& c : captioners) {
        json cj{{"captioner", c.captioner},
                {"unique_before_pct", opt(c.unique_before_pct)},
                {"unique_after_pct", opt(c.unique_after_pct)},
                {"combined_topk_share_pct", c.combined_topk_share_pct},
                {"clipscore",
                 {{"count", c.clipscore.count},
                  {"mean", c.clipscore.mean},
                  {"stddev", c.clipscore.stddev},
                  {"min", c.clipscore.min},
                  {"max", c.clipscore.max},
                  {"histogram", c.clipscore.histogram}}}};
        if (c.text_clipscore) {
            cj["text_clipscore"] = {{"all", c.text_clipscore->all},
                                    {"selected", c.text_clipscore->selected},
                                    {"best", c.text_clipscore->best}};
        } else {
            cj["text_clipscore"] = nullptr;
        }
        j["captioners"].push_back(std::move(cj));
    }
    j["unavailable"] = unavailable;
    return j.dump(2);
}

std::string StatsReport::to_table() const {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"captioner", "clipscore mean", "std", "unique (all)", "unique (selected)", "combined share",
                    "T-CS all", "T-CS selected", "T-CS best"});
    for (const auto& c : captioners) {
        rows.push_back({c.captioner, fmt(c.clipscore.mean), fmt(c.clipscore.stddev), fmt_pct(c.unique_before_pct),
                        fmt_pct(c.unique_after_pct), fmt_pct(c.combined_topk_share_pct),
                        c.text_clipscore ? fmt(c.text_clipscore->all) : "n/a",
                        c.text_clipscore ? fmt(c.text_clipscore->selected) : "n/a",
                        c.text_clipscore ? fmt(c.text_clipscore->best) : "n/a"});
    }
    rows.push_back({"(all)", "", "", fmt_pct(unique_before_pct), fmt_pct(unique_after_pct), "", "", "", ""});
    std::string out = "dataset " + dataset + ", strategy " + strategy + ", " + std::to_string(videos) + " videos\n";
    out += render_rows(rows);
    out += "\n";
    std::vector<std::vector<std::string>> frame_rows{{"distinct frames", "videos"}};
    for (auto it = distinct_frames_pct.rbegin(); it != distinct_frames_pct.rend(); ++it) {
        frame_rows.push_back({std::to_string(it->first) + " frames", fmt_pct(it->second)});
    }
    out += render_rows(frame_rows);
    out += "shared across captioners: " + fmt_pct(shared_across_captioners_pct) + "\n";
    for (const auto& u : unavailable) out += u + "\n";
    return out;
}

}  // namespace capret
