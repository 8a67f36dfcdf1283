#pragma once

#include "capret/embstore.hpp"
#include "capret/linalg.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace capret {

/// CLIPScore: 2.5 * max(cos(image, text), 0).
double compute_clipscore(VecView image_emb, VecView text_emb);

/// The same metric applied between two text embeddings.
double text_clipscore(VecView text_a, VecView text_b);

enum class SelectionKind { All, MiddleOne, TopKPerCaptioner, TopKCombined, RandOfTopK };

struct SelectionStrategy {
    SelectionKind kind = SelectionKind::TopKPerCaptioner;
    int k = 2;
    std::vector<std::string> captioners;

    /// Parses "all", "middle1", "top<K>", "combined<K>" / "top<K>-combined",
    /// "rand-top<K>". Throws ConfigError.
    static SelectionStrategy parse(const std::string& text, std::vector<std::string> captioners = {});
    std::string name() const;
    void check() const;  // K >= 1, captioners non-empty; throws ConfigError
};

struct CaptionPool {
    std::string video_id;
    std::vector<CaptionRecord> selected;
    SelectionStrategy strategy;
    // The trainer draws one record per step instead of using them jointly.
    bool sample_one_per_step = false;
    std::vector<std::string> warnings;
};

/// Applies a selection strategy to the captions of one video.
///
/// Ordering within a captioner is (clipscore desc, frame_index asc,
/// caption_id asc). Per-captioner results are concatenated in the order of
/// `strategy.captioners`. The function is deterministic; RandOfTopK only
/// marks the pool so the trainer samples from it.
CaptionPool select(const std::vector<CaptionRecord>& pool, const SelectionStrategy& strategy);

/// Selection over every video of a dataset (videos without captions are skipped).
std::vector<CaptionPool> select_dataset(const Dataset& ds, const SelectionStrategy& strategy);

/// JSONL: one {"video_id", "caption_ids", "sample_one", "strategy"} per video.
void write_selection(const std::vector<CaptionPool>& pools, const fs::path& path);
std::vector<CaptionPool> read_selection(const Dataset& ds, const fs::path& path);

struct NnResult {
    std::vector<std::size_t> rows;
    bool truncated = false;  // k exceeded the gallery size
};

/// k gallery rows most cosine-similar to the query, descending, ties by row.
NnResult nn_caption_retrieve(VecView frame_emb, const EmbeddingTable& gallery, int k);

/// Replaces the caption pool of `ds` with nearest-neighbour captions retrieved
/// from `gallery` (one per frame, up to `frames_per_video`), scored with
/// CLIPScore against the querying frame. `gallery_hashes` may be empty.
Dataset with_nn_captions(const Dataset& ds, const EmbeddingTable& gallery, int frames_per_video,
                         const std::string& label = "NN",
                         const std::vector<std::string>& gallery_hashes = {});

struct ScoreSummary {
    std::size_t count = 0;
    double mean = 0.0;
    double stddev = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::vector<std::size_t> histogram;  // kHistogramBins bins over [0, 2.5]
};

struct TextScoreSummary {
    double all = 0.0;       // mean over every caption
    double selected = 0.0;  // mean over selected captions
    double best = 0.0;      // mean over videos of the best caption
};

struct CaptionerStats {
    std::string captioner;
    std::optional<double> unique_before_pct;
    std::optional<double> unique_after_pct;
    ScoreSummary clipscore;
    double combined_topk_share_pct = 0.0;  // share of TopKCombined picks
    std::optional<TextScoreSummary> text_clipscore;
};

struct StatsReport {
    std::string dataset;
    std::string strategy;
    std::size_t videos = 0;
    std::vector<CaptionerStats> captioners;
    std::optional<double> unique_before_pct;
    std::optional<double> unique_after_pct;
    // distinct source frames among the selected captions -> % of videos
    std::map<int, double> distinct_frames_pct;
    std::optional<double> shared_across_captioners_pct;
    std::vector<std::string> unavailable;

    static constexpr int kHistogramBins = 25;

    std::string to_json() const;
    std::string to_table() const;
};

StatsReport caption_stats(const Dataset& ds, const SelectionStrategy& strategy);

}  // namespace capret
