#pragma once

#include "capret/embstore.hpp"
#include "capret/model.hpp"
#include "capret/pooling.hpp"

#include <map>
#include <string>
#include <vector>

namespace capret {

struct SimilarityMatrix {
    Matrix values;  // rows = queries, cols = gallery videos
    std::vector<std::string> row_ids;
    std::vector<std::string> col_ids;

    void check() const;  // finite, in [-1, 1], unique ids; throws EvalError
};

/// Retrieval problem for one dataset split: similarity matrix plus the
/// ground-truth video of every row.
struct RetrievalSetup {
    SimilarityMatrix sim;
    std::map<std::string, std::string> gt;  // row id -> video id
};

/// Projects frames and queries of the split through `model` (nullptr =
/// frozen backbone) and scores every query against every gallery video.
/// MCQS rows are per-video ground-truth groups used jointly.
RetrievalSetup build_similarity(const ProjectionModel* model, const Dataset& ds, EvalMode mode,
                                const PoolingConfig& pooling, const std::string& split = "test");

struct DirectionMetrics {
    std::map<int, double> recall;  // k -> R@k
    double median_rank = 0.0;
    double mean_rank = 0.0;
    std::size_t count = 0;
};

struct EvalReport {
    std::string dataset;
    std::string mode;
    std::string fingerprint;
    DirectionMetrics t2v;
    DirectionMetrics v2t;

    std::string to_json() const;
    /// One row per (dataset, direction, k): dataset,mode,direction,k,recall
    std::string to_csv(bool header = true) const;
};

inline const std::vector<int> kDefaultKs{1, 5, 10};

/// Ranks each row's GT column under (similarity desc, col id asc). For the
/// video-to-text direction each gallery video counts its best-ranked GT row.
/// Median rank is the lower middle for an even count.
EvalReport recall_at_k(const SimilarityMatrix& sim, const std::map<std::string, std::string>& gt,
                       const std::vector<int>& ks = kDefaultKs);

/// Per-query rank of the GT column (1-based), in row order.
std::vector<std::size_t> t2v_ranks(const SimilarityMatrix& sim, const std::map<std::string, std::string>& gt);

EvalReport evaluate(const ProjectionModel* model, const Dataset& ds, EvalMode mode, const PoolingConfig& pooling,
                    const std::vector<int>& ks = kDefaultKs, const std::string& split = "test");

/// Text-only baseline: a video is represented by the mean caption-text
/// embedding of its k_select highest-CLIPScore captions (over `captioners`,
/// empty = all) and scored against the queries by cosine.
/// Requires the dataset's caption_text table (ConfigError otherwise).
EvalReport caption_bottleneck_eval(const Dataset& ds, int k_select, const std::vector<std::string>& captioners = {},
                                   const std::vector<int>& ks = kDefaultKs, const std::string& split = "test");

struct CrossEvalGrid {
    std::vector<std::string> row_names;  // "frozen" first, then models
    std::vector<std::string> col_names;  // datasets
    std::vector<std::vector<EvalReport>> reports;

    /// train,eval,direction,R@k... one line per (row, col, direction).
    std::string to_csv() const;
};

CrossEvalGrid cross_eval(const std::vector<std::pair<std::string, ProjectionModel>>& models,
                         const std::vector<std::pair<std::string, const Dataset*>>& datasets, EvalMode mode,
                         const PoolingConfig& pooling, const std::vector<int>& ks = kDefaultKs);

/// Aligned text rendering of a CSV string.
std::string render_table(const std::string& csv);

}  // namespace capret
