#pragma once

#include "capret/captionsel.hpp"
#include "capret/embstore.hpp"
#include "capret/model.hpp"
#include "capret/pooling.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace capret {

/// Temporal pooling used inside the training objective.
enum class TemporalPooling { QS, Mean };

TemporalPooling parse_temporal_pooling(const std::string& s);
std::string to_string(TemporalPooling t);

struct TrainConfig {
    int batch_size = 32;
    int epochs = 10;
    double lr0 = 1e-2;
    double infonce_temperature = 0.05;
    int warmup_steps = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    PoolingConfig pooling;
    TemporalPooling temporal = TemporalPooling::QS;
    SelectionStrategy strategy;  // empty captioner list = every captioner in the data
    // Draw one caption per step even when the pool is not Rand(Top K).
    bool single_caption = false;

    void check() const;  // throws ConfigError

    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);  // unknown keys -> ConfigError
    std::uint64_t hash() const;                             // fnv1a of to_json()
};

/// One training sample: raw (unprojected) frames and the caption rows used
/// for this step, with their CLIPScores.
struct TrainSample {
    Matrix frames;
    Matrix captions;
    Vec clipscores;
};

struct LossBreakdown {
    double l_v2c = 0.0;
    double l_c2v = 0.0;
    double total = 0.0;
};

struct ModelGradient {
    Matrix w_visual;
    Vec b_visual;
    Matrix w_text;
    Vec b_text;

    static ModelGradient zeros(std::size_t dim);
};

/// Symmetric InfoNCE over the B x B similarity matrix computed with the
/// pooling functions (QS or mean temporal pooling, caption weights from
/// config.pooling). Throws EmptyBatchError on B = 0.
LossBreakdown batch_loss(const ProjectionModel& model, std::span<const TrainSample> batch, const TrainConfig& config);

/// Analytic gradient of batch_loss().total with respect to every parameter.
ModelGradient batch_gradient(const ProjectionModel& model, std::span<const TrainSample> batch,
                             const TrainConfig& config, LossBreakdown* loss = nullptr);

/// Learning rate at step t of total_steps: linear warmup, then cosine decay to 0.
double lr_at(std::int64_t step, std::int64_t total_steps, double lr0, std::int64_t warmup_steps);

/// Adam state over the flattened parameters of a ProjectionModel.
class AdamState {
public:
    AdamState(std::size_t dim, double beta1, double beta2, double eps);
    void step(ProjectionModel& model, const ModelGradient& grad, double lr);
    std::int64_t steps() const noexcept { return t_; }

private:
    double beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<double> m_, v_;
};

/// A video and the caption rows it trains against.
struct TrainingItem {
    std::string dataset;
    std::string video_id;
    Matrix frames;
    Matrix captions;
    Vec clipscores;
    bool sample_one = false;
};

/// Training items for the train-split videos of `ds` that have a pool.
std::vector<TrainingItem> training_items(const Dataset& ds, const std::vector<CaptionPool>& pools);

/// Training items whose captions are the ground-truth query rows of each
/// train-split video. With all_gt = false one GT row is drawn per step.
std::vector<TrainingItem> gt_training_items(const Dataset& ds, bool all_gt);

struct EpochLog {
    int epoch = 0;
    double mean_loss = 0.0;
    double lr = 0.0;  // learning rate of the last step of the epoch
    std::int64_t steps = 0;
    std::string eval_json;  // empty when no hook is set

    std::string to_jsonl() const;
};

/// Called after each epoch (and once before training with epoch 0). Returns
/// a JSON object string to attach to the log line, or an empty string.
using EpochHook = std::function<std::string(int epoch, const ProjectionModel&)>;

struct TrainResult {
    ProjectionModel model;
    std::vector<EpochLog> log;
    std::int64_t steps = 0;
    std::optional<std::string> initial_eval_json;
};

/// Core loop over prepared items. Each epoch shuffles the items and walks them
/// in batches of config.batch_size (the last batch may be smaller).
TrainResult train_items(std::vector<TrainingItem> items, const TrainConfig& config, ProjectionModel init,
                        const EpochHook& hook = {});

struct TrainInput {
    const Dataset* dataset = nullptr;
    // Preselected pools; when empty the config strategy is applied.
    std::vector<CaptionPool> pools;
};

/// Trains on the union of the train splits of every input. Throws
/// EmptyDatasetError when there is nothing to train on.
TrainResult train(const std::vector<TrainInput>& inputs, const TrainConfig& config,
                  std::optional<ProjectionModel> init = std::nullopt, const EpochHook& hook = {});

/// Same loop with ground-truth caption groups as the caption pool.
/// Throws ConfigError when the dataset has no groups.
TrainResult finetune_gt(const ProjectionModel& init, const Dataset& ds, const TrainConfig& config, bool all_gt,
                        const EpochHook& hook = {});

/// Resolves an empty captioner list in the strategy to the dataset's labels.
SelectionStrategy resolve_strategy(SelectionStrategy s, const Dataset& ds);

}  // namespace capret
