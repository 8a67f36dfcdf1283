#pragma once

#include "capret/embstore.hpp"
#include "capret/evaluator.hpp"
#include "capret/trainer.hpp"

#include <optional>
#include <string>
#include <vector>

namespace capret {

/// One trained (or frozen) model evaluated on one or more datasets.
struct SweepCell {
    std::string block;  // e.g. captioner label for the selection axis
    std::string label;  // row label
    std::string train;  // temporal pooling used in training ("-" when frozen)
    std::optional<TrainConfig> config;  // nullopt = frozen backbone
    std::vector<std::size_t> train_datasets;
    std::vector<std::size_t> eval_datasets;
    EvalMode eval_mode = EvalMode::QS;
};

struct SweepOptions {
    std::string axis;  // selection | captioners | pooling | datasets | cross
    TrainConfig base;
    std::vector<std::uint64_t> seeds{0};
    int jobs = 1;
    std::vector<std::string> cells;  // restrict to these labels (empty = all)
    std::optional<fs::path> cell_dir;  // per-cell logs and checkpoints
};

struct SweepResult {
    std::string csv;
    std::vector<std::string> failures;
    std::size_t cells = 0;
};

std::vector<std::string> sweep_axes();

/// Expands an axis into cells. Throws ConfigError on unknown axes, unknown
/// cell labels or a dataset count the axis cannot use.
std::vector<SweepCell> plan_sweep(const SweepOptions& options, const std::vector<const Dataset*>& datasets);

/// Runs every (cell, seed) pair. Cell failures are recorded in the CSV and in
/// `failures`; the sweep itself continues. Row order depends only on the plan,
/// never on scheduling.
SweepResult run_sweep(const SweepOptions& options, const std::vector<const Dataset*>& datasets);

}  // namespace capret
