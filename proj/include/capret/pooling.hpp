#pragma once

#include "capret/linalg.hpp"

#include <optional>
#include <string>

namespace capret {

enum class CaptionCombine { Mean, WeightedByClipScore };
enum class EvalMode { MeanPool, QS, MCQS };

struct PoolingConfig {
    double tau = 0.1;  // query-scoring softmax temperature
    CaptionCombine caption_combine = CaptionCombine::Mean;
    double weighted_temperature = 0.1;  // softmax over raw CLIPScores
    EvalMode eval_mode = EvalMode::QS;

    void check() const;  // throws ConfigError
};

EvalMode parse_eval_mode(const std::string& s);
std::string to_string(EvalMode m);
CaptionCombine parse_caption_combine(const std::string& s);
std::string to_string(CaptionCombine c);

struct QsResult {
    Vec pooled;   // not re-normalized
    Vec weights;  // softmax over frames, sums to 1
};

/// Query-scoring temporal pooling: frames weighted by softmax(cos(frame, text) / tau).
QsResult qs_pool(const Matrix& frames, VecView text, double tau);

/// Per-caption weights used by multi-caption similarity: 1/L for Mean,
/// softmax(clipscore / weighted_temperature) otherwise.
Vec caption_weights(std::size_t count, const PoolingConfig& config, std::optional<VecView> clipscores);

/// Multi-caption query-scoring similarity: each caption pools the frames
/// on its own, and the resulting cosines are combined by `caption_weights`.
double mcqs_similarity(const Matrix& frames, const Matrix& captions, const PoolingConfig& config,
                       std::optional<VecView> clipscores = std::nullopt);

/// Single-text query-scoring similarity: cos(qs_pool(frames, text), text).
double qs_similarity(const Matrix& frames, VecView text, double tau);

/// cos(mean of frames, text). A zero mean raises DataError.
double mean_pool_similarity(const Matrix& frames, VecView text);

}  // namespace capret
