#include "capret/pooling.hpp"

#include "capret/errors.hpp"

#include <algorithm>
#include <cmath>

namespace capret {

void PoolingConfig::check() const {
    if (!(tau > 0.0)) throw ConfigError("pooling temperature tau must be positive");
    if (!(weighted_temperature > 0.0)) throw ConfigError("weighted caption temperature must be positive");
}

EvalMode parse_eval_mode(const std::string& s) {
    if (s == "mean" || s == "meanpool") return EvalMode::MeanPool;
    if (s == "qs") return EvalMode::QS;
    if (s == "mcqs") return EvalMode::MCQS;
    throw ConfigError("unknown evaluation mode '" + s + "' (expected mean, qs, mcqs)");
}

std::string to_string(EvalMode m) {
    switch (m) {
        case EvalMode::MeanPool: return "mean";
        case EvalMode::QS: return "qs";
        case EvalMode::MCQS: return "mcqs";
    }
    return "?";
}

CaptionCombine parse_caption_combine(const std::string& s) {
    if (s == "mean") return CaptionCombine::Mean;
    if (s == "weighted") return CaptionCombine::WeightedByClipScore;
    throw ConfigError("unknown caption combine '" + s + "' (expected mean, weighted)");
}

std::string to_string(CaptionCombine c) { return c == CaptionCombine::Mean ? "mean" : "weighted"; }

namespace {

void check_frames(const Matrix& frames, VecView text) {
    if (frames.rows() == 0) throw DataError("query-scoring needs at least one frame");
    if (frames.cols() != text.size()) {
        throw ShapeError("frame dim " + std::to_string(frames.cols()) + " != text dim " + std::to_string(text.size()));
    }
}

}  // namespace

QsResult qs_pool(const Matrix& frames, VecView text, double tau) {
    check_frames(frames, text);
    if (!(tau > 0.0)) throw ConfigError("tau must be positive");
    const std::size_t n = frames.rows();
    Vec logits(n);
    for (std::size_t i = 0; i < n; ++i) logits[i] = cosine(frames.row(i), text);

    // exp((s - max) / tau), normalized at the end so identical frames pool exactly.
    const double mx = *std::max_element(logits.begin(), logits.end());
    Vec e(n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        e[i] = std::exp((logits[i] - mx) / tau);
        z += e[i];
    }
    QsResult r;
    r.pooled.assign(frames.cols(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto f = frames.row(i);
        for (std::size_t c = 0; c < f.size(); ++c) r.pooled[c] += e[i] * f[c];
    }
    for (double& x : r.pooled) x /= z;
    r.weights.resize(n);
    for (std::size_t i = 0; i < n; ++i) r.weights[i] = e[i] / z;
    return r;
}

Vec caption_weights(std::size_t count, const PoolingConfig& config, std::optional<VecView> clipscores) {
    if (count == 0) throw DataError("multi-caption similarity needs at least one caption");
    if (config.caption_combine == CaptionCombine::Mean) return Vec(count, 1.0 / static_cast<double>(count));
    if (!clipscores) throw ConfigError("weighted caption combination requires CLIPScores");
    if (clipscores->size() != count) {
        throw ShapeError("got " + std::to_string(clipscores->size()) + " CLIPScores for " + std::to_string(count) +
                         " captions");
    }
    return softmax(*clipscores, config.weighted_temperature);
}

double qs_similarity(const Matrix& frames, VecView text, double tau) {
    const auto pooled = qs_pool(frames, text, tau);
    return cosine(pooled.pooled, text);
}

double mcqs_similarity(const Matrix& frames, const Matrix& captions, const PoolingConfig& config,
                       std::optional<VecView> clipscores) {
    config.check();
    const Vec alpha = caption_weights(captions.rows(), config, clipscores);
    double phi = 0.0;
    for (std::size_t l = 0; l < captions.rows(); ++l) {
        phi += alpha[l] * qs_similarity(frames, captions.row(l), config.tau);
    }
    return std::clamp(phi, -1.0, 1.0);
}

double mean_pool_similarity(const Matrix& frames, VecView text) {
    check_frames(frames, text);
    Vec mean(frames.cols(), 0.0);
    for (std::size_t i = 0; i < frames.rows(); ++i) {
        auto f = frames.row(i);
        if (norm(f) == 0.0) throw DataError("zero-norm frame " + std::to_string(i));
        for (std::size_t c = 0; c < f.size(); ++c) mean[c] += f[c];
    }
    for (double& x : mean) x /= static_cast<double>(frames.rows());
    if (norm(mean) == 0.0) throw DataError("mean of frames is the zero vector; cosine undefined");
    return cosine(mean, text);
}

}  // namespace capret
