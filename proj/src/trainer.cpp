#include "capret/trainer.hpp"

#include "capret/errors.hpp"
#include "capret/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <unordered_map>

namespace capret {

using nlohmann::json;

TemporalPooling parse_temporal_pooling(const std::string& s) {
    if (s == "qs") return TemporalPooling::QS;
    if (s == "mean") return TemporalPooling::Mean;
    throw ConfigError("unknown temporal pooling '" + s + "' (expected qs, mean)");
}

std::string to_string(TemporalPooling t) { return t == TemporalPooling::QS ? "qs" : "mean"; }

void TrainConfig::check() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (!(lr0 >= 0.0) || !std::isfinite(lr0)) throw ConfigError("lr0 must be a finite non-negative number");
    if (!(infonce_temperature > 0.0)) throw ConfigError("infonce_temperature must be positive");
    if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
    pooling.check();
    if (strategy.k < 1) throw ConfigError("selection K must be >= 1");
}

std::string TrainConfig::to_json() const {
    json j{{"batch_size", batch_size},
           {"epochs", epochs},
           {"lr0", lr0},
           {"infonce_temperature", infonce_temperature},
           {"warmup_steps", warmup_steps},
           {"adam_beta1", adam_beta1},
           {"adam_beta2", adam_beta2},
           {"adam_eps", adam_eps},
           {"seed", seed},
           {"tau", pooling.tau},
           {"caption_combine", capret::to_string(pooling.caption_combine)},
           {"weighted_temperature", pooling.weighted_temperature},
           {"temporal", capret::to_string(temporal)},
           {"strategy", strategy.name()},
           {"captioners", strategy.captioners},
           {"single_caption", single_caption}};
    return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    static const std::set<std::string> known{"batch_size", "epochs",       "lr0",         "infonce_temperature",
                                             "warmup_steps", "adam_beta1", "adam_beta2",  "adam_eps",
                                             "seed",       "tau",          "caption_combine", "weighted_temperature",
                                             "temporal",   "strategy",     "captioners",  "single_caption"};
    TrainConfig c;
    try {
        const json j = json::parse(text);
        for (const auto& [k, _] : j.items()) {
            if (!known.count(k)) throw ConfigError("unknown training config key '" + k + "'");
        }
        c.batch_size = j.value("batch_size", c.batch_size);
        c.epochs = j.value("epochs", c.epochs);
        c.lr0 = j.value("lr0", c.lr0);
        c.infonce_temperature = j.value("infonce_temperature", c.infonce_temperature);
        c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
        c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
        c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
        c.adam_eps = j.value("adam_eps", c.adam_eps);
        c.seed = j.value("seed", c.seed);
        c.pooling.tau = j.value("tau", c.pooling.tau);
        if (j.contains("caption_combine")) c.pooling.caption_combine = parse_caption_combine(j.at("caption_combine"));
        c.pooling.weighted_temperature = j.value("weighted_temperature", c.pooling.weighted_temperature);
        if (j.contains("temporal")) c.temporal = parse_temporal_pooling(j.at("temporal"));
        const auto caps = j.value("captioners", std::vector<std::string>{});
        if (j.contains("strategy")) c.strategy = SelectionStrategy::parse(j.at("strategy"), caps);
        else c.strategy.captioners = caps;
        c.single_caption = j.value("single_caption", c.single_caption);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad training config: ") + e.what());
    }
    c.check();
    return c;
}

std::uint64_t TrainConfig::hash() const { return fnv1a64(to_json()); }

ModelGradient ModelGradient::zeros(std::size_t dim) {
    return {Matrix(dim, dim), Vec(dim, 0.0), Matrix(dim, dim), Vec(dim, 0.0)};
}

namespace {

// Projected batch: frames and captions of every sample after the affine heads.
struct Projected {
    std::vector<Matrix> frames;
    std::vector<Matrix> captions;
    std::vector<Vec> alpha;
};

Projected project(const ProjectionModel& model, std::span<const TrainSample> batch, const TrainConfig& config) {
    Projected p;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& s = batch[b];
        if (s.frames.rows() == 0 || s.captions.rows() == 0) {
            throw DataError("sample " + std::to_string(b) + " has no frames or no captions");
        }
        p.frames.push_back(forward_embed_rows(model, s.frames, Modality::Visual));
        p.captions.push_back(forward_embed_rows(model, s.captions, Modality::Text));
        std::optional<VecView> cs;
        if (!s.clipscores.empty()) cs = VecView(s.clipscores);
        p.alpha.push_back(caption_weights(s.captions.rows(), config.pooling, cs));
    }
    return p;
}

double checked_norm(VecView v, const char* what, std::size_t sample) {
    const double n = norm(v);
    if (n == 0.0) throw DataError(std::string("zero-norm ") + what + " in sample " + std::to_string(sample));
    return n;
}

// Forward and backward of sum_l alpha_l * cos(pool(frames, c_l), c_l) for one
// (video, caption set) pair. Accumulates g * d/d(inputs) into dframes and
// dcaps when they are non-null. Returns the similarity.
double pair_pass(const Matrix& frames, const Matrix& caps, const Vec& alpha, double tau, TemporalPooling temporal,
                 std::size_t sample, double g, Matrix* dframes, Matrix* dcaps) {
    const std::size_t n = frames.rows();
    const std::size_t d = frames.cols();
    Vec nf(n), s(n), w(n), v(d), dv(d), dw(n);
    for (std::size_t i = 0; i < n; ++i) nf[i] = checked_norm(frames.row(i), "frame", sample);

    double phi = 0.0;
    for (std::size_t l = 0; l < caps.rows(); ++l) {
        const VecView c = caps.row(l);
        const double nc = checked_norm(c, "caption", sample);
        if (temporal == TemporalPooling::QS) {
            for (std::size_t i = 0; i < n; ++i) s[i] = dot(frames.row(i), c) / (nf[i] * nc);
            w = softmax(s, tau);
        } else {
            std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(n));
        }
        std::fill(v.begin(), v.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const VecView f = frames.row(i);
            for (std::size_t k = 0; k < d; ++k) v[k] += w[i] * f[k];
        }
        const double nv = checked_norm(v, "pooled vector", sample);
        const double out = dot(v, c) / (nv * nc);
        phi += alpha[l] * out;
        if (!dframes) continue;

        const double gl = g * alpha[l];
        auto dc = dcaps->row(l);
        for (std::size_t k = 0; k < d; ++k) {
            dv[k] = gl * (c[k] / (nv * nc) - out * v[k] / (nv * nv));
            dc[k] += gl * (v[k] / (nv * nc) - out * c[k] / (nc * nc));
        }
        for (std::size_t i = 0; i < n; ++i) {
            auto df = dframes->row(i);
            for (std::size_t k = 0; k < d; ++k) df[k] += w[i] * dv[k];
            dw[i] = dot(dv, frames.row(i));
        }
        if (temporal != TemporalPooling::QS) continue;
        double wdw = 0.0;
        for (std::size_t i = 0; i < n; ++i) wdw += w[i] * dw[i];
        for (std::size_t i = 0; i < n; ++i) {
            const double ds = w[i] / tau * (dw[i] - wdw);
            const VecView f = frames.row(i);
            auto df = dframes->row(i);
            for (std::size_t k = 0; k < d; ++k) {
                df[k] += ds * (c[k] / (nf[i] * nc) - s[i] * f[k] / (nf[i] * nf[i]));
                dc[k] += ds * (f[k] / (nf[i] * nc) - s[i] * c[k] / (nc * nc));
            }
        }
    }
    return phi;
}

// Loss from a B x B similarity matrix. When dphi is set it receives dL/dPhi.
LossBreakdown infonce(const Matrix& phi, double temperature, Matrix* dphi) {
    const std::size_t b = phi.rows();
    const double inv_b = 1.0 / static_cast<double>(b);
    Matrix z(b, b);
    for (std::size_t i = 0; i < b * b; ++i) z.data()[i] = phi.data()[i] / temperature;

    LossBreakdown out;
    Matrix prow(b, b), pcol(b, b);
    Vec buf(b);
    for (std::size_t i = 0; i < b; ++i) {
        const double lse = log_sum_exp(z.row(i));
        out.l_v2c += lse - z(i, i);
        for (std::size_t j = 0; j < b; ++j) prow(i, j) = std::exp(z(i, j) - lse);
    }
    for (std::size_t j = 0; j < b; ++j) {
        for (std::size_t i = 0; i < b; ++i) buf[i] = z(i, j);
        const double lse = log_sum_exp(buf);
        out.l_c2v += lse - z(j, j);
        for (std::size_t i = 0; i < b; ++i) pcol(i, j) = std::exp(z(i, j) - lse);
    }
    out.l_v2c *= inv_b;
    out.l_c2v *= inv_b;
    out.total = out.l_v2c + out.l_c2v;
    if (dphi) {
        *dphi = Matrix(b, b);
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < b; ++j) {
                const double delta = i == j ? 2.0 : 0.0;
                (*dphi)(i, j) = inv_b * (prow(i, j) + pcol(i, j) - delta) / temperature;
            }
        }
    }
    return out;
}

void accumulate_param_grad(const Matrix& dproj, const Matrix& raw, Matrix& dw, Vec& db) {
    const std::size_t d = dw.rows();
    for (std::size_t r = 0; r < raw.rows(); ++r) {
        const VecView g = dproj.row(r);
        const VecView x = raw.row(r);
        for (std::size_t i = 0; i < d; ++i) {
            if (g[i] == 0.0) continue;
            auto wr = dw.row(i);
            for (std::size_t k = 0; k < d; ++k) wr[k] += g[i] * x[k];
            db[i] += g[i];
        }
    }
}

void check_batch(const ProjectionModel& model, std::span<const TrainSample> batch) {
    if (batch.empty()) throw EmptyBatchError("batch of size 0");
    for (std::size_t b = 0; b < batch.size(); ++b) {
        if (batch[b].frames.cols() != model.dim() || batch[b].captions.cols() != model.dim()) {
            throw ShapeError("sample " + std::to_string(b) + " does not match model dim " +
                             std::to_string(model.dim()));
        }
    }
}

}  // namespace

LossBreakdown batch_loss(const ProjectionModel& model, std::span<const TrainSample> batch, const TrainConfig& config) {
    check_batch(model, batch);
    const Projected p = project(model, batch, config);
    const std::size_t b = batch.size();
    Matrix phi(b, b);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            try {
                if (config.temporal == TemporalPooling::QS) {
                    std::optional<VecView> cs;
                    if (!batch[j].clipscores.empty()) cs = VecView(batch[j].clipscores);
                    phi(i, j) = mcqs_similarity(p.frames[i], p.captions[j], config.pooling, cs);
                } else {
                    double s = 0.0;
                    for (std::size_t l = 0; l < p.captions[j].rows(); ++l) {
                        s += p.alpha[j][l] * mean_pool_similarity(p.frames[i], p.captions[j].row(l));
                    }
                    phi(i, j) = s;
                }
            } catch (const DataError& e) {
                throw DataError("sample pair (" + std::to_string(i) + ", " + std::to_string(j) + "): " + e.what());
            }
        }
    }
    return infonce(phi, config.infonce_temperature, nullptr);
}

ModelGradient batch_gradient(const ProjectionModel& model, std::span<const TrainSample> batch,
                             const TrainConfig& config, LossBreakdown* loss) {
    check_batch(model, batch);
    const Projected p = project(model, batch, config);
    const std::size_t b = batch.size();
    const double tau = config.pooling.tau;

    Matrix phi(b, b);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            phi(i, j) = pair_pass(p.frames[i], p.captions[j], p.alpha[j], tau, config.temporal, i, 0.0, nullptr,
                                  nullptr);
        }
    }
    Matrix dphi;
    const LossBreakdown l = infonce(phi, config.infonce_temperature, &dphi);
    if (loss) *loss = l;

    std::vector<Matrix> dframes, dcaps;
    for (std::size_t i = 0; i < b; ++i) {
        dframes.emplace_back(p.frames[i].rows(), model.dim());
        dcaps.emplace_back(p.captions[i].rows(), model.dim());
    }
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            if (dphi(i, j) == 0.0) continue;
            pair_pass(p.frames[i], p.captions[j], p.alpha[j], tau, config.temporal, i, dphi(i, j), &dframes[i],
                      &dcaps[j]);
        }
    }

    ModelGradient g = ModelGradient::zeros(model.dim());
    for (std::size_t i = 0; i < b; ++i) {
        accumulate_param_grad(dframes[i], batch[i].frames, g.w_visual, g.b_visual);
        accumulate_param_grad(dcaps[i], batch[i].captions, g.w_text, g.b_text);
    }
    return g;
}

double lr_at(std::int64_t step, std::int64_t total_steps, double lr0, std::int64_t warmup_steps) {
    if (step < warmup_steps) return lr0 * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    const std::int64_t span = total_steps - warmup_steps;
    if (span <= 0 || step >= total_steps) return 0.0;
    const double frac = static_cast<double>(step - warmup_steps) / static_cast<double>(span);
    return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

AdamState::AdamState(std::size_t dim, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(2 * (dim * dim + dim), 0.0), v_(m_.size(), 0.0) {}

void AdamState::step(ProjectionModel& model, const ModelGradient& grad, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    std::size_t off = 0;
    auto update = [&](std::vector<double>& theta, const std::vector<double>& g) {
        for (std::size_t i = 0; i < theta.size(); ++i, ++off) {
            m_[off] = beta1_ * m_[off] + (1.0 - beta1_) * g[i];
            v_[off] = beta2_ * v_[off] + (1.0 - beta2_) * g[i] * g[i];
            const double mh = m_[off] / c1;
            const double vh = v_[off] / c2;
            theta[i] -= lr * mh / (std::sqrt(vh) + eps_);
        }
    };
    update(model.w_visual.data(), grad.w_visual.data());
    update(model.b_visual, grad.b_visual);
    update(model.w_text.data(), grad.w_text.data());
    update(model.b_text, grad.b_text);
}

std::string EpochLog::to_jsonl() const {
    json j{{"epoch", epoch}, {"mean_loss", mean_loss}, {"lr", lr}, {"steps", steps}};
    if (!eval_json.empty()) j["eval"] = json::parse(eval_json);
    return j.dump();
}

namespace {

std::unordered_map<std::string, std::size_t> video_index(const Dataset& ds) {
    std::unordered_map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < ds.manifest.videos.size(); ++i) idx[ds.manifest.videos[i].video_id] = i;
    return idx;
}

bool in_train_split(const VideoEntry& v) { return v.split == "train" || v.split == "all"; }

}  // namespace

std::vector<TrainingItem> training_items(const Dataset& ds, const std::vector<CaptionPool>& pools) {
    const auto idx = video_index(ds);
    std::vector<TrainingItem> items;
    for (const auto& pool : pools) {
        auto it = idx.find(pool.video_id);
        if (it == idx.end()) throw DataError("selection references unknown video " + pool.video_id);
        if (!in_train_split(ds.manifest.videos[it->second]) || pool.selected.empty()) continue;
        TrainingItem item;
        item.dataset = ds.name();
        item.video_id = pool.video_id;
        item.frames = ds.video_frames(it->second);
        for (const auto& rec : pool.selected) {
            item.captions.append_row(ds.captions.row_f64(rec.embedding_row));
            item.clipscores.push_back(rec.clipscore);
        }
        item.sample_one = pool.sample_one_per_step;
        items.push_back(std::move(item));
    }
    return items;
}

std::vector<TrainingItem> gt_training_items(const Dataset& ds, bool all_gt) {
    if (ds.manifest.gt_caption_groups.empty()) {
        throw ConfigError("dataset '" + ds.name() + "' has no ground-truth caption groups");
    }
    std::vector<TrainingItem> items;
    for (std::size_t vi = 0; vi < ds.manifest.videos.size(); ++vi) {
        const auto& v = ds.manifest.videos[vi];
        if (!in_train_split(v)) continue;
        auto it = ds.manifest.gt_caption_groups.find(v.video_id);
        if (it == ds.manifest.gt_caption_groups.end() || it->second.empty()) continue;
        TrainingItem item;
        item.dataset = ds.name();
        item.video_id = v.video_id;
        item.frames = ds.video_frames(vi);
        for (auto r : it->second) item.captions.append_row(ds.queries.row_f64(r));
        item.sample_one = !all_gt;
        items.push_back(std::move(item));
    }
    return items;
}

SelectionStrategy resolve_strategy(SelectionStrategy s, const Dataset& ds) {
    if (s.captioners.empty()) s.captioners = ds.captioner_labels();
    return s;
}

TrainResult train_items(std::vector<TrainingItem> items, const TrainConfig& config, ProjectionModel init,
                        const EpochHook& hook) {
    config.check();
    if (items.empty()) throw EmptyDatasetError("no training videos");
    for (const auto& it : items) {
        if (it.frames.cols() != init.dim()) {
            throw ShapeError("video " + it.video_id + " has dim " + std::to_string(it.frames.cols()) +
                             ", model has " + std::to_string(init.dim()));
        }
    }

    TrainResult result;
    result.model = std::move(init);
    if (hook) {
        std::string s = hook(0, result.model);
        if (!s.empty()) result.initial_eval_json = std::move(s);
    }

    Rng shuffle_rng(derive_seed(config.seed, "train/shuffle"));
    Rng draw_rng(derive_seed(config.seed, "train/caption-draw"));
    AdamState adam(result.model.dim(), config.adam_beta1, config.adam_beta2, config.adam_eps);

    const std::size_t bsz = static_cast<std::size_t>(config.batch_size);
    const std::int64_t steps_per_epoch = static_cast<std::int64_t>((items.size() + bsz - 1) / bsz);
    const std::int64_t total = steps_per_epoch * config.epochs;
    std::vector<std::size_t> order(items.size());

    std::int64_t step = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        double lr = 0.0;
        for (std::size_t start = 0; start < order.size(); start += bsz) {
            const std::size_t end = std::min(order.size(), start + bsz);
            std::vector<TrainSample> batch;
            batch.reserve(end - start);
            for (std::size_t k = start; k < end; ++k) {
                const TrainingItem& it = items[order[k]];
                TrainSample s;
                s.frames = it.frames;
                if (it.sample_one || config.single_caption) {
                    const std::size_t pick = draw_rng.index(it.captions.rows());
                    s.captions.append_row(it.captions.row(pick));
                    if (!it.clipscores.empty()) s.clipscores.push_back(it.clipscores[pick]);
                } else {
                    s.captions = it.captions;
                    s.clipscores = it.clipscores;
                }
                batch.push_back(std::move(s));
            }
            LossBreakdown loss;
            const ModelGradient g = batch_gradient(result.model, batch, config, &loss);
            if (!std::isfinite(loss.total)) {
                throw DivergenceError("non-finite loss at step " + std::to_string(step));
            }
            lr = lr_at(step, total, config.lr0, config.warmup_steps);
            adam.step(result.model, g, lr);
            if (!result.model.all_finite()) {
                throw DivergenceError("non-finite parameters after step " + std::to_string(step));
            }
            loss_sum += loss.total;
            ++step;
        }
        EpochLog log;
        log.epoch = epoch;
        log.mean_loss = loss_sum / static_cast<double>(steps_per_epoch);
        log.lr = lr;
        log.steps = step;
        if (hook) log.eval_json = hook(epoch, result.model);
        result.log.push_back(std::move(log));
    }
    result.steps = step;
    return result;
}

TrainResult train(const std::vector<TrainInput>& inputs, const TrainConfig& config,
                  std::optional<ProjectionModel> init, const EpochHook& hook) {
    config.check();
    if (inputs.empty()) throw EmptyDatasetError("no datasets to train on");
    std::vector<TrainingItem> items;
    std::optional<std::size_t> dim;
    for (const auto& in : inputs) {
        if (!in.dataset) throw EmptyDatasetError("null dataset");
        const Dataset& ds = *in.dataset;
        if (dim && *dim != ds.dim()) throw ShapeError("datasets disagree on embedding dim");
        dim = ds.dim();
        std::vector<TrainingItem> part;
        if (in.pools.empty()) {
            const auto strategy = resolve_strategy(config.strategy, ds);
            part = training_items(ds, select_dataset(ds, strategy));
        } else {
            part = training_items(ds, in.pools);
        }
        std::move(part.begin(), part.end(), std::back_inserter(items));
    }
    if (items.empty()) throw EmptyDatasetError("the union of training splits is empty");
    ProjectionModel start = init ? std::move(*init) : ProjectionModel::identity(*dim);
    return train_items(std::move(items), config, std::move(start), hook);
}

TrainResult finetune_gt(const ProjectionModel& init, const Dataset& ds, const TrainConfig& config, bool all_gt,
                        const EpochHook& hook) {
    if (config.pooling.caption_combine == CaptionCombine::WeightedByClipScore) {
        throw ConfigError("ground-truth captions carry no CLIPScores; use the mean caption combine");
    }
    auto items = gt_training_items(ds, all_gt);
    if (items.empty()) throw EmptyDatasetError("no train-split video has a ground-truth group");
    return train_items(std::move(items), config, init, hook);
}

}  // namespace capret
