// Straight-line reference implementations used as test oracles. These avoid
// the library's code paths on purpose: no max-subtraction, no clamping,
// full sorts instead of partial ones.
#pragma once

#include "capret/linalg.hpp"
#include "capret/model.hpp"
#include "capret/rng.hpp"
#include "capret/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <unistd.h>

namespace oracle {

using capret::Matrix;
using capret::Vec;

inline double cos_raw(const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

inline std::vector<double> row(const Matrix& m, std::size_t r) {
    auto v = m.row(r);
    return {v.begin(), v.end()};
}

inline std::vector<double> affine(const Matrix& w, const Vec& b, const std::vector<double>& x) {
    std::vector<double> y(b.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = b[i];
        for (std::size_t k = 0; k < x.size(); ++k) y[i] += w(i, k) * x[k];
    }
    return y;
}

inline double qs_sim(const std::vector<std::vector<double>>& frames, const std::vector<double>& t, double tau) {
    std::vector<double> e(frames.size());
    double z = 0;
    for (std::size_t n = 0; n < frames.size(); ++n) {
        e[n] = std::exp(cos_raw(frames[n], t) / tau);
        z += e[n];
    }
    std::vector<double> v(t.size(), 0.0);
    for (std::size_t n = 0; n < frames.size(); ++n)
        for (std::size_t k = 0; k < t.size(); ++k) v[k] += e[n] / z * frames[n][k];
    return cos_raw(v, t);
}

inline double mean_sim(const std::vector<std::vector<double>>& frames, const std::vector<double>& t) {
    std::vector<double> v(t.size(), 0.0);
    for (const auto& f : frames)
        for (std::size_t k = 0; k < t.size(); ++k) v[k] += f[k] / static_cast<double>(frames.size());
    return cos_raw(v, t);
}

inline std::vector<double> caption_alpha(const capret::TrainSample& s, const capret::TrainConfig& c) {
    const std::size_t l = s.captions.rows();
    std::vector<double> a(l, 1.0 / static_cast<double>(l));
    if (c.pooling.caption_combine == capret::CaptionCombine::WeightedByClipScore) {
        double z = 0;
        for (std::size_t i = 0; i < l; ++i) z += (a[i] = std::exp(s.clipscores[i] / c.pooling.weighted_temperature));
        for (auto& x : a) x /= z;
    }
    return a;
}

// Full training objective written from scratch.
inline double loss(const capret::ProjectionModel& m, const std::vector<capret::TrainSample>& batch,
                   const capret::TrainConfig& c) {
    const std::size_t b = batch.size();
    std::vector<std::vector<std::vector<double>>> pf(b), pc(b);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t r = 0; r < batch[i].frames.rows(); ++r)
            pf[i].push_back(affine(m.w_visual, m.b_visual, row(batch[i].frames, r)));
        for (std::size_t r = 0; r < batch[i].captions.rows(); ++r)
            pc[i].push_back(affine(m.w_text, m.b_text, row(batch[i].captions, r)));
    }
    std::vector<std::vector<double>> z(b, std::vector<double>(b));
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            const auto a = caption_alpha(batch[j], c);
            double phi = 0;
            for (std::size_t l = 0; l < pc[j].size(); ++l) {
                phi += a[l] * (c.temporal == capret::TemporalPooling::QS ? qs_sim(pf[i], pc[j][l], c.pooling.tau)
                                                                         : mean_sim(pf[i], pc[j][l]));
            }
            z[i][j] = phi / c.infonce_temperature;
        }
    }
    double total = 0;
    for (std::size_t i = 0; i < b; ++i) {
        double r = 0, col = 0;
        for (std::size_t j = 0; j < b; ++j) {
            r += std::exp(z[i][j]);
            col += std::exp(z[j][i]);
        }
        total += std::log(r) - z[i][i] + std::log(col) - z[i][i];
    }
    return total / static_cast<double>(b);
}

inline std::vector<double*> params(capret::ProjectionModel& m) {
    std::vector<double*> p;
    for (auto& x : m.w_visual.data()) p.push_back(&x);
    for (auto& x : m.b_visual) p.push_back(&x);
    for (auto& x : m.w_text.data()) p.push_back(&x);
    for (auto& x : m.b_text) p.push_back(&x);
    return p;
}

inline std::vector<double> flatten(const capret::ModelGradient& g) {
    std::vector<double> out(g.w_visual.data());
    out.insert(out.end(), g.b_visual.begin(), g.b_visual.end());
    out.insert(out.end(), g.w_text.data().begin(), g.w_text.data().end());
    out.insert(out.end(), g.b_text.begin(), g.b_text.end());
    return out;
}

// Central differences of the oracle loss.
inline std::vector<double> fd_gradient(capret::ProjectionModel m, const std::vector<capret::TrainSample>& batch,
                                       const capret::TrainConfig& c, double h = 1e-5) {
    std::vector<double> g;
    for (double* p : params(m)) {
        const double keep = *p;
        *p = keep + h;
        const double up = loss(m, batch, c);
        *p = keep - h;
        const double down = loss(m, batch, c);
        *p = keep;
        g.push_back((up - down) / (2 * h));
    }
    return g;
}

// |a - f| / max(|a|, |f|, floor)
inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& f, double floor = 1e-6) {
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(f[i]), floor});
        worst = std::max(worst, std::abs(a[i] - f[i]) / denom);
    }
    return worst;
}

inline Matrix random_matrix(capret::Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    Matrix m(r, c);
    for (auto& x : m.data()) x = scale * rng.normal();
    return m;
}

inline capret::ProjectionModel random_model(capret::Rng& rng, std::size_t d, double noise = 0.1) {
    auto m = capret::ProjectionModel::identity(d);
    for (auto& x : m.w_visual.data()) x += noise * rng.normal();
    for (auto& x : m.w_text.data()) x += noise * rng.normal();
    for (auto& x : m.b_visual) x = noise * rng.normal();
    for (auto& x : m.b_text) x = noise * rng.normal();
    return m;
}

inline std::vector<capret::TrainSample> random_batch(capret::Rng& rng, std::size_t b, std::size_t n, std::size_t l,
                                                     std::size_t d) {
    std::vector<capret::TrainSample> batch(b);
    for (auto& s : batch) {
        s.frames = random_matrix(rng, n, d);
        s.captions = random_matrix(rng, l, d);
        for (std::size_t i = 0; i < l; ++i) s.clipscores.push_back(2.5 * rng.uniform());
    }
    return batch;
}

// Rank of the GT column under (similarity desc, id asc) after a full sort.
inline std::size_t full_sort_rank(const std::vector<double>& sims, const std::vector<std::string>& ids,
                                  std::size_t gt) {
    std::vector<std::size_t> order(sims.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (sims[a] != sims[b]) return sims[a] > sims[b];
        return ids[a] < ids[b];
    });
    return static_cast<std::size_t>(std::find(order.begin(), order.end(), gt) - order.begin()) + 1;
}

// Top-k gallery rows by cosine, descending, ties by ascending row.
inline std::vector<std::size_t> full_sort_nn(const std::vector<double>& q, const std::vector<std::vector<double>>& g,
                                             std::size_t k) {
    std::vector<std::pair<double, std::size_t>> s;
    for (std::size_t i = 0; i < g.size(); ++i) s.emplace_back(cos_raw(q, g[i]), i);
    std::sort(s.begin(), s.end(), [](auto& a, auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < std::min(k, s.size()); ++i) out.push_back(s[i].second);
    return out;
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("capret_" + tag + "_" + std::to_string(capret::fnv1a64(tag) ^ static_cast<std::uint64_t>(::getpid())));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

}  // namespace oracle
