#include "cosettle/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cosettle/error.hpp"

namespace cosettle {

Matrix FeatureMap::apply(const Matrix& raw) const {
    Matrix x = raw;
    if (positional) {
        require_same_shape(x, *positional, "FeatureMap positional grid");
        x += *positional;
    }
    if (projection) x = project_tokens(*projection, x);
    return x;
}

namespace {

// (1/N) Σ_i ‖a(i) − b(i)‖₂
double patch_mean_distance(const Matrix& a, const Matrix& b) {
    double total = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto x = a.row(i);
        auto y = b.row(i);
        double s = 0.0;
        for (std::size_t c = 0; c < x.size(); ++c) s += (x[c] - y[c]) * (x[c] - y[c]);
        total += std::sqrt(s);
    }
    return total / static_cast<double>(a.rows());
}

Matrix mean_of(const std::vector<Matrix>& grids, std::span<const std::size_t> which) {
    Matrix c(grids.front().rows(), grids.front().cols());
    for (std::size_t idx : which) c += grids[idx];
    c *= 1.0 / static_cast<double>(which.size());
    return c;
}

}  // namespace

InterVideoDistance inter_video_distance(const Corpus& corpus, const FeatureMap& map) {
    validate_corpus(corpus);
    const std::size_t videos = corpus.size();
    if (videos < 2) throw ParameterError("inter-video distance needs at least 2 videos");
    const std::size_t middle = corpus.front().frames.size() / 2;

    std::vector<Matrix> grids;
    grids.reserve(videos);
    for (const auto& v : corpus) grids.push_back(map.apply(v.frames[middle].values));

    InterVideoDistance out;
    double pair_sum = 0.0;
    for (std::size_t u = 0; u < videos; ++u)
        for (std::size_t v = u + 1; v < videos; ++v) pair_sum += patch_mean_distance(grids[u], grids[v]);
    out.d_inter_ori = 2.0 * pair_sum / static_cast<double>(videos * (videos - 1));

    std::vector<std::size_t> all(videos);
    for (std::size_t i = 0; i < videos; ++i) all[i] = i;
    const Matrix center = mean_of(grids, all);
    for (const auto& g : grids) out.r_inter = std::max(out.r_inter, patch_mean_distance(g, center));

    if (out.r_inter > 0.0) {
        out.d_inter = out.d_inter_ori / (2.0 * out.r_inter);
    } else {
        out.degenerate = true;
        out.d_inter = 0.0;
    }
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> frame_pairs(std::size_t frames, double delta) {
    const std::size_t k = frame_offset(frames, delta);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t t = 0; t + k < frames; ++t) pairs.emplace_back(t, t + k);
    return pairs;
}

IntraVideoDistance intra_video_distance(const Corpus& corpus, double delta, const FeatureMap& map) {
    validate_corpus(corpus);
    const std::size_t frames = corpus.front().frames.size();
    const auto pairs = frame_pairs(frames, delta);
    std::vector<std::size_t> used;
    for (const auto& [a, b] : pairs) {
        used.push_back(a);
        used.push_back(b);
    }
    std::sort(used.begin(), used.end());
    used.erase(std::unique(used.begin(), used.end()), used.end());

    IntraVideoDistance out;
    for (const auto& video : corpus) {
        std::vector<Matrix> grids(frames);
        for (std::size_t t : used) grids[t] = map.apply(video.frames[t].values);

        double ori = 0.0;
        for (const auto& [a, b] : pairs) ori += patch_mean_distance(grids[a], grids[b]);
        ori /= static_cast<double>(pairs.size());

        const Matrix mean_frame = mean_of(grids, used);
        double radius = 0.0;
        for (std::size_t t : used) radius = std::max(radius, patch_mean_distance(grids[t], mean_frame));

        out.per_video_ori.push_back(ori);
        if (radius > 0.0) {
            out.per_video.push_back(ori / (2.0 * radius));
            out.degenerate.push_back(false);
        } else {
            out.per_video.push_back(0.0);
            out.degenerate.push_back(true);
            ++out.degenerate_count;
        }
    }
    const double m = static_cast<double>(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        out.d_intra_ori += out.per_video_ori[i] / m;
        out.d_intra += out.per_video[i] / m;
    }
    return out;
}

double scale_factor_gamma(const std::vector<std::pair<double, double>>& models) {
    if (models.empty()) throw ParameterError("scale_factor_gamma: no models");
    double intra = 0.0;
    double inter = 0.0;
    for (const auto& [a, e] : models) {
        if (!(e > 0.0)) throw ParameterError("scale_factor_gamma: inter-video distance must be positive");
        intra += a;
        inter += e;
    }
    return intra / inter;
}

double margin(double d_inter, double d_intra, double gamma) { return d_inter - gamma * d_intra; }

double cycle_accuracy(const CorrelationPair& pair) {
    require_same_shape(pair.forward, pair.backward, "cycle_accuracy");
    const Matrix product = matmul(pair.forward, pair.backward);
    const std::size_t n = product.rows();
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        auto row = product.row(i);
        // max_element returns the first maximum, i.e. the smallest index among ties.
        const auto arg = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        if (arg == i) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

TradeoffMetrics evaluate(const Corpus& corpus, const FeatureMap& map, const EvalConfig& config) {
    const InterVideoDistance inter = inter_video_distance(corpus, map);
    const IntraVideoDistance intra = intra_video_distance(corpus, config.delta, map);

    TradeoffMetrics m;
    m.d_inter_ori = inter.d_inter_ori;
    m.r_inter = inter.r_inter;
    m.d_inter = inter.d_inter;
    m.inter_degenerate = inter.degenerate;
    m.d_intra_ori = intra.d_intra_ori;
    m.d_intra = intra.d_intra;
    m.intra_degenerate_videos = intra.degenerate_count;
    m.gamma = config.gamma;
    m.margin = margin(m.d_inter, m.d_intra, m.gamma);

    const auto pairs = frame_pairs(corpus.front().frames.size(), config.delta);
    double acc = 0.0;
    std::size_t count = 0;
    for (const auto& video : corpus) {
        std::vector<Matrix> grids(video.frames.size());
        for (const auto& [a, b] : pairs) {
            if (grids[a].empty()) grids[a] = map.apply(video.frames[a].values);
            if (grids[b].empty()) grids[b] = map.apply(video.frames[b].values);
            CorrelationPair pair{correlation_matrix(grids[a], grids[b], config.temperature),
                                 correlation_matrix(grids[b], grids[a], config.temperature)};
            acc += cycle_accuracy(pair);
            ++count;
        }
    }
    m.cyc_acc = acc / static_cast<double>(count);
    return m;
}

}  // namespace cosettle
