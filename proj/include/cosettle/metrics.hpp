#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "cosettle/data.hpp"
#include "cosettle/objective.hpp"
#include "cosettle/projection.hpp"

namespace cosettle {

/// Scale factor used to combine normalized intra/inter distances (rounded model average).
inline constexpr double kDefaultGamma = 0.3;

/// How raw frame embeddings are turned into the features being measured:
/// optionally add a positional grid, then optionally apply a projection head.
struct FeatureMap {
    std::optional<ProjectionParams> projection;
    std::optional<Matrix> positional;

    Matrix apply(const Matrix& raw) const;
};

struct InterVideoDistance {
    double d_inter_ori = 0.0;
    double r_inter = 0.0;
    double d_inter = 0.0;
    bool degenerate = false;
};

/// Middle-frame (index floor(T/2)) patch-mean L2 distances between all video pairs,
/// normalized by twice the largest patch-mean distance to the per-patch center.
InterVideoDistance inter_video_distance(const Corpus& corpus, const FeatureMap& map = {});

struct IntraVideoDistance {
    std::vector<double> per_video;      // normalized, in [0, 1]
    std::vector<double> per_video_ori;  // unnormalized mean pair distance
    std::vector<bool> degenerate;
    double d_intra_ori = 0.0;  // mean of per_video_ori
    double d_intra = 0.0;      // mean of per_video
    std::size_t degenerate_count = 0;
};

/// Frame pairs per video: every (t, t + k) with k = frame_offset(T, delta).
std::vector<std::pair<std::size_t, std::size_t>> frame_pairs(std::size_t frames, double delta);

IntraVideoDistance intra_video_distance(const Corpus& corpus, double delta, const FeatureMap& map = {});

/// mean(intra) / mean(inter) over (d_intra_ori, d_inter_ori) tuples.
double scale_factor_gamma(const std::vector<std::pair<double, double>>& models);

double margin(double d_inter, double d_intra, double gamma);

/// Fraction of rows i of A_fwd·A_bwd whose argmax is i (ties go to the smallest column).
double cycle_accuracy(const CorrelationPair& pair);

struct TradeoffMetrics {
    double d_inter_ori = 0.0;
    double r_inter = 0.0;
    double d_inter = 0.0;
    double d_intra_ori = 0.0;
    double d_intra = 0.0;
    double gamma = kDefaultGamma;
    double margin = 0.0;
    double cyc_acc = 0.0;
    bool inter_degenerate = false;
    std::size_t intra_degenerate_videos = 0;
};

struct EvalConfig {
    double delta = 0.15;
    double temperature = 0.03;
    double gamma = kDefaultGamma;
};

TradeoffMetrics evaluate(const Corpus& corpus, const FeatureMap& map, const EvalConfig& config = {});

}  // namespace cosettle
