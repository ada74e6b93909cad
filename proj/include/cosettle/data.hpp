#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "cosettle/matrix.hpp"
#include "cosettle/numerics.hpp"

namespace cosettle {

/// Patch embeddings of one frame: (n_h·n_w) tokens in patch-row-major order, `dim` features each.
struct EmbeddingGrid {
    std::size_t n_h = 0;
    std::size_t n_w = 0;
    Matrix values;

    EmbeddingGrid() = default;
    EmbeddingGrid(std::size_t n_h, std::size_t n_w, Matrix values);
    EmbeddingGrid(std::size_t n_h, std::size_t n_w, std::size_t dim);

    std::size_t tokens() const noexcept { return n_h * n_w; }
    std::size_t dim() const noexcept { return values.cols(); }
    bool same_shape(const EmbeddingGrid& other) const noexcept {
        return n_h == other.n_h && n_w == other.n_w && dim() == other.dim();
    }

    friend bool operator==(const EmbeddingGrid&, const EmbeddingGrid&) = default;
};

struct VideoEmbeddingSequence {
    std::uint64_t video_id = 0;
    std::vector<EmbeddingGrid> frames;

    friend bool operator==(const VideoEmbeddingSequence&, const VideoEmbeddingSequence&) = default;
};

using Corpus = std::vector<VideoEmbeddingSequence>;

/// Generative model for synthetic corpora.
///
/// Video m draws a mean c_m ~ N(0, inter_cov); each patch i of that video a base
/// offset b_{m,i} ~ N(0, inter_cov); each frame t an independent perturbation
/// e_{m,i,t} ~ N(0, intra_cov / 2). The embedding is z = c_m + b_{m,i} + e_{m,i,t},
/// so same-patch cross-frame differences have covariance exactly intra_cov.
struct SyntheticModelSpec {
    std::size_t dim = 8;
    std::size_t n_h = 2;
    std::size_t n_w = 2;
    std::size_t frames_per_video = 2;
    std::size_t videos = 4;
    Matrix intra_cov;
    Matrix inter_cov;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Pair of grids forming the palindrome t1 → t2 → t1.
struct ClipSample {
    EmbeddingGrid forward_frame;
    EmbeddingGrid intermediate_frame;
    EmbeddingGrid backward_frame;
    std::size_t t1 = 0;
    std::size_t t2 = 0;
};

/// Checks homogeneous shapes and T ≥ 2; throws ShapeError / ParameterError.
void validate_corpus(const Corpus& corpus);

Corpus generate_corpus(const SyntheticModelSpec& spec);

/// Covariance of one video's mean embedding (mean over all patches and frames)
/// under the generative model: inter_cov·(1 + 1/N) + intra_cov / (2·N·T).
Matrix video_mean_covariance(const SyntheticModelSpec& spec);

/// Frame offset k = max(1, round(delta·T)), clamped to T − 1.
std::size_t frame_offset(std::size_t frames, double delta);

ClipSample sample_pair(const VideoEmbeddingSequence& video, double delta, Rng& rng);

inline constexpr char kCorpusMagic[4] = {'C', 'S', 'E', 'B'};
inline constexpr std::uint32_t kCorpusVersion = 1;

/// Little-endian layout: "CSEB", u32 version, u32 dim, n_h, n_w, frames_per_video,
/// n_videos; then per video a u64 id followed by T·N·dim float32 values in
/// (frame, patch, feature) order.
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& path);

}  // namespace cosettle
