#include "cosettle/data.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "binary_io.hpp"
#include "cosettle/error.hpp"

namespace cosettle {

EmbeddingGrid::EmbeddingGrid(std::size_t n_h, std::size_t n_w, Matrix values)
    : n_h(n_h), n_w(n_w), values(std::move(values)) {
    if (n_h * n_w == 0) throw ShapeError("embedding grid needs at least one patch");
    if (this->values.rows() != n_h * n_w) {
        throw ShapeError("embedding grid has " + std::to_string(this->values.rows()) +
                         " rows, expected " + std::to_string(n_h * n_w));
    }
    if (this->values.cols() == 0) throw ShapeError("embedding grid needs dim >= 1");
}

EmbeddingGrid::EmbeddingGrid(std::size_t n_h, std::size_t n_w, std::size_t dim)
    : EmbeddingGrid(n_h, n_w, Matrix(n_h * n_w, dim)) {}

void SyntheticModelSpec::validate() const {
    if (dim == 0 || n_h == 0 || n_w == 0 || frames_per_video == 0 || videos == 0) {
        throw ParameterError("synthetic spec: dim, n_h, n_w, frames and videos must be >= 1");
    }
    if (intra_cov.rows() != dim || intra_cov.cols() != dim || inter_cov.rows() != dim ||
        inter_cov.cols() != dim) {
        throw ShapeError("synthetic spec: covariances must be " + std::to_string(dim) + "x" +
                         std::to_string(dim));
    }
    // psd_factor rejects asymmetric and indefinite matrices.
    (void)psd_factor(intra_cov);
    (void)psd_factor(inter_cov);
}

void validate_corpus(const Corpus& corpus) {
    if (corpus.empty()) throw ParameterError("corpus is empty");
    const auto& ref = corpus.front().frames;
    if (ref.size() < 2) throw ParameterError("videos need at least 2 frames");
    const EmbeddingGrid& shape = ref.front();
    for (const auto& video : corpus) {
        if (video.frames.size() != ref.size()) {
            throw ShapeError("video " + std::to_string(video.video_id) + " has " +
                             std::to_string(video.frames.size()) + " frames, expected " +
                             std::to_string(ref.size()));
        }
        for (const auto& frame : video.frames) {
            if (!frame.same_shape(shape)) {
                throw ShapeError("video " + std::to_string(video.video_id) +
                                 " has a frame with inconsistent grid shape");
            }
            if (!frame.values.all_finite()) {
                throw InvalidInputError("video " + std::to_string(video.video_id) +
                                        " contains non-finite embeddings");
            }
        }
    }
}

namespace {

// Round through float32 so that the on-disk format represents generated values exactly.
void quantize_f32(Matrix& m) {
    for (double& v : m.values()) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace

Corpus generate_corpus(const SyntheticModelSpec& spec) {
    spec.validate();
    if (spec.frames_per_video < 2) throw ParameterError("synthetic spec: frames_per_video must be >= 2");
    const std::size_t d = spec.dim;
    const std::size_t tokens = spec.n_h * spec.n_w;
    const Matrix inter_factor = psd_factor(spec.inter_cov);
    const Matrix noise_factor = psd_factor(spec.intra_cov * 0.5);

    Rng rng(spec.seed);
    Corpus corpus;
    corpus.reserve(spec.videos);
    for (std::size_t m = 0; m < spec.videos; ++m) {
        VideoEmbeddingSequence video;
        video.video_id = m;
        const Matrix mean = correlate_rows(standard_normals(1, d, rng), inter_factor);
        const Matrix base = correlate_rows(standard_normals(tokens, d, rng), inter_factor);
        for (std::size_t t = 0; t < spec.frames_per_video; ++t) {
            Matrix z = correlate_rows(standard_normals(tokens, d, rng), noise_factor);
            for (std::size_t i = 0; i < tokens; ++i) {
                auto row = z.row(i);
                for (std::size_t k = 0; k < d; ++k) row[k] += mean(0, k) + base(i, k);
            }
            quantize_f32(z);
            video.frames.emplace_back(spec.n_h, spec.n_w, std::move(z));
        }
        corpus.push_back(std::move(video));
    }
    return corpus;
}

Matrix video_mean_covariance(const SyntheticModelSpec& spec) {
    const double n = static_cast<double>(spec.n_h * spec.n_w);
    const double t = static_cast<double>(spec.frames_per_video);
    return spec.inter_cov * (1.0 + 1.0 / n) + spec.intra_cov * (1.0 / (2.0 * n * t));
}

std::size_t frame_offset(std::size_t frames, double delta) {
    if (frames < 2) throw ParameterError("frame sampling needs T >= 2");
    if (!(delta > 0.0 && delta < 1.0)) {
        throw ParameterError("delta must lie in (0, 1), got " + std::to_string(delta));
    }
    const auto rounded = static_cast<std::size_t>(std::llround(delta * static_cast<double>(frames)));
    return std::clamp<std::size_t>(rounded, 1, frames - 1);
}

ClipSample sample_pair(const VideoEmbeddingSequence& video, double delta, Rng& rng) {
    const std::size_t frames = video.frames.size();
    const std::size_t k = frame_offset(frames, delta);
    std::uniform_int_distribution<std::size_t> pick(0, frames - 1 - k);
    ClipSample s;
    s.t1 = pick(rng);
    s.t2 = s.t1 + k;
    s.forward_frame = video.frames[s.t1];
    s.intermediate_frame = video.frames[s.t2];
    s.backward_frame = video.frames[s.t1];
    return s;
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
    validate_corpus(corpus);
    const EmbeddingGrid& shape = corpus.front().frames.front();
    detail::ByteWriter w;
    w.bytes(kCorpusMagic, 4);
    w.u32(kCorpusVersion);
    w.u32(static_cast<std::uint32_t>(shape.dim()));
    w.u32(static_cast<std::uint32_t>(shape.n_h));
    w.u32(static_cast<std::uint32_t>(shape.n_w));
    w.u32(static_cast<std::uint32_t>(corpus.front().frames.size()));
    w.u32(static_cast<std::uint32_t>(corpus.size()));
    for (const auto& video : corpus) {
        w.u64(video.video_id);
        for (const auto& frame : video.frames)
            for (double v : frame.values.values()) w.f32(static_cast<float>(v));
    }
    w.save(path);
}

Corpus read_corpus(const std::filesystem::path& path) {
    detail::ByteReader r(path);
    r.expect_magic(kCorpusMagic);
    const std::uint64_t version_at = r.offset();
    const std::uint32_t version = r.u32("version");
    if (version != kCorpusVersion) {
        throw FormatError("unsupported corpus version " + std::to_string(version), version_at);
    }
    const std::uint64_t header_at = r.offset();
    const std::uint32_t dim = r.u32("dim");
    const std::uint32_t n_h = r.u32("n_h");
    const std::uint32_t n_w = r.u32("n_w");
    const std::uint32_t frames = r.u32("frames_per_video");
    const std::uint32_t videos = r.u32("n_videos");
    if (dim == 0 || n_h == 0 || n_w == 0 || frames < 2 || videos == 0) {
        throw FormatError("inconsistent corpus shape header", header_at);
    }
    const std::uint64_t tokens = std::uint64_t{n_h} * n_w;
    const std::uint64_t per_video = 8 + 4 * std::uint64_t{frames} * tokens * dim;
    r.need(per_video * videos, "video payload");

    Corpus corpus;
    corpus.reserve(videos);
    for (std::uint32_t m = 0; m < videos; ++m) {
        VideoEmbeddingSequence video;
        video.video_id = r.u64("video_id");
        for (std::uint32_t t = 0; t < frames; ++t) {
            Matrix values(tokens, dim);
            for (double& v : values.values()) {
                const std::uint64_t at = r.offset();
                v = static_cast<double>(r.f32("embedding value"));
                if (!std::isfinite(v)) throw FormatError("non-finite embedding value", at);
            }
            video.frames.emplace_back(n_h, n_w, std::move(values));
        }
        corpus.push_back(std::move(video));
    }
    r.expect_end();
    return corpus;
}

}  // namespace cosettle
