#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cosettle/data.hpp"
#include "cosettle/matrix.hpp"
#include "cosettle/numerics.hpp"

namespace cosettle {

enum class ProjectionKind : std::uint8_t { linear = 0, mlp = 1 };

const char* to_string(ProjectionKind kind);
ProjectionKind projection_kind_from_string(const std::string& name);

/// Parameters of the projection head g.
///
/// linear: p = LN(W·z)
/// mlp:    p = LN(W2·tanh(W1·z))
/// LN normalizes each token over its features with eps_ln inside the square
/// root, then applies the learnable gain/bias. `bypass_layer_norm` turns the
/// head into the bare (multi)linear map; it exists for surrogate analysis and
/// is never persisted.
struct ProjectionParams {
    ProjectionKind kind = ProjectionKind::linear;
    Matrix weight1;  // W (linear) or W1 (mlp), d×d
    Matrix weight2;  // W2 (mlp only), d×d
    std::vector<double> ln_gain;
    std::vector<double> ln_bias;
    double eps_ln = 1e-6;
    bool bypass_layer_norm = false;

    std::size_t dim() const noexcept { return weight1.rows(); }
    void validate() const;

    /// Trainable tensors in checkpoint order: weight1, [weight2], ln_gain, ln_bias.
    std::vector<std::span<double>> tensors();
    std::vector<std::span<const double>> tensors() const;
    std::size_t parameter_count() const;

    friend bool operator==(const ProjectionParams&, const ProjectionParams&) = default;
};

/// W = I + N(0, init_std²), gain = 1, bias = 0. For mlp, W1 and W2 both follow this rule.
ProjectionParams init_projection(ProjectionKind kind, std::size_t dim, Rng& rng, double init_std = 0.02);

/// Exact identity weights (unit gain, zero bias).
ProjectionParams identity_projection(ProjectionKind kind, std::size_t dim);

struct ForwardCache {
    Matrix input;
    Matrix hidden;      // tanh(W1·z), mlp only
    Matrix pre_norm;    // input to LayerNorm
    Matrix normalized;  // pre-affine LayerNorm output
    std::vector<double> inv_std;
    std::uint64_t fingerprint = 0;
};

struct ProjectionOutput {
    EmbeddingGrid grid;
    ForwardCache cache;
};

/// Gradients mirroring ProjectionParams plus the gradient w.r.t. the input grid.
struct GradBundle {
    ProjectionKind kind = ProjectionKind::linear;
    Matrix weight1;
    Matrix weight2;
    std::vector<double> ln_gain;
    std::vector<double> ln_bias;
    Matrix input;

    static GradBundle zeros_like(const ProjectionParams& params);

    /// Adds the parameter gradients (not the input gradient) of `other`.
    GradBundle& accumulate_params(const GradBundle& other);
    GradBundle& scale_params(double s);

    std::vector<std::span<double>> tensors();
    std::vector<std::span<const double>> tensors() const;
    bool all_finite() const;
};

/// Hash of the parameter bits; used to detect caches from a different parameter state.
std::uint64_t parameter_fingerprint(const ProjectionParams& params);

Matrix project_tokens(const ProjectionParams& params, const Matrix& tokens, ForwardCache* cache = nullptr);

ProjectionOutput project_forward(const ProjectionParams& params, const EmbeddingGrid& grid);

/// Reverse-mode gradient of project_forward for the given upstream dL/dp.
GradBundle project_backward(const ProjectionParams& params, const ForwardCache& cache,
                            const Matrix& upstream);

/// Jacobian dg/dz (d×d) at a single token.
Matrix projection_jacobian(const ProjectionParams& params, std::span<const double> token);

inline constexpr char kCheckpointMagic[4] = {'C', 'S', 'P', 'W'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Little-endian layout: "CSPW", u32 version, u8 variant (0 linear, 1 mlp), u32 d,
/// then f64 values: weight1 (row-major), weight2 if mlp, ln_gain, ln_bias, eps_ln.
void write_checkpoint(const std::filesystem::path& path, const ProjectionParams& params);
ProjectionParams read_checkpoint(const std::filesystem::path& path);

}  // namespace cosettle
