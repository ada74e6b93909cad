#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cosettle/data.hpp"
#include "cosettle/matrix.hpp"
#include "cosettle/numerics.hpp"

namespace cosettle {

/// Positional encodings laid out like an EmbeddingGrid: (n_h·n_w) rows, dim columns.
struct PositionalGrid {
    std::size_t n_h = 0;
    std::size_t n_w = 0;
    Matrix values;

    std::size_t dim() const noexcept { return values.cols(); }
    friend bool operator==(const PositionalGrid&, const PositionalGrid&) = default;
};

inline constexpr double kSinusoidBase = 10000.0;

/// 2-D sinusoidal encoding. Features [0, dim/2) encode the row index and
/// [dim/2, dim) the column index; within each half, entry 2k is sin(pos·ω_k) and
/// entry 2k+1 is cos(pos·ω_k) with ω_k = base^(−2k/half).
PositionalGrid sinusoidal_grid(std::size_t n_h, std::size_t n_w, std::size_t dim, double base = kSinusoidBase);

/// Bilinear (corner-aligned) resampling of a positional grid to out_h × out_w.
PositionalGrid resample_bilinear(const PositionalGrid& grid, std::size_t out_h, std::size_t out_w);

/// Positional-encoding augmentation: upsample to ceil((1+α)·n_h) × ceil((1+α)·n_w),
/// then take a uniformly placed crop of the original size.
PositionalGrid pea_augment(const PositionalGrid& grid, double alpha, Rng& rng);

/// Target side length of the augmentation: ceil((1+α)·side).
std::size_t pea_upsampled_side(std::size_t side, double alpha);

inline constexpr char kPositionalMagic[4] = {'C', 'S', 'P', 'E'};
inline constexpr std::uint32_t kPositionalVersion = 1;

/// Little-endian layout: "CSPE", u32 version, u32 dim, n_h, n_w, then n_h·n_w·dim
/// float32 values in (patch-row-major, feature) order, as in the corpus format.
/// Values are narrowed to float32 on write.
void write_positional_grid(const std::filesystem::path& path, const PositionalGrid& grid);
PositionalGrid read_positional_grid(const std::filesystem::path& path);

enum class ProbeSetting { irrelevant, shuffled, normal };

const char* to_string(ProbeSetting setting);
ProbeSetting probe_setting_from_string(const std::string& name);

struct ProbeConfig {
    double alpha = 0.0;
    double temperature = 0.03;
    std::size_t steps = 500;
    double lr = 1e-2;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
    // Synthetic instance the probe trains on.
    std::size_t dim = 64;
    std::size_t n_h = 7;
    std::size_t n_w = 7;
    std::size_t frames = 4;
    std::size_t videos = 32;
    double patch_scale = 0.02;   // std of video-mean and per-patch content offsets
    double motion_scale = 0.15;  // std of the per-frame perturbation
    double delta = 0.15;
};

struct ShortcutProbeReport {
    ProbeSetting setting = ProbeSetting::normal;
    std::size_t steps = 0;
    std::vector<double> loss_curve;
    std::vector<double> identity_accuracy_curve;
};

/// Trains a linear head on the cycle loss alone (λ = 0) with positional grids added
/// to every frame, recording the loss and the identity accuracy of the product chain.
/// Entry k of the curves is measured before the k-th parameter update.
ShortcutProbeReport shortcut_probe(ProbeSetting setting, const ProbeConfig& config);

}  // namespace cosettle
