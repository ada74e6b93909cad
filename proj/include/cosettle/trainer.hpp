#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cosettle/data.hpp"
#include "cosettle/metrics.hpp"
#include "cosettle/pea.hpp"
#include "cosettle/projection.hpp"

namespace cosettle {

struct TrainConfig {
    std::size_t epochs = 5;
    std::size_t batch_size = 8;
    double base_lr = 1e-4;
    double lr_scale_divisor = 256.0;  // peak lr = base_lr·batch_size / lr_scale_divisor
    double weight_decay = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.95;
    std::size_t warmup_epochs = 1;
    double temperature = 0.03;
    double delta = 0.15;
    double lambda = 1.0;
    double alpha = 0.25;
    std::uint64_t seed = 0;
    ProjectionKind projection = ProjectionKind::linear;
    bool add_positional = true;
    /// Positional grid file to add instead of the sinusoidal one (empty: sinusoidal).
    std::string positional_file;
    bool sum_over_patches = false;
    std::size_t threads = 1;
    double init_std = 0.02;
    double eps_ln = 1e-6;
    /// Evaluate TradeoffMetrics on the training corpus at init and after every epoch.
    bool epoch_metrics = false;

    void validate() const;
    double peak_lr() const { return base_lr * static_cast<double>(batch_size) / lr_scale_divisor; }

    /// Sets one field by name; unknown keys and unparsable values throw ParameterError.
    void set(const std::string& key, const std::string& value);
    static const std::vector<std::string>& keys();
};

/// Applies a `key = value` file on top of `base`.
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});

/// Linear warmup 0 → peak over warmup_steps, then half-cosine decay to 0 at total_steps.
double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup_steps, double peak_lr);

struct AdamWSettings {
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 0.05;
    double eps = 1e-8;
};

struct OptimizerState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;
};

/// One decoupled-weight-decay Adam update:
/// θ ← θ·(1 − lr·wd) − lr·m̂/(√v̂ + eps). The state is sized on first use.
void adamw_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                OptimizerState& state, double lr, const AdamWSettings& settings);

struct StepRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double lr = 0.0;
    double cyc = 0.0;
    double reg = 0.0;
    double total = 0.0;
    double cyc_acc = 0.0;  // batch mean of the palindrome cycle accuracy
    std::size_t clamped = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double cyc = 0.0;
    double reg = 0.0;
    double total = 0.0;
    double isometry_defect = 0.0;  // ‖W·Wᵀ − I‖_F of the (product) weight
    std::optional<TradeoffMetrics> metrics;
};

struct TrainHistory {
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;
    double initial_isometry_defect = 0.0;
    std::optional<TradeoffMetrics> initial_metrics;
};

struct TrainResult {
    ProjectionParams initial;
    ProjectionParams params;
    TrainHistory history;
};

/// Positional grid added to frames of the given shape: read from positional_file when
/// set (ShapeError on a mismatch), otherwise the sinusoidal grid.
PositionalGrid positional_grid_for(const EmbeddingGrid& shape, const TrainConfig& config);

/// Feature map used for evaluation under a config: positional grid (if enabled) then `params`.
FeatureMap training_feature_map(const Corpus& corpus, const TrainConfig& config, const ProjectionParams& params);

/// ‖W·Wᵀ − I‖_F with W the linear weight, or W2·W1 for the MLP head.
double isometry_defect(const ProjectionParams& params);

TrainResult train(const Corpus& corpus, const TrainConfig& config);

/// Continues from the given parameters instead of a fresh initialization.
TrainResult train(const Corpus& corpus, const TrainConfig& config, ProjectionParams initial);

}  // namespace cosettle
