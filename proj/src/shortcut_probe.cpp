#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "cosettle/error.hpp"
#include "cosettle/metrics.hpp"
#include "cosettle/objective.hpp"
#include "cosettle/pea.hpp"
#include "cosettle/trainer.hpp"

namespace cosettle {

namespace {

Corpus probe_corpus(const ProbeConfig& c) {
    SyntheticModelSpec spec;
    spec.dim = c.dim;
    spec.n_h = c.n_h;
    spec.n_w = c.n_w;
    spec.frames_per_video = c.frames;
    spec.videos = c.videos;
    // Per-frame noise has variance intra/2, so same-patch differences have std motion_scale·√2.
    spec.intra_cov = Matrix::identity(c.dim) * (2.0 * c.motion_scale * c.motion_scale);
    spec.inter_cov = Matrix::identity(c.dim) * (c.patch_scale * c.patch_scale);
    spec.seed = c.seed;
    return generate_corpus(spec);
}

void validate_probe(const ProbeConfig& c) {
    if (c.steps == 0 || c.batch_size == 0) throw ParameterError("probe: steps and batch_size must be >= 1");
    if (c.videos < 2) throw ParameterError("probe: needs at least 2 videos");
    if (c.frames < 2) throw ParameterError("probe: needs at least 2 frames");
    if (!(c.alpha >= 0.0)) throw ParameterError("probe: alpha must be >= 0");
    if (!(c.temperature > 0.0)) throw ParameterError("probe: temperature must be > 0");
    if (!(c.lr >= 0.0)) throw ParameterError("probe: lr must be >= 0");
    if (!(c.patch_scale >= 0.0) || !(c.motion_scale >= 0.0)) throw ParameterError("probe: scales must be >= 0");
}

}  // namespace

ShortcutProbeReport shortcut_probe(ProbeSetting setting, const ProbeConfig& config) {
    validate_probe(config);
    const Corpus corpus = probe_corpus(config);
    const PositionalGrid pos = sinusoidal_grid(config.n_h, config.n_w, config.dim);
    const std::size_t tokens = config.n_h * config.n_w;

    Rng rng(config.seed ^ 0x5851f42d4c957f2dULL);
    ProjectionParams params = init_projection(ProjectionKind::linear, config.dim, rng);
    OptimizerState state;
    const AdamWSettings adam{0.9, 0.95, 0.0, 1e-8};
    std::uniform_int_distribution<std::size_t> pick_video(0, corpus.size() - 1);

    ShortcutProbeReport report;
    report.setting = setting;
    report.steps = config.steps;
    std::vector<std::size_t> perm(tokens);

    for (std::size_t step = 0; step < config.steps; ++step) {
        GradBundle grads = GradBundle::zeros_like(params);
        double loss = 0.0;
        double acc = 0.0;
        for (std::size_t b = 0; b < config.batch_size; ++b) {
            const std::size_t v = pick_video(rng);
            const ClipSample clip = sample_pair(corpus[v], config.delta, rng);
            Matrix z_f = clip.forward_frame.values;
            Matrix z_mid = clip.intermediate_frame.values;
            Matrix z_b = clip.backward_frame.values;

            if (setting == ProbeSetting::irrelevant) {
                std::size_t other = pick_video(rng);
                while (other == v) other = pick_video(rng);
                z_mid = corpus[other].frames[clip.t2].values;
            } else if (setting == ProbeSetting::shuffled) {
                std::iota(perm.begin(), perm.end(), std::size_t{0});
                std::shuffle(perm.begin(), perm.end(), rng);
                Matrix shuffled(tokens, config.dim);
                for (std::size_t i = 0; i < tokens; ++i) {
                    auto src = z_mid.row(perm[i]);
                    std::copy(src.begin(), src.end(), shuffled.row(i).begin());
                }
                z_mid = std::move(shuffled);
            }

            z_f += pos.values;
            z_mid += pos.values;
            z_b += (config.alpha > 0.0 ? pea_augment(pos, config.alpha, rng) : pos).values;

            ForwardCache c_f, c_mid, c_b;
            const Matrix p_f = project_tokens(params, z_f, &c_f);
            const Matrix p_mid = project_tokens(params, z_mid, &c_mid);
            const Matrix p_b = project_tokens(params, z_b, &c_b);
            const CycleGridResult cyc = cycle_loss_on_grids(p_f, p_mid, p_b, config.temperature);

            loss += cyc.value;
            acc += cycle_accuracy(cyc.pair);
            grads.accumulate_params(project_backward(params, c_f, cyc.grad_forward));
            grads.accumulate_params(project_backward(params, c_mid, cyc.grad_intermediate));
            grads.accumulate_params(project_backward(params, c_b, cyc.grad_backward));
        }
        const double inv = 1.0 / static_cast<double>(config.batch_size);
        report.loss_curve.push_back(loss * inv);
        report.identity_accuracy_curve.push_back(acc * inv);
        if (!std::isfinite(loss)) throw NumericError("probe: non-finite loss at step " + std::to_string(step));

        grads.scale_params(inv);
        const auto p_tensors = params.tensors();
        const auto g_tensors = std::as_const(grads).tensors();
        adamw_step(p_tensors, g_tensors, state, config.lr, adam);
    }
    return report;
}

}  // namespace cosettle
