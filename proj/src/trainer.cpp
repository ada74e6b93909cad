#include "cosettle/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <exception>
#include <thread>
#include <utility>

#include "cosettle/config.hpp"
#include "cosettle/error.hpp"
#include "cosettle/objective.hpp"
#include "cosettle/pea.hpp"

namespace cosettle {

void TrainConfig::validate() const {
    if (epochs < 1) throw ParameterError("epochs must be >= 1");
    if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw ParameterError("delta must lie in (0, 1)");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ParameterError("temperature must be > 0");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ParameterError("lambda must be >= 0");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ParameterError("alpha must be >= 0");
    if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) throw ParameterError("base_lr must be >= 0");
    if (!(lr_scale_divisor > 0.0)) throw ParameterError("lr_scale_divisor must be > 0");
    if (!(weight_decay >= 0.0)) throw ParameterError("weight_decay must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ParameterError("beta1 and beta2 must lie in [0, 1)");
    }
    if (threads < 1) throw ParameterError("threads must be >= 1");
    if (!(init_std >= 0.0)) throw ParameterError("init_std must be >= 0");
    if (!(eps_ln > 0.0)) throw ParameterError("eps_ln must be > 0");
}

const std::vector<std::string>& TrainConfig::keys() {
    static const std::vector<std::string> k{
        "epochs",      "batch_size", "base_lr", "lr_scale_divisor", "weight_decay", "beta1",
        "beta2",       "warmup_epochs", "temperature", "delta", "lambda", "alpha",
        "seed",        "projection", "add_positional", "sum_over_patches", "threads", "init_std",
        "eps_ln",      "epoch_metrics", "positional_file"};
    return k;
}

void TrainConfig::set(const std::string& key, const std::string& value) {
    if (key == "epochs") epochs = parse_count(key, value);
    else if (key == "batch_size") batch_size = parse_count(key, value);
    else if (key == "base_lr") base_lr = parse_real(key, value);
    else if (key == "lr_scale_divisor") lr_scale_divisor = parse_real(key, value);
    else if (key == "weight_decay") weight_decay = parse_real(key, value);
    else if (key == "beta1") beta1 = parse_real(key, value);
    else if (key == "beta2") beta2 = parse_real(key, value);
    else if (key == "warmup_epochs") warmup_epochs = parse_count(key, value);
    else if (key == "temperature") temperature = parse_real(key, value);
    else if (key == "delta") delta = parse_real(key, value);
    else if (key == "lambda") lambda = parse_real(key, value);
    else if (key == "alpha") alpha = parse_real(key, value);
    else if (key == "seed") seed = parse_u64(key, value);
    else if (key == "projection") projection = projection_kind_from_string(value);
    else if (key == "add_positional") add_positional = parse_bool(key, value);
    else if (key == "sum_over_patches") sum_over_patches = parse_bool(key, value);
    else if (key == "threads") threads = parse_count(key, value);
    else if (key == "init_std") init_std = parse_real(key, value);
    else if (key == "eps_ln") eps_ln = parse_real(key, value);
    else if (key == "epoch_metrics") epoch_metrics = parse_bool(key, value);
    else if (key == "positional_file") positional_file = value;
    else throw ParameterError("unknown training config key '" + key + "'");
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
    for (const auto& [k, v] : read_key_values(path)) base.set(k, v);
    return base;
}

double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup_steps, double peak_lr) {
    if (step < warmup_steps) {
        return peak_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    }
    const std::size_t decay_steps = total_steps - warmup_steps;
    const double progress =
        decay_steps == 0 ? 0.0 : static_cast<double>(step - warmup_steps) / static_cast<double>(decay_steps);
    return peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void adamw_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                OptimizerState& state, double lr, const AdamWSettings& s) {
    if (params.size() != grads.size()) throw ContractError("adamw_step: parameter/gradient tensor count mismatch");
    if (!(lr >= 0.0)) throw ParameterError("adamw_step: lr must be >= 0");
    if (state.m.empty() && state.step == 0) {
        for (const auto& p : params) {
            state.m.emplace_back(p.size(), 0.0);
            state.v.emplace_back(p.size(), 0.0);
        }
    }
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ContractError("adamw_step: optimizer state does not match the parameter list");
    }
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (params[t].size() != grads[t].size() || state.m[t].size() != params[t].size() ||
            state.v[t].size() != params[t].size()) {
            throw ContractError("adamw_step: tensor " + std::to_string(t) + " shape mismatch");
        }
    }

    ++state.step;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(state.step));
    const double decay = 1.0 - lr * s.weight_decay;
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto p = params[t];
        auto g = grads[t];
        auto& m = state.m[t];
        auto& v = state.v[t];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
            v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p[i] = p[i] * decay - lr * (m_hat / (std::sqrt(v_hat) + s.eps));
        }
    }
}

PositionalGrid positional_grid_for(const EmbeddingGrid& shape, const TrainConfig& config) {
    if (config.positional_file.empty()) return sinusoidal_grid(shape.n_h, shape.n_w, shape.dim());
    PositionalGrid grid = read_positional_grid(config.positional_file);
    if (grid.n_h != shape.n_h || grid.n_w != shape.n_w || grid.dim() != shape.dim()) {
        throw ShapeError("positional grid " + config.positional_file + " does not match the corpus grid shape");
    }
    return grid;
}

FeatureMap training_feature_map(const Corpus& corpus, const TrainConfig& config, const ProjectionParams& params) {
    validate_corpus(corpus);
    FeatureMap map;
    map.projection = params;
    if (config.add_positional) {
        map.positional = positional_grid_for(corpus.front().frames.front(), config).values;
    }
    return map;
}

double isometry_defect(const ProjectionParams& params) {
    const Matrix w = params.kind == ProjectionKind::mlp ? matmul(params.weight2, params.weight1) : params.weight1;
    Matrix g = matmul_nt(w, w);
    for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= 1.0;
    return frobenius_norm(g);
}

namespace {

struct ItemResult {
    GradBundle grads;
    LossReport report;
    double cyc_acc = 0.0;
};

ItemResult evaluate_item(const VideoEmbeddingSequence& video, const ProjectionParams& params,
                         const TrainConfig& config, const PositionalGrid* pos, std::uint64_t item_seed) {
    Rng rng(item_seed);
    const ClipSample clip = sample_pair(video, config.delta, rng);
    Matrix z_f = clip.forward_frame.values;
    Matrix z_mid = clip.intermediate_frame.values;
    Matrix z_b = clip.backward_frame.values;
    if (pos) {
        z_f += pos->values;
        z_mid += pos->values;
        z_b += pea_augment(*pos, config.alpha, rng).values;
    }

    ForwardCache c_f, c_mid, c_b;
    const Matrix p_f = project_tokens(params, z_f, &c_f);
    const Matrix p_mid = project_tokens(params, z_mid, &c_mid);
    const Matrix p_b = project_tokens(params, z_b, &c_b);

    const PalindromeView view{p_f, p_mid, p_b, z_f, z_mid, z_b};
    const TotalLossResult loss =
        total_loss(view, config.lambda, config.temperature, CycleLossOptions{config.sum_over_patches});

    ItemResult out;
    out.report = loss.report;
    out.cyc_acc = cycle_accuracy(loss.pair);
    out.grads = project_backward(params, c_f, loss.grad_forward);
    out.grads.accumulate_params(project_backward(params, c_mid, loss.grad_intermediate));
    out.grads.accumulate_params(project_backward(params, c_b, loss.grad_backward));
    return out;
}

}  // namespace

TrainResult train(const Corpus& corpus, const TrainConfig& config) {
    config.validate();
    validate_corpus(corpus);
    Rng init_rng(config.seed);
    ProjectionParams init = init_projection(config.projection, corpus.front().frames.front().dim(), init_rng,
                                            config.init_std);
    init.eps_ln = config.eps_ln;
    return train(corpus, config, std::move(init));
}

TrainResult train(const Corpus& corpus, const TrainConfig& config, ProjectionParams initial) {
    config.validate();
    validate_corpus(corpus);
    initial.validate();
    const EmbeddingGrid& shape = corpus.front().frames.front();
    if (initial.dim() != shape.dim()) throw ShapeError("initial projection dimension does not match the corpus");

    std::optional<PositionalGrid> pos;
    if (config.add_positional) pos = positional_grid_for(shape, config);

    TrainResult result;
    result.initial = initial;
    ProjectionParams params = std::move(initial);
    TrainHistory& history = result.history;
    history.initial_isometry_defect = isometry_defect(params);
    if (config.epoch_metrics) {
        history.initial_metrics =
            evaluate(corpus, training_feature_map(corpus, config, params), EvalConfig{config.delta, config.temperature});
    }

    const std::size_t videos = corpus.size();
    const std::size_t steps_per_epoch = (videos + config.batch_size - 1) / config.batch_size;
    const std::size_t total_steps = steps_per_epoch * config.epochs;
    const std::size_t warmup_steps = std::min(config.warmup_epochs * steps_per_epoch, total_steps - 1);
    const double peak = config.peak_lr();
    const AdamWSettings adam{config.beta1, config.beta2, config.weight_decay, 1e-8};

    // Stream for shuffling and per-item seeds; kept apart from the initialization stream.
    Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    OptimizerState state;
    std::vector<std::size_t> order(videos);
    std::size_t step = 0;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = 0; i < videos; ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);

        EpochRecord rec;
        rec.epoch = epoch;
        for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
            const std::size_t begin = b * config.batch_size;
            const std::size_t count = std::min(config.batch_size, videos - begin);
            std::vector<std::uint64_t> seeds(count);
            for (auto& s : seeds) s = rng();

            std::vector<ItemResult> items(count);
            const std::size_t workers = std::min(config.threads, count);
            if (workers <= 1) {
                for (std::size_t k = 0; k < count; ++k) {
                    items[k] = evaluate_item(corpus[order[begin + k]], params, config, pos ? &*pos : nullptr, seeds[k]);
                }
            } else {
                std::atomic<std::size_t> next{0};
                std::vector<std::exception_ptr> errors(workers);
                std::vector<std::thread> pool;
                for (std::size_t w = 0; w < workers; ++w) {
                    pool.emplace_back([&, w] {
                        try {
                            for (std::size_t k; (k = next.fetch_add(1)) < count;) {
                                items[k] = evaluate_item(corpus[order[begin + k]], params, config,
                                                         pos ? &*pos : nullptr, seeds[k]);
                            }
                        } catch (...) {
                            errors[w] = std::current_exception();
                        }
                    });
                }
                for (auto& t : pool) t.join();
                for (auto& e : errors)
                    if (e) std::rethrow_exception(e);
            }

            StepRecord sr;
            sr.step = step;
            sr.epoch = epoch;
            sr.lr = lr_at(step, total_steps, warmup_steps, peak);
            GradBundle grads = GradBundle::zeros_like(params);
            for (std::size_t k = 0; k < count; ++k) {
                const ItemResult& it = items[k];
                if (!std::isfinite(it.report.total) || !it.grads.all_finite()) {
                    throw NumericError("non-finite loss or gradient at step " + std::to_string(step) + " (video " +
                                       std::to_string(corpus[order[begin + k]].video_id) + ")");
                }
                grads.accumulate_params(it.grads);
                sr.cyc += it.report.cyc;
                sr.reg += it.report.reg;
                sr.cyc_acc += it.cyc_acc;
                sr.clamped += it.report.clamped;
            }
            const double inv = 1.0 / static_cast<double>(count);
            grads.scale_params(inv);
            sr.cyc *= inv;
            sr.reg *= inv;
            sr.cyc_acc *= inv;
            sr.total = sr.cyc + config.lambda * sr.reg;

            const auto p_tensors = params.tensors();
            const auto g_tensors = std::as_const(grads).tensors();
            adamw_step(p_tensors, g_tensors, state, sr.lr, adam);
            if (!params.weight1.all_finite()) {
                throw NumericError("parameters became non-finite at step " + std::to_string(step));
            }

            rec.cyc += sr.cyc;
            rec.reg += sr.reg;
            rec.total += sr.total;
            history.steps.push_back(sr);
        }
        const double inv_steps = 1.0 / static_cast<double>(steps_per_epoch);
        rec.cyc *= inv_steps;
        rec.reg *= inv_steps;
        rec.total *= inv_steps;
        rec.isometry_defect = isometry_defect(params);
        if (config.epoch_metrics) {
            rec.metrics = evaluate(corpus, training_feature_map(corpus, config, params),
                                   EvalConfig{config.delta, config.temperature});
        }
        history.epochs.push_back(std::move(rec));
    }
    result.params = std::move(params);
    return result;
}

}  // namespace cosettle
