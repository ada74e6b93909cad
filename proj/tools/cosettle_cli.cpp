// Command-line front end: gen, train, eval, verify-theory, gradcheck, probe-shortcut.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "cosettle/config.hpp"
#include "cosettle/data.hpp"
#include "cosettle/error.hpp"
#include "cosettle/gradcheck.hpp"
#include "cosettle/metrics.hpp"
#include "cosettle/pea.hpp"
#include "cosettle/projection.hpp"
#include "cosettle/report_json.hpp"
#include "cosettle/theory.hpp"
#include "cosettle/trainer.hpp"

namespace fs = std::filesystem;
using namespace cosettle;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitUsage = 64;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::size_t threads = 1;
};

void add_common(CLI::App* app, Common& c, bool out_required) {
    app->add_option("--config", c.config, "key = value config file")->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "RNG seed (overrides the config file)");
    auto* out = app->add_option("--out", c.out, "output path");
    if (out_required) out->required();
    app->add_option("--threads", c.threads, "worker threads (1 = single-threaded, bit-reproducible)")
        ->check(CLI::PositiveNumber);
}

void log(const std::string& msg) { std::cerr << "[cosettle] " << msg << "\n"; }

// ---- gen -------------------------------------------------------------------

std::vector<double> broadcast(const std::string& key, const std::string& value, std::size_t dim) {
    std::vector<double> v = parse_real_list(key, value);
    if (v.size() == 1) v.assign(dim, v.front());
    if (v.size() != dim) {
        throw ParameterError(key + " has " + std::to_string(v.size()) + " entries, expected 1 or " +
                             std::to_string(dim));
    }
    return v;
}

SyntheticModelSpec gen_spec(const Common& c, const std::map<std::string, std::string>& overrides) {
    std::map<std::string, std::string> kv{{"dim", "64"},        {"n_h", "7"},         {"n_w", "7"},
                                          {"frames", "8"},      {"videos", "200"},    {"intra_diag", "1"},
                                          {"inter_diag", "1"}, {"seed", "0"}};
    if (!c.config.empty())
        for (auto& [k, v] : read_key_values(c.config)) kv[k] = v;
    for (const auto& [k, v] : overrides) kv[k] = v;
    if (c.seed) kv["seed"] = std::to_string(*c.seed);

    SyntheticModelSpec spec;
    std::optional<std::uint64_t> rotation_seed;
    for (const auto& [k, v] : kv) {
        if (k == "dim") spec.dim = parse_count(k, v);
        else if (k == "n_h") spec.n_h = parse_count(k, v);
        else if (k == "n_w") spec.n_w = parse_count(k, v);
        else if (k == "frames") spec.frames_per_video = parse_count(k, v);
        else if (k == "videos") spec.videos = parse_count(k, v);
        else if (k == "seed") spec.seed = parse_u64(k, v);
        else if (k == "rotation_seed") rotation_seed = parse_u64(k, v);
        else if (k != "intra_diag" && k != "inter_diag") throw ParameterError("unknown gen config key '" + k + "'");
    }
    if (spec.dim == 0) throw ParameterError("dim must be >= 1");
    Matrix basis = Matrix::identity(spec.dim);
    if (rotation_seed) {
        Rng rng(*rotation_seed);
        basis = random_orthogonal(spec.dim, rng);
    }
    spec.intra_cov = symmetrize(compose_spectral(basis, broadcast("intra_diag", kv["intra_diag"], spec.dim)));
    spec.inter_cov = symmetrize(compose_spectral(basis, broadcast("inter_diag", kv["inter_diag"], spec.dim)));
    return spec;
}

int run_gen(const Common& c, const std::map<std::string, std::string>& overrides) {
    const SyntheticModelSpec spec = gen_spec(c, overrides);
    log("generating " + std::to_string(spec.videos) + " videos, dim " + std::to_string(spec.dim));
    const Corpus corpus = generate_corpus(spec);
    write_corpus(c.out, corpus);
    std::cout << "gen: wrote " << corpus.size() << " videos to " << c.out << "\n";
    return kExitOk;
}

// ---- train -----------------------------------------------------------------

TrainConfig train_config(const Common& c, const std::map<std::string, std::string>& overrides) {
    TrainConfig cfg;
    if (!c.config.empty()) cfg = load_train_config(c.config, cfg);
    for (const auto& [k, v] : overrides) cfg.set(k, v);
    if (c.seed) cfg.seed = *c.seed;
    cfg.threads = c.threads;
    cfg.validate();
    return cfg;
}

int run_train(const Common& c, const std::string& corpus_path, const std::string& history_path,
              const std::string& init_path, const std::map<std::string, std::string>& overrides) {
    const TrainConfig cfg = train_config(c, overrides);
    const Corpus corpus = read_corpus(corpus_path);
    log("training " + std::string(to_string(cfg.projection)) + " head for " + std::to_string(cfg.epochs) +
        " epochs on " + std::to_string(corpus.size()) + " videos");
    const TrainResult result =
        init_path.empty() ? train(corpus, cfg) : train(corpus, cfg, read_checkpoint(init_path));
    write_checkpoint(c.out, result.params);
    const std::string hist = history_path.empty() ? c.out + ".history.jsonl" : history_path;
    write_text_file(hist, history_json_lines(result.history));
    const auto& last = result.history.steps.back();
    std::cout << "train: " << result.history.steps.size() << " steps, final total loss " << last.total
              << ", checkpoint " << c.out << "\n";
    return kExitOk;
}

// ---- eval ------------------------------------------------------------------

int run_eval(const Common& c, const std::string& corpus_path, const std::string& checkpoint,
             std::optional<double> gamma, const std::map<std::string, std::string>& overrides) {
    const TrainConfig cfg = train_config(c, overrides);
    const Corpus corpus = read_corpus(corpus_path);
    FeatureMap map;
    if (!checkpoint.empty()) map.projection = read_checkpoint(checkpoint);
    if (cfg.add_positional) map.positional = positional_grid_for(corpus.front().frames.front(), cfg).values;
    EvalConfig ec{cfg.delta, cfg.temperature, gamma.value_or(kDefaultGamma)};
    const TradeoffMetrics m = evaluate(corpus, map, ec);
    Json j = to_json(m);
    j["corpus"] = fs::path(corpus_path).filename().string();
    j["checkpoint"] = checkpoint.empty() ? Json(nullptr) : Json(fs::path(checkpoint).filename().string());
    write_text_file(c.out, j.dump(2) + "\n");
    std::cout << "eval: margin " << m.margin << ", cyc_acc " << m.cyc_acc << " -> " << c.out << "\n";
    return kExitOk;
}

// ---- verify-theory -----------------------------------------------------------

int run_verify(const Common& c, const std::map<std::string, std::string>& overrides) {
    std::map<std::string, std::string> kv{{"sigma", "1,3"}, {"lambda", "0.75"}, {"mode", "eigenbasis"},
                                          {"samples", "100000"}, {"seed", "0"}};
    if (!c.config.empty())
        for (auto& [k, v] : read_key_values(c.config)) kv[k] = v;
    for (const auto& [k, v] : overrides) kv[k] = v;
    if (c.seed) kv["seed"] = std::to_string(*c.seed);

    TheoryRequest req;
    for (const auto& [k, v] : kv) {
        if (k == "sigma") req.sigma = parse_real_list(k, v);
        else if (k == "lambda") req.lambda = parse_real(k, v);
        else if (k == "mode") req.mode = surrogate_mode_from_string(v);
        else if (k == "samples") req.samples = parse_count(k, v);
        else if (k == "seed") req.seed = parse_u64(k, v);
        else throw ParameterError("unknown verify-theory key '" + k + "'");
    }
    const SpectralReport rep = verify_theory(req);
    write_text_file(c.out, to_json(rep).dump(2) + "\n");
    std::cout << "verify-theory: max |mu_hat - mu_star| " << rep.max_abs_error << ", delta closed "
              << rep.delta_closed << " empirical " << rep.delta_empirical << "\n";
    return kExitOk;
}

// ---- gradcheck ----------------------------------------------------------------

int run_gradcheck_cmd(const Common& c, std::size_t instances) {
    GradcheckOptions opt;
    opt.instances = instances;
    if (c.seed) opt.seed = *c.seed;
    const GradcheckReport rep = run_gradcheck(opt);
    if (!c.out.empty()) write_text_file(c.out, to_json(rep).dump(2) + "\n");
    for (const auto& cs : rep.cases) {
        log(std::string(to_string(cs.kind)) + "/" + to_string(cs.loss) +
            ": max rel error " + std::to_string(cs.max_rel_error) + (cs.passed ? " ok" : " FAILED"));
    }
    std::cout << "gradcheck: " << (rep.passed ? "all cases passed" : "FAILED") << "\n";
    return rep.passed ? kExitOk : kExitValidation;
}

// ---- probe-shortcut -------------------------------------------------------------

int run_probe(const Common& c, const std::string& setting, const std::map<std::string, std::string>& overrides) {
    ProbeConfig cfg;
    std::map<std::string, std::string> kv;
    if (!c.config.empty())
        for (auto& [k, v] : read_key_values(c.config)) kv[k] = v;
    for (const auto& [k, v] : overrides) kv[k] = v;
    for (const auto& [k, v] : kv) {
        if (k == "alpha") cfg.alpha = parse_real(k, v);
        else if (k == "temperature") cfg.temperature = parse_real(k, v);
        else if (k == "steps") cfg.steps = parse_count(k, v);
        else if (k == "lr") cfg.lr = parse_real(k, v);
        else if (k == "batch_size") cfg.batch_size = parse_count(k, v);
        else if (k == "seed") cfg.seed = parse_u64(k, v);
        else if (k == "dim") cfg.dim = parse_count(k, v);
        else if (k == "n_h") cfg.n_h = parse_count(k, v);
        else if (k == "n_w") cfg.n_w = parse_count(k, v);
        else if (k == "frames") cfg.frames = parse_count(k, v);
        else if (k == "videos") cfg.videos = parse_count(k, v);
        else if (k == "patch_scale") cfg.patch_scale = parse_real(k, v);
        else if (k == "motion_scale") cfg.motion_scale = parse_real(k, v);
        else if (k == "delta") cfg.delta = parse_real(k, v);
        else throw ParameterError("unknown probe key '" + k + "'");
    }
    if (c.seed) cfg.seed = *c.seed;
    const ShortcutProbeReport rep = shortcut_probe(probe_setting_from_string(setting), cfg);
    write_text_file(c.out, to_json(rep).dump(2) + "\n");
    std::cout << "probe-shortcut: " << setting << ", final identity accuracy "
              << rep.identity_accuracy_curve.back() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Consistency/separability trade-off toolkit for frozen video patch embeddings"};
    app.require_subcommand(1);

    Common common;
    std::map<std::string, std::string> overrides;
    // Registers `--<key> VALUE` for each key; parsed values land in `overrides`.
    auto add_overrides = [&](CLI::App* sub, const std::vector<std::string>& keys) {
        for (const auto& key : keys) {
            sub->add_option_function<std::string>(
                "--" + key, [&overrides, key](const std::string& v) { overrides[key] = v; }, "override " + key);
        }
    };

    auto* gen = app.add_subcommand("gen", "generate a synthetic embedding corpus");
    add_common(gen, common, true);
    add_overrides(gen, {"dim", "n_h", "n_w", "frames", "videos", "intra_diag", "inter_diag", "rotation_seed"});

    std::string corpus_path, history_path, init_path, checkpoint_path, setting = "shuffled";
    auto* tr = app.add_subcommand("train", "train a projection head on a corpus");
    add_common(tr, common, true);
    tr->add_option("--corpus", corpus_path, "corpus file")->required()->check(CLI::ExistingFile);
    tr->add_option("--history", history_path, "history JSON-lines path (default: <out>.history.jsonl)");
    tr->add_option("--init", init_path, "checkpoint to start from")->check(CLI::ExistingFile);
    std::vector<std::string> train_keys;
    for (const auto& k : TrainConfig::keys())
        if (k != "seed" && k != "threads") train_keys.push_back(k);
    add_overrides(tr, train_keys);

    std::optional<double> gamma;
    auto* ev = app.add_subcommand("eval", "compute trade-off metrics");
    add_common(ev, common, true);
    ev->add_option("--corpus", corpus_path, "corpus file")->required()->check(CLI::ExistingFile);
    ev->add_option("--checkpoint", checkpoint_path, "projection checkpoint (default: raw embeddings)")
        ->check(CLI::ExistingFile);
    ev->add_option("--gamma", gamma, "scale factor (default 0.3)");
    add_overrides(ev, {"delta", "temperature", "add_positional", "positional_file"});

    auto* vt = app.add_subcommand("verify-theory", "check the spectral closed forms numerically");
    add_common(vt, common, true);
    add_overrides(vt, {"sigma", "lambda", "mode", "samples"});

    std::size_t instances = 100;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    add_common(gc, common, false);
    gc->add_option("--instances", instances, "random instances per case")->check(CLI::PositiveNumber);

    auto* pr = app.add_subcommand("probe-shortcut", "positional shortcut probe");
    add_common(pr, common, true);
    pr->add_option("--setting", setting, "irrelevant, shuffled or normal");
    add_overrides(pr, {"alpha", "temperature", "steps", "lr", "batch_size", "dim", "n_h", "n_w", "frames", "videos",
                       "patch_scale", "motion_scale", "delta"});

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen->parsed()) return run_gen(common, overrides);
        if (tr->parsed()) return run_train(common, corpus_path, history_path, init_path, overrides);
        if (ev->parsed()) return run_eval(common, corpus_path, checkpoint_path, gamma, overrides);
        if (vt->parsed()) return run_verify(common, overrides);
        if (gc->parsed()) return run_gradcheck_cmd(common, instances);
        if (pr->parsed()) return run_probe(common, setting, overrides);
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitUsage;
}
