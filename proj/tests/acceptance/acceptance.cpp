// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only if all pass.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cosettle/error.hpp"
#include "cosettle/gradcheck.hpp"
#include "cosettle/metrics.hpp"
#include "cosettle/pea.hpp"
#include "cosettle/theory.hpp"
#include "cosettle/trainer.hpp"

using namespace cosettle;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double out = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) out = std::max(out, std::abs(a[i] - b[i]));
    return out;
}

// ---- 1 ----------------------------------------------------------------------

Outcome gradient_suite() {
    const GradcheckReport r = run_gradcheck(GradcheckOptions{});
    double worst = 0.0;
    for (const auto& c : r.cases) worst = std::max(worst, c.max_rel_error);
    return {r.passed && r.cases.size() == 6, "6 cases x 100 instances, worst rel error " + fmt("%.2e", worst)};
}

// ---- 2 ----------------------------------------------------------------------

Outcome theorem1_recovery() {
    Rng rng(2024);
    double worst_eig = 0.0, worst_full = 0.0;
    for (double lambda : {0.5, 1.0, 2.0}) {
        std::uniform_real_distribution<double> u(0.0, 3.0 * lambda);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> sigma(16);
            for (double& s : sigma) s = u(rng);
            const std::vector<double> mu_star = optimal_eigs_closed_form(sigma, lambda);
            SurrogateOptions opt;
            opt.seed = static_cast<std::uint64_t>(trial);
            worst_eig = std::max(worst_eig, max_abs_diff(optimize_surrogate_linear(sigma, lambda,
                                                                                    SurrogateMode::eigenbasis, opt)
                                                             .mu_hat,
                                                         mu_star));
            worst_full = std::max(worst_full, max_abs_diff(optimize_surrogate_linear(sigma, lambda,
                                                                                      SurrogateMode::full_matrix, opt)
                                                               .mu_hat,
                                                           mu_star));
        }
    }
    return {worst_eig <= 1e-3 && worst_full <= 1e-2,
            "60 spectra, eigenbasis max err " + fmt("%.2e", worst_eig) + ", full-matrix " + fmt("%.2e", worst_full)};
}

// ---- 3 ----------------------------------------------------------------------

Outcome theorem2_oracle() {
    const std::vector<double> sigma{1.0, 3.0};
    const DeltaClosedForm closed = delta_margin_closed_form(sigma, 0.75);
    const SyntheticModelSpec spec = theorem2_model_spec(sigma, Matrix::identity(2), 7, 7, 8, 200, 0);
    const DeltaEmpirical mc = delta_margin_empirical(spec, 0.75, 100000, 1);
    const double rel = std::abs(mc.delta - closed.delta) / std::abs(closed.delta);

    // Sign sweep: the reported flag must equal λ < τ̄/2, and whenever it holds with a
    // below-mean direction under the 2λ threshold, Δ must be positive.
    struct SweepCase {
        std::vector<double> sigma;
        double lambda;
    };
    const SweepCase cases[] = {{{1.0, 3.0}, 0.75},           {{1.0, 3.0}, 1.5},
                               {{0.2, 0.4, 5.0}, 0.5},       {{0.2, 0.4, 5.0}, 1.0},
                               {{2.0, 2.0, 2.0}, 0.5},       {{0.5, 1.0, 1.5, 9.0}, 1.2},
                               {{0.5, 1.0, 1.5, 9.0}, 1.5},  {{0.1, 8.0}, 0.06},
                               {{0.1, 8.0}, 2.5},            {{3.0, 0.3, 0.6, 0.9, 7.2}, 1.0}};
    int sweep_ok = 0;
    for (const SweepCase& c : cases) {
        double tau_bar = 0.0;
        for (double s : c.sigma) tau_bar += s / static_cast<double>(c.sigma.size());
        const DeltaClosedForm r = delta_margin_closed_form(c.sigma, c.lambda);
        bool below = false;
        for (double s : c.sigma) below = below || (s < tau_bar && s <= 2.0 * c.lambda);
        const bool flag_ok = r.positivity_condition == (c.lambda < tau_bar / 2.0);
        const bool sign_ok = !(r.positivity_condition && below) || r.delta > 0.0;
        if (flag_ok && sign_ok) ++sweep_ok;
    }
    const bool ok = std::abs(closed.delta - 1.0 / 3.0) <= 1e-12 && rel <= 0.05 && sweep_ok == 10;
    return {ok, "closed " + fmt("%.6f", closed.delta) + ", MC " + fmt("%.5f", mc.delta) + " (rel " +
                    fmt("%.2e", rel) + "), sign sweep " + std::to_string(sweep_ok) + "/10"};
}

// ---- 4 ----------------------------------------------------------------------

Outcome table3_fixtures() {
    struct Row {
        double d_inter, d_intra, d;
    };
    const Row rows[] = {{0.5067, 0.1330, 0.4668}, {0.5216, 0.1736, 0.4695}, {0.4662, 0.2130, 0.4023},
                        {0.3122, 0.1131, 0.2783}, {0.5073, 0.1834, 0.4523}, {0.2572, 0.1425, 0.2145},
                        {0.5904, 0.1745, 0.5380}, {0.5603, 0.2186, 0.4947}, {0.6162, 0.2626, 0.5374},
                        {0.5858, 0.1598, 0.5378}, {0.6102, 0.2457, 0.5365}, {0.5547, 0.2164, 0.4898},
                        {0.5503, 0.1909, 0.4930}, {0.6143, 0.1862, 0.5584}, {0.6399, 0.2092, 0.5772},
                        {0.5756, 0.2144, 0.5112}, {0.6246, 0.2316, 0.5551}, {0.5926, 0.1808, 0.5384},
                        {0.6373, 0.1976, 0.5780}};
    int ok = 0;
    double worst = 0.0;
    for (const Row& r : rows) {
        const double err = std::abs(margin(r.d_inter, r.d_intra, kDefaultGamma) - r.d);
        worst = std::max(worst, err);
        if (err <= 5e-4) ++ok;
    }
    return {ok == 19, std::to_string(ok) + "/19 rows, worst |err| " + fmt("%.2e", worst)};
}

// ---- 5 ----------------------------------------------------------------------

Outcome shortcut_probe_check() {
    ProbeConfig cfg;
    cfg.steps = 500;
    cfg.alpha = 0.0;
    const ShortcutProbeReport plain = shortcut_probe(ProbeSetting::shuffled, cfg);
    cfg.alpha = 0.25;
    const ShortcutProbeReport pea = shortcut_probe(ProbeSetting::shuffled, cfg);
    double best_plain = 0.0, best_pea = 0.0;
    for (double a : plain.identity_accuracy_curve) best_plain = std::max(best_plain, a);
    for (double a : pea.identity_accuracy_curve) best_pea = std::max(best_pea, a);
    return {best_plain >= 0.99 && best_pea < 0.5,
            "max identity accuracy alpha=0: " + fmt("%.4f", best_plain) + ", alpha=0.25: " + fmt("%.4f", best_pea)};
}

// ---- 6 ----------------------------------------------------------------------

Outcome end_to_end() {
    SyntheticModelSpec spec;
    spec.dim = 64;
    spec.n_h = 7;
    spec.n_w = 7;
    spec.frames_per_video = 8;
    spec.videos = 200;
    std::vector<double> diag(64, 0.1);
    for (std::size_t i = 0; i < 32; ++i) diag[i] = 4.0;
    spec.intra_cov = Matrix::diagonal(diag);
    spec.inter_cov = Matrix::identity(64);
    spec.seed = 1;
    const Corpus corpus = generate_corpus(spec);

    TrainConfig cfg;
    cfg.lambda = 1.0;
    cfg.alpha = 0.25;
    cfg.epoch_metrics = true;
    const TrainResult r = train(corpus, cfg);
    const TradeoffMetrics& before = *r.history.initial_metrics;
    const TradeoffMetrics& after = *r.history.epochs.back().metrics;
    return {after.margin > before.margin && after.cyc_acc > before.cyc_acc,
            "margin " + fmt("%.6f", before.margin) + " -> " + fmt("%.6f", after.margin) + ", cyc_acc " +
                fmt("%.6f", before.cyc_acc) + " -> " + fmt("%.6f", after.cyc_acc)};
}

// ---- 7 ----------------------------------------------------------------------

Outcome lemma1_signs() {
    int ok = 0;
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j)
            for (int k = 0; k < 10; ++k) {
                const double mu = (i + 0.5) / 10.0;
                const double sigma = 0.05 * std::pow(10.0, 0.3 * j);
                const double lambda = 0.05 * std::pow(10.0, 0.3 * k);
                const GradientTerms t = lemma1_gradient_terms(mu, sigma, lambda);
                if (t.consistency > 0.0 && t.separability < 0.0) ++ok;
            }
    return {ok == 1000, std::to_string(ok) + "/1000 grid points"};
}

// ---- 8 ----------------------------------------------------------------------

int run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + COSETTLE_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "cosettle_acceptance_determinism";
    fs::remove_all(root);
    std::vector<fs::path> runs{root / "a", root / "b"};
    for (const fs::path& dir : runs) {
        fs::create_directories(dir);
        const std::string d = dir.string() + "/";
        const int rc =
            run_cli("gen --seed 11 --dim 32 --videos 40 --intra_diag 2 --out " + d + "corpus.bin") |
            run_cli("train --seed 5 --threads 1 --epochs 2 --corpus " + d + "corpus.bin --out " + d + "ckpt.bin") |
            run_cli("eval --threads 1 --corpus " + d + "corpus.bin --checkpoint " + d + "ckpt.bin --out " + d +
                    "metrics.json");
        if (rc != 0) {
            fs::remove_all(root);
            return {false, "CLI pipeline failed"};
        }
    }
    int same = 0;
    for (const char* f : {"corpus.bin", "ckpt.bin", "ckpt.bin.history.jsonl", "metrics.json"}) {
        const std::string a = read_bytes(runs[0] / f), b = read_bytes(runs[1] / f);
        if (!a.empty() && a == b) ++same;
    }
    fs::remove_all(root);
    return {same == 4, std::to_string(same) + "/4 artefacts byte-identical across two runs"};
}

// ---- 9 ----------------------------------------------------------------------

void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// True if reading `bytes` through `reader` throws a FormatError.
bool rejects(const fs::path& p, const std::string& bytes, const std::function<void(const fs::path&)>& reader) {
    write_bytes(p, bytes);
    try {
        reader(p);
    } catch (const FormatError&) {
        return true;
    } catch (...) {
        return false;
    }
    return false;
}

Outcome format_round_trips() {
    const fs::path root = fs::temp_directory_path() / "cosettle_acceptance_formats";
    fs::create_directories(root);
    int ok = 0, total = 0;
    auto check = [&](bool b) {
        ++total;
        if (b) ++ok;
    };

    SyntheticModelSpec spec;
    spec.dim = 8;
    spec.n_h = 3;
    spec.n_w = 2;
    spec.frames_per_video = 4;
    spec.videos = 6;
    spec.intra_cov = Matrix::identity(8);
    spec.inter_cov = Matrix::identity(8);
    spec.seed = 9;
    const Corpus corpus = generate_corpus(spec);
    const fs::path cp = root / "corpus.bin";
    write_corpus(cp, corpus);
    check(read_corpus(cp) == corpus);
    const std::string corpus_bytes = read_bytes(cp);
    write_corpus(root / "corpus2.bin", read_corpus(cp));
    check(read_bytes(root / "corpus2.bin") == corpus_bytes);

    Rng rng(3);
    const fs::path kp = root / "ckpt.bin";
    std::string ckpt_bytes;
    for (ProjectionKind kind : {ProjectionKind::linear, ProjectionKind::mlp}) {
        const ProjectionParams params = init_projection(kind, 8, rng, 0.3);
        write_checkpoint(kp, params);
        check(read_checkpoint(kp) == params);
        ckpt_bytes = read_bytes(kp);
    }

    auto read_c = [](const fs::path& p) { read_corpus(p); };
    auto read_k = [](const fs::path& p) { read_checkpoint(p); };
    std::string bad = corpus_bytes;
    bad[0] ^= 0x5a;
    check(rejects(cp, bad, read_c));
    check(rejects(cp, corpus_bytes.substr(0, corpus_bytes.size() - 3), read_c));
    check(rejects(cp, corpus_bytes.substr(0, 10), read_c));
    bad = ckpt_bytes;
    bad[1] ^= 0x5a;
    check(rejects(kp, bad, read_k));
    check(rejects(kp, ckpt_bytes.substr(0, ckpt_bytes.size() - 1), read_k));
    check(rejects(kp, ckpt_bytes.substr(0, 6), read_k));
    fs::remove_all(root);
    return {ok == total, std::to_string(ok) + "/" + std::to_string(total) + " round-trip and corruption checks"};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        double budget_s;  // 0: no runtime bound
        Outcome (*run)();
    };
    const Criterion criteria[] = {
        {"gradient suite", 60.0, gradient_suite},
        {"optimal eigenvalue recovery", 30.0, theorem1_recovery},
        {"margin change oracle", 30.0, theorem2_oracle},
        {"published margin rows", 0.0, table3_fixtures},
        {"positional shortcut probe", 120.0, shortcut_probe_check},
        {"end-to-end training direction", 600.0, end_to_end},
        {"gradient term signs", 0.0, lemma1_signs},
        {"CLI determinism", 0.0, determinism},
        {"format round trips", 0.0, format_round_trips},
    };
    int failures = 0;
    int index = 0;
    for (const Criterion& c : criteria) {
        ++index;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_s > 0.0 && secs > c.budget_s) {
            o.passed = false;
            o.detail += " (over the " + fmt("%.0f", c.budget_s) + " s budget)";
        }
        if (!o.passed) ++failures;
        std::printf("%s %d %s: %s [%.1f s]\n", o.passed ? "PASS" : "FAIL", index, c.name, o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
