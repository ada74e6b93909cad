#include "cosettle/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "cosettle/error.hpp"
#include "cosettle/objective.hpp"

namespace cosettle {

const char* to_string(GradcheckLoss loss) {
    switch (loss) {
        case GradcheckLoss::cycle: return "cycle";
        case GradcheckLoss::kl: return "kl";
        case GradcheckLoss::total: return "total";
    }
    return "total";
}

namespace {

struct Instance {
    ProjectionParams params;
    Matrix z_f, z_mid, z_b;
    double temperature = 1.0;
    double lambda = 1.0;
};

Instance random_instance(ProjectionKind kind, const GradcheckOptions& opt, Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick_d(std::min<std::size_t>(4, opt.max_dim), opt.max_dim);
    std::uniform_int_distribution<std::size_t> pick_n(2, std::max<std::size_t>(2, opt.max_tokens));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    Instance in;
    const std::size_t d = pick_d(rng);
    const std::size_t n = pick_n(rng);
    in.params = init_projection(kind, d, rng, 0.3);
    for (double& g : in.params.ln_gain) g = 1.0 + 0.2 * normal(rng);
    for (double& b : in.params.ln_bias) b = 0.2 * normal(rng);
    in.z_f = standard_normals(n, d, rng);
    in.z_mid = standard_normals(n, d, rng);
    in.z_b = standard_normals(n, d, rng);
    in.temperature = 0.25 + 0.75 * unit(rng);
    in.lambda = 0.1 + 1.9 * unit(rng);
    return in;
}

struct Evaluation {
    double value = 0.0;
    GradBundle grads;
};

Evaluation evaluate(const Instance& in, const ProjectionParams& params, GradcheckLoss loss, bool with_grad) {
    ForwardCache c_f, c_mid, c_b;
    const Matrix p_f = project_tokens(params, in.z_f, &c_f);
    const Matrix p_mid = project_tokens(params, in.z_mid, &c_mid);
    const Matrix p_b = project_tokens(params, in.z_b, &c_b);

    Evaluation out;
    Matrix g_f, g_mid, g_b;
    if (loss == GradcheckLoss::cycle) {
        CycleGridResult r = cycle_loss_on_grids(p_f, p_mid, p_b, in.temperature);
        out.value = r.value;
        g_f = std::move(r.grad_forward);
        g_mid = std::move(r.grad_intermediate);
        g_b = std::move(r.grad_backward);
    } else if (loss == GradcheckLoss::kl) {
        const KlGridResult a = kl_divergence_grid(p_f, in.z_f);
        const KlGridResult b = kl_divergence_grid(p_mid, in.z_mid);
        const KlGridResult c = kl_divergence_grid(p_b, in.z_b);
        out.value = (a.value + b.value + c.value) / 3.0;
        g_f = a.grad * (1.0 / 3.0);
        g_mid = b.grad * (1.0 / 3.0);
        g_b = c.grad * (1.0 / 3.0);
    } else {
        const PalindromeView view{p_f, p_mid, p_b, in.z_f, in.z_mid, in.z_b};
        TotalLossResult r = total_loss(view, in.lambda, in.temperature);
        out.value = r.report.total;
        g_f = std::move(r.grad_forward);
        g_mid = std::move(r.grad_intermediate);
        g_b = std::move(r.grad_backward);
    }
    if (with_grad) {
        out.grads = project_backward(params, c_f, g_f);
        out.grads.accumulate_params(project_backward(params, c_mid, g_mid));
        out.grads.accumulate_params(project_backward(params, c_b, g_b));
    }
    return out;
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& opt) {
    if (!(opt.step > 0.0) || !(opt.tolerance > 0.0) || !(opt.floor > 0.0)) {
        throw ParameterError("gradcheck: step, tolerance and floor must be positive");
    }
    GradcheckReport report;
    report.tolerance = opt.tolerance;
    report.step = opt.step;
    report.passed = true;

    Rng rng(opt.seed);
    for (ProjectionKind kind : {ProjectionKind::linear, ProjectionKind::mlp}) {
        for (GradcheckLoss loss : {GradcheckLoss::cycle, GradcheckLoss::kl, GradcheckLoss::total}) {
            GradcheckCase c;
            c.kind = kind;
            c.loss = loss;
            for (std::size_t k = 0; k < opt.instances; ++k) {
                const Instance in = random_instance(kind, opt, rng);
                const Evaluation analytic = evaluate(in, in.params, loss, true);
                const auto grads = analytic.grads.tensors();
                ProjectionParams probe = in.params;
                auto tensors = probe.tensors();
                for (std::size_t t = 0; t < tensors.size(); ++t) {
                    for (std::size_t i = 0; i < tensors[t].size(); ++i) {
                        const double saved = tensors[t][i];
                        auto at = [&](double offset) {
                            tensors[t][i] = saved + offset;
                            return evaluate(in, probe, loss, false).value;
                        };
                        const double h = opt.step;
                        // Fourth-order central stencil; its truncation error is O(h⁴).
                        const double numeric = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
                        tensors[t][i] = saved;
                        const double a = grads[t][i];
                        const double rel =
                            std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opt.floor});
                        c.max_rel_error = std::max(c.max_rel_error, rel);
                        ++c.entries;
                    }
                }
                ++c.instances;
            }
            c.passed = c.max_rel_error <= opt.tolerance;
            report.passed = report.passed && c.passed;
            report.cases.push_back(c);
        }
    }
    return report;
}

}  // namespace cosettle
