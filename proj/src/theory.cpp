#include "cosettle/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "cosettle/error.hpp"
#include "cosettle/numerics.hpp"

namespace cosettle {

namespace {

std::string format_sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

void check_lambda(double lambda) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ParameterError("lambda must be a finite positive number");
}

void check_sigma(std::span<const double> sigma) {
    if (sigma.empty()) throw ParameterError("sigma must be non-empty");
    for (double s : sigma) {
        if (!(s >= 0.0) || !std::isfinite(s)) throw ParameterError("sigma entries must be finite and >= 0");
    }
}

}  // namespace

std::vector<double> optimal_eigs_closed_form(std::span<const double> sigma, double lambda) {
    check_lambda(lambda);
    check_sigma(sigma);
    std::vector<double> mu(sigma.size());
    for (std::size_t i = 0; i < sigma.size(); ++i) mu[i] = std::sqrt(std::max(0.0, 1.0 - sigma[i] / (2.0 * lambda)));
    return mu;
}

double per_eig_objective(double mu, double sigma, double lambda) {
    const double m2 = mu * mu;
    return 0.5 * m2 * sigma + 0.5 * lambda * (m2 * m2 - 2.0 * m2);
}

double per_eig_gradient(double mu, double sigma, double lambda) {
    return mu * sigma + 2.0 * lambda * mu * mu * mu - 2.0 * lambda * mu;
}

GradientTerms lemma1_gradient_terms(double mu, double sigma, double lambda) {
    return {mu * sigma, 2.0 * lambda * mu * mu * mu - 2.0 * lambda * mu};
}

const char* to_string(SurrogateMode mode) {
    return mode == SurrogateMode::eigenbasis ? "eigenbasis" : "full-matrix";
}

SurrogateMode surrogate_mode_from_string(const std::string& name) {
    if (name == "eigenbasis") return SurrogateMode::eigenbasis;
    if (name == "full-matrix" || name == "full_matrix") return SurrogateMode::full_matrix;
    throw ParameterError("unknown surrogate mode '" + name + "' (expected eigenbasis or full-matrix)");
}

namespace {

SurrogateFit optimize_eigenbasis(std::span<const double> sigma, double lambda, const SurrogateOptions& opt) {
    SurrogateFit fit;
    fit.mu_hat.resize(sigma.size());
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        const double s = sigma[i];
        double mu = opt.mu0;
        std::size_t it = 0;
        for (double g = per_eig_gradient(mu, s, lambda); std::abs(g) > opt.gradient_tolerance;
             g = per_eig_gradient(mu, s, lambda)) {
            if (++it > opt.max_iterations) {
                throw NumericError("eigenbasis descent did not converge for sigma=" + std::to_string(s) +
                                   " (|h'| = " + std::to_string(std::abs(g)) + ")");
            }
            const double curvature = s + 6.0 * lambda * mu * mu - 2.0 * lambda;
            double step = curvature > 0.0 ? g / curvature : g / (s + 6.0 * lambda * std::max(1.0, mu * mu));
            const double h0 = per_eig_objective(mu, s, lambda);
            double next = mu - step;
            // Projected onto μ ≥ 0 without landing on the stationary point μ = 0.
            if (next < 0.0) next = 0.5 * mu;
            // A smaller |h'| also counts once h stalls at rounding level.
            auto worse = [&](double m) {
                return per_eig_objective(m, s, lambda) > h0 &&
                       std::abs(per_eig_gradient(m, s, lambda)) >= std::abs(g);
            };
            for (int tries = 0; tries < 60 && worse(next); ++tries) {
                step *= 0.5;
                next = std::max(0.5 * mu, mu - step);
            }
            mu = next;
        }
        fit.mu_hat[i] = mu;
        fit.iterations += it;
        fit.residual = std::max(fit.residual, std::abs(per_eig_gradient(mu, s, lambda)));
        fit.objective += per_eig_objective(mu, s, lambda);
    }
    return fit;
}

struct MatrixSurrogate {
    Matrix sigma_hat;
    double lambda;

    double value(const Matrix& w) const {
        Matrix g = matmul_nt(w, w);
        for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= 1.0;
        const double reg = frobenius_norm(g);
        return 0.5 * trace(matmul(matmul(w, sigma_hat), transpose(w))) + 0.5 * lambda * reg * reg;
    }

    // Gradient restricted to symmetric matrices.
    Matrix gradient(const Matrix& w) const {
        Matrix g = matmul_nt(w, w);
        for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= 1.0;
        return symmetrize(matmul(w, sigma_hat) + matmul(g, w) * (2.0 * lambda));
    }

    /// Directional derivative of the gradient along a symmetric e.
    Matrix hessian_apply(const Matrix& w, const Matrix& e) const {
        Matrix g = matmul_nt(w, w);
        for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= 1.0;
        const Matrix dg = matmul_nt(e, w) + matmul_nt(w, e);
        return symmetrize(matmul(e, sigma_hat) + (matmul(dg, w) + matmul(g, e)) * (2.0 * lambda));
    }
};

/// Orthonormal basis of symmetric d×d matrices: E_ii and (E_ij + E_ji)/√2.
std::vector<std::pair<std::size_t, std::size_t>> symmetric_index(std::size_t d) {
    std::vector<std::pair<std::size_t, std::size_t>> idx;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) idx.emplace_back(i, j);
    return idx;
}

Matrix symmetric_unit(std::size_t d, std::size_t i, std::size_t j) {
    Matrix e(d, d);
    if (i == j) {
        e(i, i) = 1.0;
    } else {
        e(i, j) = e(j, i) = 1.0 / std::sqrt(2.0);
    }
    return e;
}

double symmetric_coord(const Matrix& a, std::size_t i, std::size_t j) {
    return i == j ? a(i, i) : std::sqrt(2.0) * a(i, j);
}

struct DescentState {
    Matrix w;
    double f = 0.0;
    double step = 0.1;
    std::size_t iterations = 0;
    double grad_norm = 0.0;
};

// Gradient descent with an adaptive Armijo step. Returns true on convergence.
bool descend(const MatrixSurrogate& m, DescentState& st, std::size_t max_iterations, double tolerance) {
    for (std::size_t k = 0; k < max_iterations; ++k) {
        const Matrix g = m.gradient(st.w);
        st.grad_norm = frobenius_norm(g);
        if (st.grad_norm <= tolerance) return true;
        const double g2 = st.grad_norm * st.grad_norm;
        for (;;) {
            Matrix trial = st.w - g * st.step;
            const double ft = m.value(trial);
            if (ft <= st.f - 0.5 * st.step * g2) {
                st.w = std::move(trial);
                st.f = ft;
                st.step *= 1.25;
                break;
            }
            st.step *= 0.5;
            if (st.step < 1e-300) return false;
        }
        ++st.iterations;
    }
    st.grad_norm = frobenius_norm(m.gradient(st.w));
    return st.grad_norm <= tolerance;
}

// Saddle-free Newton: steps along −|H|⁻¹g with backtracking. Returns true on convergence.
bool newton_refine(const MatrixSurrogate& m, DescentState& st, std::size_t max_iterations, double tolerance) {
    const std::size_t d = st.w.rows();
    const auto idx = symmetric_index(d);
    const std::size_t n = idx.size();
    for (std::size_t k = 0; k < max_iterations; ++k) {
        const Matrix g = m.gradient(st.w);
        st.grad_norm = frobenius_norm(g);
        if (st.grad_norm <= tolerance) return true;
        Matrix h(n, n);
        for (std::size_t c = 0; c < n; ++c) {
            const Matrix col = m.hessian_apply(st.w, symmetric_unit(d, idx[c].first, idx[c].second));
            for (std::size_t r = 0; r < n; ++r) h(r, c) = symmetric_coord(col, idx[r].first, idx[r].second);
        }
        const SymEigResult eig = sym_eig(symmetrize(h));
        double top = 0.0;
        for (double v : eig.eigenvalues) top = std::max(top, std::abs(v));
        const double floor = std::max(1e-12 * top, 1e-300);
        std::vector<double> coeff(n);
        for (std::size_t c = 0; c < n; ++c) {
            double proj = 0.0;
            for (std::size_t r = 0; r < n; ++r) proj += eig.basis(r, c) * symmetric_coord(g, idx[r].first, idx[r].second);
            coeff[c] = proj / std::max(std::abs(eig.eigenvalues[c]), floor);
        }
        Matrix dir(d, d);
        for (std::size_t r = 0; r < n; ++r) {
            double v = 0.0;
            for (std::size_t c = 0; c < n; ++c) v += eig.basis(r, c) * coeff[c];
            const auto [i, j] = idx[r];
            if (i == j) {
                dir(i, i) = v;
            } else {
                dir(i, j) = dir(j, i) = v / std::sqrt(2.0);
            }
        }
        // Accept the first step that lowers f or the gradient norm; the latter
        // matters once f changes by less than its rounding error.
        double t = 1.0;
        bool moved = false;
        for (int tries = 0; tries < 60; ++tries, t *= 0.5) {
            Matrix trial = st.w - dir * t;
            const double ft = m.value(trial);
            if (ft < st.f || (ft <= st.f + 1e-14 * std::abs(st.f) &&
                              frobenius_norm(m.gradient(trial)) < st.grad_norm)) {
                st.w = std::move(trial);
                st.f = ft;
                moved = true;
                break;
            }
        }
        ++st.iterations;
        if (!moved) break;
    }
    st.grad_norm = frobenius_norm(m.gradient(st.w));
    return st.grad_norm <= tolerance;
}

SurrogateFit optimize_full_matrix(std::span<const double> sigma, double lambda, const SurrogateOptions& opt) {
    const std::size_t d = sigma.size();
    if (opt.restarts == 0) throw ParameterError("full-matrix mode needs at least one restart");
    Rng rng(opt.seed);
    const Matrix basis = random_orthogonal(d, rng);
    std::vector<double> root(d);
    for (std::size_t i = 0; i < d; ++i) root[i] = std::sqrt(sigma[i]);
    // Difference samples x = U·diag(√σ)·s, so that E[x·xᵀ] = U·diag(σ)·Uᵀ.
    const Matrix factor = matmul(basis, Matrix::diagonal(root));
    // Moment matching: the balanced draws already have zero sample cross-moments; rescaling
    // each column to unit mean square makes the sample covariance exactly U·diag(σ)·Uᵀ.
    // Otherwise M_cyc noise near σ = 2λ, where dμ*/dσ is unbounded, dominates μ̂.
    Matrix s = balanced_standard_normals(opt.samples, d, rng);
    for (std::size_t j = 0; j < d; ++j) {
        double ms = 0.0;
        for (std::size_t i = 0; i < s.rows(); ++i) ms += s(i, j) * s(i, j);
        const double scale = 1.0 / std::sqrt(ms / static_cast<double>(s.rows()));
        for (std::size_t i = 0; i < s.rows(); ++i) s(i, j) *= scale;
    }
    const Matrix x = correlate_rows(s, factor);
    MatrixSurrogate model{matmul_tn(x, x) * (1.0 / static_cast<double>(x.rows())), lambda};

    // Starts stay positive definite (spectral radius of the noise ≈ 0.35): f only sees W², and
    // mixed-sign starts can settle next to a nearly flat rotation between ±μ eigenvectors.
    std::normal_distribution<double> normal(0.0, 0.25 / std::sqrt(static_cast<double>(d)));
    DescentState best;
    bool have_best = false;
    for (std::size_t r = 0; r < opt.restarts; ++r) {
        Matrix w0(d, d);
        for (double& v : w0.values()) v = normal(rng);
        DescentState st{symmetrize(w0) + Matrix::identity(d) * 0.5};
        st.f = model.value(st.w);
        descend(model, st, opt.screening_iterations, opt.descent_tolerance);
        if (!have_best || st.f < best.f) {
            best = std::move(st);
            have_best = true;
        }
    }
    if (!newton_refine(model, best, opt.newton_iterations, opt.descent_tolerance)) {
        throw NumericError("full-matrix descent did not converge after " + std::to_string(best.iterations) + " steps (gradient norm " + format_sci(best.grad_norm) +
                           ")");
    }

    std::vector<double> mags = sym_eig(best.w).eigenvalues;
    for (double& v : mags) v = std::abs(v);
    std::sort(mags.begin(), mags.end(), std::greater<>());
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sigma[a] < sigma[b]; });

    SurrogateFit fit;
    fit.mu_hat.resize(d);
    for (std::size_t k = 0; k < d; ++k) fit.mu_hat[order[k]] = mags[k];
    fit.iterations = best.iterations;
    fit.residual = best.grad_norm;
    fit.objective = best.f;
    return fit;
}

}  // namespace

SurrogateFit optimize_surrogate_linear(std::span<const double> sigma, double lambda, SurrogateMode mode,
                                       const SurrogateOptions& options) {
    check_lambda(lambda);
    check_sigma(sigma);
    return mode == SurrogateMode::eigenbasis ? optimize_eigenbasis(sigma, lambda, options)
                                             : optimize_full_matrix(sigma, lambda, options);
}

DeltaClosedForm delta_margin_closed_form(std::span<const double> sigma, double lambda) {
    check_lambda(lambda);
    check_sigma(sigma);
    DeltaClosedForm out;
    out.tau_bar = std::accumulate(sigma.begin(), sigma.end(), 0.0) / static_cast<double>(sigma.size());
    for (double s : sigma) {
        if (s <= 2.0 * lambda) out.delta += (out.tau_bar - s) * (1.0 - s / (2.0 * lambda));
    }
    out.positivity_condition = lambda < 0.5 * out.tau_bar;
    return out;
}

SyntheticModelSpec theorem2_model_spec(std::span<const double> sigma, const Matrix& basis, std::size_t n_h,
                                       std::size_t n_w, std::size_t frames, std::size_t videos, std::uint64_t seed) {
    check_sigma(sigma);
    const std::size_t d = sigma.size();
    if (basis.rows() != d || basis.cols() != d) throw ShapeError("theorem2_model_spec: basis must be d×d");
    SyntheticModelSpec spec;
    spec.dim = d;
    spec.n_h = n_h;
    spec.n_w = n_w;
    spec.frames_per_video = frames;
    spec.videos = videos;
    spec.seed = seed;
    spec.intra_cov = symmetrize(compose_spectral(basis, sigma));

    const double n = static_cast<double>(n_h * n_w);
    const double nt = n * static_cast<double>(frames);
    const double tau = std::accumulate(sigma.begin(), sigma.end(), 0.0) / static_cast<double>(d);
    const double smax = *std::max_element(sigma.begin(), sigma.end());
    if (tau - smax / nt < 0.0) {
        throw ParameterError("theorem2_model_spec: N·T too small to realize the mean-eigenvalue assumption");
    }
    // video_mean_covariance = inter·(1 + 1/N) + Σ/(2NT) = τ̄·I / 2
    Matrix inter = Matrix::identity(d) * tau - spec.intra_cov * (1.0 / nt);
    spec.inter_cov = symmetrize(inter * (1.0 / (2.0 * (1.0 + 1.0 / n))));
    spec.validate();
    return spec;
}

DeltaEmpirical delta_margin_empirical(const SyntheticModelSpec& spec, double lambda, std::size_t samples,
                                      std::uint64_t seed) {
    check_lambda(lambda);
    if (samples < 1000) throw ParameterError("delta_margin_empirical needs at least 1000 samples");
    spec.validate();
    const std::size_t d = spec.dim;

    const SymEigResult eig = sym_eig(spec.intra_cov);
    std::vector<double> sigma = eig.eigenvalues;
    for (double& s : sigma) s = std::max(0.0, s);
    const Matrix w = compose_spectral(eig.basis, optimal_eigs_closed_form(sigma, lambda));

    Rng rng(seed);
    const Matrix intra = correlate_rows(balanced_standard_normals(samples, d, rng), psd_factor(spec.intra_cov));
    const Matrix inter = correlate_rows(balanced_standard_normals(samples, d, rng),
                                        psd_factor(video_mean_covariance(spec) * 2.0));
    const Matrix intra_w = matmul_nt(intra, w);
    const Matrix inter_w = matmul_nt(inter, w);

    auto mean_sq = [](const Matrix& m) {
        double s = 0.0;
        for (double v : m.values()) s += v * v;
        return s / static_cast<double>(m.rows());
    };
    DeltaEmpirical out;
    out.samples = intra.rows();
    out.before = mean_sq(inter) - mean_sq(intra);
    out.after = mean_sq(inter_w) - mean_sq(intra_w);
    out.delta = out.after - out.before;
    return out;
}

MlpProductReport mlp_product_spectrum_check(std::span<const double> sigma, double lambda, double scale,
                                            std::uint64_t seed) {
    check_lambda(lambda);
    check_sigma(sigma);
    if (!(scale > 0.0) || !std::isfinite(scale)) throw ParameterError("scale must be a finite positive number");
    const std::size_t d = sigma.size();

    MlpProductReport rep;
    rep.closed_form = optimal_eigs_closed_form(sigma, lambda);
    rep.mu1.assign(d, scale);
    rep.mu2.assign(d, 1.0);
    rep.product.resize(d);
    constexpr std::size_t kMaxSweeps = 1000;
    for (std::size_t i = 0; i < d; ++i) {
        // Minimizing over q = μ₂² for fixed μ₁ gives μ₁²q = max(0, 1 − σ/2λ); symmetric for μ₁.
        const double target = std::max(0.0, 1.0 - sigma[i] / (2.0 * lambda));
        double a = rep.mu1[i];
        double b = rep.mu2[i];
        std::size_t sweep = 0;
        for (;; ++sweep) {
            if (sweep >= kMaxSweeps) throw NumericError("MLP product descent did not converge");
            const double b_new = std::sqrt(target / (a * a));
            const double a_new = b_new > 0.0 ? std::sqrt(target / (b_new * b_new)) : a;
            const bool done = std::abs(a_new - a) <= 1e-15 * std::max(1.0, a) &&
                              std::abs(b_new - b) <= 1e-15 * std::max(1.0, b);
            a = a_new;
            b = b_new;
            if (done) break;
        }
        rep.mu1[i] = a;
        rep.mu2[i] = b;
        rep.product[i] = a * b;
        rep.iterations += sweep + 1;
        rep.max_product_error = std::max(rep.max_product_error, std::abs(rep.product[i] - rep.closed_form[i]));
    }

    // Realize the factors as commuting matrices and measure how far tanh is from linear.
    Rng rng(seed);
    const Matrix basis = random_orthogonal(d, rng);
    const Matrix w1 = compose_spectral(basis, rep.mu1);
    const Matrix w2 = compose_spectral(basis, rep.mu2);
    const Matrix z = standard_normals(256, d, rng);
    const Matrix hidden = matmul_nt(z, w1);
    Matrix squashed = hidden;
    for (double& v : squashed.values()) v = std::tanh(v);
    const Matrix linear = matmul_nt(hidden, w2);
    const Matrix actual = matmul_nt(squashed, w2);
    const double denom = frobenius_norm(linear);
    rep.tanh_linearity_deviation = denom > 0.0 ? frobenius_norm(actual - linear) / denom : 0.0;
    return rep;
}

SpectralReport verify_theory(const TheoryRequest& req) {
    check_lambda(req.lambda);
    check_sigma(req.sigma);
    const std::size_t d = req.sigma.size();

    SpectralReport rep;
    rep.sigma = req.sigma;
    rep.lambda = req.lambda;
    rep.mode = req.mode;
    rep.mu_star = optimal_eigs_closed_form(req.sigma, req.lambda);

    SurrogateOptions opt;
    opt.seed = req.seed;
    const SurrogateFit fit = optimize_surrogate_linear(req.sigma, req.lambda, req.mode, opt);
    rep.mu_hat = fit.mu_hat;
    rep.iterations = fit.iterations;
    rep.residual = fit.residual;
    for (std::size_t i = 0; i < d; ++i) rep.max_abs_error = std::max(rep.max_abs_error, std::abs(rep.mu_hat[i] - rep.mu_star[i]));

    const DeltaClosedForm closed = delta_margin_closed_form(req.sigma, req.lambda);
    rep.delta_closed = closed.delta;
    rep.positivity_condition = closed.positivity_condition;

    Rng rng(req.seed);
    const SyntheticModelSpec spec = theorem2_model_spec(req.sigma, random_orthogonal(d, rng), 7, 7, 8, 200, req.seed);
    rep.tau_bar = sym_eig(video_mean_covariance(spec) * 2.0).eigenvalues;
    const DeltaEmpirical emp = delta_margin_empirical(spec, req.lambda, req.samples, req.seed + 1);
    rep.delta_empirical = emp.delta;
    rep.samples = emp.samples;
    return rep;
}

}  // namespace cosettle
