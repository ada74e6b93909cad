#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cosettle/data.hpp"
#include "cosettle/matrix.hpp"

namespace cosettle {

/// μ*_i = √(max(0, 1 − σ_i/2λ)). Throws ParameterError for λ ≤ 0 or negative σ.
std::vector<double> optimal_eigs_closed_form(std::span<const double> sigma, double lambda);

/// h(μ) = ½μ²σ + (λ/2)(μ⁴ − 2μ²)
double per_eig_objective(double mu, double sigma, double lambda);

/// h'(μ) = μσ + 2λμ³ − 2λμ
double per_eig_gradient(double mu, double sigma, double lambda);

struct GradientTerms {
    double consistency = 0.0;   // μσ
    double separability = 0.0;  // 2λμ³ − 2λμ
};

GradientTerms lemma1_gradient_terms(double mu, double sigma, double lambda);

enum class SurrogateMode { eigenbasis, full_matrix };

const char* to_string(SurrogateMode mode);
SurrogateMode surrogate_mode_from_string(const std::string& name);

struct SurrogateOptions {
    std::uint64_t seed = 0;
    // eigenbasis mode
    double mu0 = 0.5;
    double gradient_tolerance = 1e-10;
    std::size_t max_iterations = 10000;
    // full-matrix mode
    std::size_t samples = 8192;  // Monte-Carlo pairs for M_cyc
    std::size_t restarts = 10;
    std::size_t screening_iterations = 200;  // gradient steps per restart
    std::size_t newton_iterations = 200;     // refinement of the best restart
    double descent_tolerance = 1e-10;        // Frobenius norm of the gradient
};

struct SurrogateFit {
    std::vector<double> mu_hat;  // aligned with the input sigma
    std::size_t iterations = 0;  // total over coordinates / the refined restart
    double residual = 0.0;       // max |h'| (eigenbasis) or final gradient norm (full matrix)
    double objective = 0.0;      // Σ_i h(μ̂_i) (eigenbasis) or M_cyc + λ·M_reg (full matrix)
};

/// Minimizes the linear surrogate M = M_cyc + λ·M_reg.
///
/// eigenbasis: per-coordinate damped Newton on h from μ₀ until |h'(μ)| ≤ tolerance.
/// full_matrix: Σ = U·diag(σ)·Uᵀ with a seeded random orthogonal U; descends on a
/// symmetric W against M_cyc estimated from sampled difference vectors and the exact
/// M_reg. Each of `restarts` random starts takes a few gradient steps; the best one is
/// refined with Newton steps on |Hessian| (saddle-free) and a backtracking line search. Eigenvalue magnitudes of the
/// result are sorted descending and paired with σ sorted ascending (μ* is decreasing in σ).
/// Throws NumericError with the residual when the iteration cap is hit.
SurrogateFit optimize_surrogate_linear(std::span<const double> sigma, double lambda, SurrogateMode mode,
                                       const SurrogateOptions& options = {});

struct DeltaClosedForm {
    double delta = 0.0;
    double tau_bar = 0.0;                // mean of σ
    bool positivity_condition = false;   // λ < τ̄/2
};

/// Δ = Σ_{σ_i ≤ 2λ} (τ̄ − σ_i)(1 − σ_i/2λ) with τ̄ = mean(σ).
DeltaClosedForm delta_margin_closed_form(std::span<const double> sigma, double lambda);

/// Model spec whose same-patch difference covariance is U·diag(σ)·Uᵀ and whose
/// video-mean difference covariance 2·video_mean_covariance(spec) equals τ̄·I.
/// Throws ParameterError when N·T is too small for inter_cov to stay PSD.
SyntheticModelSpec theorem2_model_spec(std::span<const double> sigma, const Matrix& basis, std::size_t n_h,
                                       std::size_t n_w, std::size_t frames, std::size_t videos, std::uint64_t seed);

struct DeltaEmpirical {
    double delta = 0.0;
    double before = 0.0;  // E‖Δinter‖² − E‖Δintra‖² on raw differences
    double after = 0.0;   // same after applying W*
    std::size_t samples = 0;
};

/// Monte-Carlo margin change under W* = U·diag(μ*)·Uᵀ. Intra differences are drawn
/// from N(0, intra_cov), inter differences of video means from N(0, 2·video_mean_covariance),
/// both with the balanced Gaussian design. Unnormalized squared distances, γ = 1.
/// Throws ParameterError for fewer than 1000 samples.
DeltaEmpirical delta_margin_empirical(const SyntheticModelSpec& spec, double lambda, std::size_t samples,
                                      std::uint64_t seed);

struct MlpProductReport {
    std::vector<double> mu1;
    std::vector<double> mu2;
    std::vector<double> product;
    std::vector<double> closed_form;
    double max_product_error = 0.0;
    /// max ‖W2·tanh(W1·z) − W2·W1·z‖ / ‖W2·W1·z‖ over probe tokens z ~ N(0, I).
    double tanh_linearity_deviation = 0.0;
    std::size_t iterations = 0;
};

/// Block-coordinate minimization of ½μ₁²μ₂²σ + (λ/2)(μ₁²μ₂² − 1)² per coordinate,
/// starting from μ₁ = scale, μ₂ = 1. Only the product μ₁μ₂ is identified.
/// Throws ParameterError if scale ≤ 0 and NumericError on non-convergence.
MlpProductReport mlp_product_spectrum_check(std::span<const double> sigma, double lambda, double scale,
                                            std::uint64_t seed = 0);

struct SpectralReport {
    std::vector<double> sigma;
    std::vector<double> tau_bar;
    double lambda = 0.0;
    std::vector<double> mu_star;
    std::vector<double> mu_hat;
    double delta_closed = 0.0;
    double delta_empirical = 0.0;
    bool positivity_condition = false;
    SurrogateMode mode = SurrogateMode::eigenbasis;
    std::size_t iterations = 0;
    double residual = 0.0;
    double max_abs_error = 0.0;
    std::size_t samples = 0;
};

struct TheoryRequest {
    std::vector<double> sigma;
    double lambda = 1.0;
    SurrogateMode mode = SurrogateMode::eigenbasis;
    std::size_t samples = 100000;
    std::uint64_t seed = 0;
};

/// Runs the closed forms, the surrogate optimizer and the Monte-Carlo margin oracle.
SpectralReport verify_theory(const TheoryRequest& request);

}  // namespace cosettle
