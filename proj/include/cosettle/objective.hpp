#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "cosettle/data.hpp"
#include "cosettle/matrix.hpp"
#include "cosettle/projection.hpp"

namespace cosettle {

/// Forward A(t1→t2) and backward Ã(t2→t1) transition matrices, both row-stochastic.
struct CorrelationPair {
    Matrix forward;
    Matrix backward;
};

inline constexpr double kLogClampFloor = 1e-30;

struct CycleLossOptions {
    /// Sum the per-patch terms instead of averaging them.
    bool sum_over_patches = false;
};

/// softmax_rows(a · bᵀ, temperature)
Matrix correlation_matrix(const Matrix& a, const Matrix& b, double temperature);
Matrix correlation_matrix(const EmbeddingGrid& a, const EmbeddingGrid& b, double temperature);

struct CycleLossResult {
    double value = 0.0;
    Matrix grad_forward;   // dL/dA_forward
    Matrix grad_backward;  // dL/dA_backward
    std::size_t clamped = 0;
};

/// −(1/N)·Σ_i log((A_fwd·A_bwd)_ii), log arguments clamped at kLogClampFloor.
CycleLossResult cycle_loss(const CorrelationPair& pair, CycleLossOptions options = {});

struct CycleGridResult {
    double value = 0.0;
    CorrelationPair pair;
    Matrix grad_forward;
    Matrix grad_intermediate;
    Matrix grad_backward;
    std::size_t clamped = 0;
};

/// Cycle loss of the palindrome p_f → p_mid → p_b with gradients w.r.t. the three grids.
CycleGridResult cycle_loss_on_grids(const Matrix& p_forward, const Matrix& p_intermediate,
                                    const Matrix& p_backward, double temperature,
                                    CycleLossOptions options = {});

struct KlGridResult {
    double value = 0.0;
    Matrix grad;  // dL/dp
};

/// Token-averaged KL(softmax(p_i) ‖ softmax(z_i)) with softmax over features.
KlGridResult kl_divergence_grid(const Matrix& p, const Matrix& z);

struct KlRegularizerResult {
    double value = 0.0;
    std::vector<Matrix> grads;  // one per pair, dL/dp
};

/// Mean over pairs of kl_divergence_grid(p, z). z receives no gradient.
KlRegularizerResult kl_regularizer(const std::vector<std::pair<EmbeddingGrid, EmbeddingGrid>>& pairs);

struct LossReport {
    double cyc = 0.0;
    double reg = 0.0;
    double total = 0.0;
    double lambda = 0.0;
    std::size_t clamped = 0;
};

/// Projected palindrome together with the projection inputs it came from.
struct PalindromeView {
    const Matrix& p_forward;
    const Matrix& p_intermediate;
    const Matrix& p_backward;
    const Matrix& z_forward;
    const Matrix& z_intermediate;
    const Matrix& z_backward;
};

struct TotalLossResult {
    LossReport report;
    CorrelationPair pair;
    Matrix grad_forward;
    Matrix grad_intermediate;
    Matrix grad_backward;
};

/// L_total = L_cyc + λ·L_reg over S = {(p_f, z_f), (p_mid, z_mid), (p_b, z_b)}.
TotalLossResult total_loss(const PalindromeView& sample, double lambda, double temperature,
                           CycleLossOptions options = {});

/// ½·mean_k ‖g(z1_k) − g(z2_k)‖² over paired rows.
double surrogate_m_cyc(const ProjectionParams& params, const Matrix& z1, const Matrix& z2);

/// ½·‖W·Wᵀ − I‖²_F for a bare linear head; otherwise the mean over `points`
/// of ½·‖J(z)·J(z)ᵀ − I‖²_F with the analytic Jacobian.
double surrogate_m_reg(const ProjectionParams& params, const Matrix& points = {});

}  // namespace cosettle
