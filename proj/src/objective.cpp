#include "cosettle/objective.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cosettle/error.hpp"
#include "cosettle/numerics.hpp"

namespace cosettle {

Matrix correlation_matrix(const Matrix& a, const Matrix& b, double temperature) {
    require_same_shape(a, b, "correlation_matrix");
    return softmax_rows(matmul_nt(a, b), temperature);
}

Matrix correlation_matrix(const EmbeddingGrid& a, const EmbeddingGrid& b, double temperature) {
    return correlation_matrix(a.values, b.values, temperature);
}

CycleLossResult cycle_loss(const CorrelationPair& pair, CycleLossOptions options) {
    require_same_shape(pair.forward, pair.backward, "cycle_loss");
    if (!pair.forward.is_square()) throw ShapeError("cycle_loss: correlation matrices must be N×N");
    const std::size_t n = pair.forward.rows();
    const double weight = options.sum_over_patches ? 1.0 : 1.0 / static_cast<double>(n);

    CycleLossResult result;
    result.grad_forward = Matrix(n, n);
    result.grad_backward = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        // (A·B)_ii = Σ_k A_ik B_ki
        double diag = 0.0;
        for (std::size_t k = 0; k < n; ++k) diag += pair.forward(i, k) * pair.backward(k, i);
        if (diag <= kLogClampFloor) {
            ++result.clamped;
            result.value -= weight * std::log(kLogClampFloor);
            continue;
        }
        result.value -= weight * std::log(diag);
        const double g = -weight / diag;
        for (std::size_t k = 0; k < n; ++k) {
            result.grad_forward(i, k) = g * pair.backward(k, i);
            result.grad_backward(k, i) = g * pair.forward(i, k);
        }
    }
    return result;
}

CycleGridResult cycle_loss_on_grids(const Matrix& p_forward, const Matrix& p_intermediate,
                                    const Matrix& p_backward, double temperature,
                                    CycleLossOptions options) {
    require_same_shape(p_forward, p_intermediate, "cycle_loss_on_grids");
    require_same_shape(p_forward, p_backward, "cycle_loss_on_grids");

    CycleGridResult out;
    out.pair.forward = correlation_matrix(p_forward, p_intermediate, temperature);
    out.pair.backward = correlation_matrix(p_intermediate, p_backward, temperature);
    CycleLossResult loss = cycle_loss(out.pair, options);
    out.value = loss.value;
    out.clamped = loss.clamped;

    const Matrix ds_fwd = softmax_rows_backward(out.pair.forward, loss.grad_forward, temperature);
    const Matrix ds_bwd = softmax_rows_backward(out.pair.backward, loss.grad_backward, temperature);
    // S_fwd = p_f · p_midᵀ, S_bwd = p_mid · p_bᵀ
    out.grad_forward = matmul(ds_fwd, p_intermediate);
    out.grad_intermediate = matmul_tn(ds_fwd, p_forward) + matmul(ds_bwd, p_backward);
    out.grad_backward = matmul_tn(ds_bwd, p_intermediate);
    return out;
}

namespace {

void log_softmax_row(std::span<const double> x, std::span<double> out) {
    const double mx = *std::max_element(x.begin(), x.end());
    double sum = 0.0;
    for (double v : x) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lse;
}

}  // namespace

KlGridResult kl_divergence_grid(const Matrix& p, const Matrix& z) {
    require_same_shape(p, z, "kl_divergence_grid");
    if (!p.all_finite() || !z.all_finite()) throw InvalidInputError("kl_divergence_grid: non-finite input");
    const std::size_t n = p.rows();
    const std::size_t d = p.cols();
    const double inv_n = 1.0 / static_cast<double>(n);

    KlGridResult out;
    out.grad = Matrix(n, d);
    std::vector<double> log_p(d);
    std::vector<double> log_z(d);
    for (std::size_t r = 0; r < n; ++r) {
        log_softmax_row(p.row(r), log_p);
        log_softmax_row(z.row(r), log_z);
        double kl = 0.0;
        for (std::size_t c = 0; c < d; ++c) kl += std::exp(log_p[c]) * (log_p[c] - log_z[c]);
        out.value += inv_n * kl;
        // d KL / d p_c = P_c · (log P_c − log Z_c − KL)
        auto g = out.grad.row(r);
        for (std::size_t c = 0; c < d; ++c) g[c] = inv_n * std::exp(log_p[c]) * (log_p[c] - log_z[c] - kl);
    }
    return out;
}

KlRegularizerResult kl_regularizer(const std::vector<std::pair<EmbeddingGrid, EmbeddingGrid>>& pairs) {
    if (pairs.empty()) throw ParameterError("kl_regularizer: empty pair set");
    KlRegularizerResult out;
    const double inv = 1.0 / static_cast<double>(pairs.size());
    for (const auto& [p, z] : pairs) {
        if (!p.same_shape(z)) throw ShapeError("kl_regularizer: projected and reference grids differ in shape");
        KlGridResult term = kl_divergence_grid(p.values, z.values);
        out.value += inv * term.value;
        out.grads.push_back(term.grad * inv);
    }
    return out;
}

TotalLossResult total_loss(const PalindromeView& s, double lambda, double temperature,
                           CycleLossOptions options) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw ParameterError("lambda must be a finite non-negative number");
    }
    CycleGridResult cyc = cycle_loss_on_grids(s.p_forward, s.p_intermediate, s.p_backward, temperature, options);

    TotalLossResult out;
    out.pair = std::move(cyc.pair);
    out.report.cyc = cyc.value;
    out.report.lambda = lambda;
    out.report.clamped = cyc.clamped;
    out.grad_forward = std::move(cyc.grad_forward);
    out.grad_intermediate = std::move(cyc.grad_intermediate);
    out.grad_backward = std::move(cyc.grad_backward);

    const KlGridResult kf = kl_divergence_grid(s.p_forward, s.z_forward);
    const KlGridResult km = kl_divergence_grid(s.p_intermediate, s.z_intermediate);
    const KlGridResult kb = kl_divergence_grid(s.p_backward, s.z_backward);
    out.report.reg = (kf.value + km.value + kb.value) / 3.0;
    out.report.total = out.report.cyc + lambda * out.report.reg;

    if (lambda != 0.0) {
        const double w = lambda / 3.0;
        out.grad_forward += kf.grad * w;
        out.grad_intermediate += km.grad * w;
        out.grad_backward += kb.grad * w;
    }
    return out;
}

double surrogate_m_cyc(const ProjectionParams& params, const Matrix& z1, const Matrix& z2) {
    require_same_shape(z1, z2, "surrogate_m_cyc");
    if (z1.rows() == 0) throw ParameterError("surrogate_m_cyc: no pairs");
    const Matrix d = project_tokens(params, z1) - project_tokens(params, z2);
    double s = 0.0;
    for (double v : d.values()) s += v * v;
    return 0.5 * s / static_cast<double>(z1.rows());
}

namespace {

double half_isometry_defect(const Matrix& jac) {
    Matrix g = matmul_nt(jac, jac);
    for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= 1.0;
    const double f = frobenius_norm(g);
    return 0.5 * f * f;
}

}  // namespace

double surrogate_m_reg(const ProjectionParams& params, const Matrix& points) {
    params.validate();
    if (params.kind == ProjectionKind::linear && params.bypass_layer_norm) {
        return half_isometry_defect(params.weight1);
    }
    if (points.rows() == 0) {
        throw ParameterError("surrogate_m_reg: a non-constant Jacobian needs evaluation points");
    }
    if (points.cols() != params.dim()) throw ShapeError("surrogate_m_reg: point dimension mismatch");
    double s = 0.0;
    for (std::size_t r = 0; r < points.rows(); ++r) s += half_isometry_defect(projection_jacobian(params, points.row(r)));
    return s / static_cast<double>(points.rows());
}

}  // namespace cosettle
