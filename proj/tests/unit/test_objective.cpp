#include <doctest.h>

#include <cmath>
#include <functional>

#include "cosettle/error.hpp"
#include "cosettle/objective.hpp"

using namespace cosettle;

namespace {

double rel_err(double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-3});
}

double fd(const std::function<double(double)>& f, double x, double h = 1e-5) {
    return (8.0 * (f(x + h) - f(x - h)) - (f(x + 2 * h) - f(x - 2 * h))) / (12.0 * h);
}

/// Worst relative error of `grad` against finite differences of f over the entries of x.
double check_matrix_gradient(Matrix& x, const Matrix& grad, const std::function<double()>& f) {
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double x0 = x.values()[i];
        const double num = fd(
            [&](double v) {
                x.values()[i] = v;
                return f();
            },
            x0);
        x.values()[i] = x0;
        worst = std::max(worst, rel_err(grad.values()[i], num));
    }
    return worst;
}

Matrix row_stochastic(std::size_t n, Rng& rng) {
    return softmax_rows(standard_normals(n, n, rng), 1.0);
}

}  // namespace

TEST_CASE("correlation of orthonormal self-grids tends to identity") {
    const Matrix e = Matrix::identity(4);
    const Matrix a = correlation_matrix(e, e, 0.01);
    CHECK(frobenius_norm(a - Matrix::identity(4)) <= 1e-12);
}

TEST_CASE("correlation of identical patches is uniform") {
    const Matrix p{{0.3, -1.0, 2.0}, {0.3, -1.0, 2.0}};
    const Matrix a = correlation_matrix(p, p, 0.03);
    for (double v : a.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("correlation rows are stochastic and shapes are checked") {
    Rng rng(1);
    const Matrix a = correlation_matrix(standard_normals(4, 8, rng), standard_normals(4, 8, rng), 0.03);
    for (std::size_t r = 0; r < 4; ++r) {
        double s = 0.0;
        for (double v : a.row(r)) s += v;
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
    CHECK_THROWS_AS(correlation_matrix(Matrix(4, 8), Matrix(4, 7), 0.03), ShapeError);
    CHECK_THROWS_AS(correlation_matrix(EmbeddingGrid(2, 2, 3), EmbeddingGrid(1, 3, 3), 0.03), ShapeError);
}

TEST_CASE("cycle loss hand values") {
    const CorrelationPair perfect{Matrix::identity(3), Matrix::identity(3)};
    CHECK(cycle_loss(perfect).value == 0.0);

    const Matrix half{{0.5, 0.5}, {0.5, 0.5}};
    const CycleLossResult r = cycle_loss({half, Matrix{{0.9, 0.1}, {0.1, 0.9}}});
    CHECK(r.value == doctest::Approx(0.6931471805599453).epsilon(1e-14));

    const CycleLossResult summed = cycle_loss({half, half}, {.sum_over_patches = true});
    CHECK(summed.value == doctest::Approx(2.0 * 0.6931471805599453).epsilon(1e-14));
}

TEST_CASE("cycle loss clamps zero diagonals and counts them") {
    const Matrix swap{{0.0, 1.0}, {1.0, 0.0}};
    const CycleLossResult r = cycle_loss({Matrix::identity(2), swap});
    CHECK(r.clamped == 2);
    CHECK(r.value == doctest::Approx(-std::log(kLogClampFloor)));
    CHECK(std::isfinite(r.value));
}

TEST_CASE("cycle loss is nonnegative on random stochastic pairs") {
    Rng rng(2);
    for (int i = 0; i < 100; ++i) CHECK(cycle_loss({row_stochastic(5, rng), row_stochastic(5, rng)}).value >= 0.0);
}

TEST_CASE("cycle loss gradients through both softmaxes match finite differences (N=5, d=7)") {
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        Matrix pf = standard_normals(5, 7, rng) * 0.4;
        Matrix pm = standard_normals(5, 7, rng) * 0.4;
        Matrix pb = standard_normals(5, 7, rng) * 0.4;
        const double tau = 0.5;
        const CycleGridResult r = cycle_loss_on_grids(pf, pm, pb, tau);
        auto f = [&]() { return cycle_loss_on_grids(pf, pm, pb, tau).value; };
        CHECK(check_matrix_gradient(pf, r.grad_forward, f) <= 1e-6);
        CHECK(check_matrix_gradient(pm, r.grad_intermediate, f) <= 1e-6);
        CHECK(check_matrix_gradient(pb, r.grad_backward, f) <= 1e-6);
    }
}

TEST_CASE("KL regularizer hand values") {
    // Logits whose softmax is [0.9, 0.1] and [0.5, 0.5].
    const Matrix p{{std::log(0.9), std::log(0.1)}};
    const Matrix z{{0.0, 0.0}};
    const KlGridResult r = kl_divergence_grid(p, z);
    CHECK(r.value == doctest::Approx(0.9 * std::log(1.8) + 0.1 * std::log(0.2)).epsilon(1e-13));
    CHECK(r.value == doctest::Approx(0.3681).epsilon(1e-3));

    Rng rng(4);
    const Matrix same = standard_normals(6, 5, rng);
    CHECK(kl_divergence_grid(same, same).value == doctest::Approx(0.0).epsilon(1e-15));
    // Softmax is shift invariant per token, so shifted logits are the same distribution.
    Matrix shifted = same;
    for (std::size_t i = 0; i < shifted.rows(); ++i)
        for (double& v : shifted.row(i)) v += 2.0 * static_cast<double>(i);
    CHECK(std::abs(kl_divergence_grid(shifted, same).value) <= 1e-12);
}

TEST_CASE("KL regularizer averages tokens then pairs") {
    Rng rng(5);
    std::vector<std::pair<EmbeddingGrid, EmbeddingGrid>> s;
    double expected = 0.0;
    for (int k = 0; k < 3; ++k) {
        EmbeddingGrid p(2, 2, standard_normals(4, 6, rng));
        EmbeddingGrid z(2, 2, standard_normals(4, 6, rng));
        expected += kl_divergence_grid(p.values, z.values).value / 3.0;
        s.emplace_back(p, z);
    }
    const KlRegularizerResult r = kl_regularizer(s);
    CHECK(r.value == doctest::Approx(expected).epsilon(1e-14));
    CHECK(r.value > 0.0);
    REQUIRE(r.grads.size() == 3);
    CHECK_THROWS_AS(kl_regularizer({}), ParameterError);
    CHECK_THROWS_AS(kl_regularizer({{EmbeddingGrid(1, 2, 3), EmbeddingGrid(1, 2, 4)}}), ShapeError);
}

TEST_CASE("KL gradient matches finite differences") {
    Rng rng(6);
    Matrix p = standard_normals(5, 6, rng);
    const Matrix z = standard_normals(5, 6, rng);
    const KlGridResult r = kl_divergence_grid(p, z);
    CHECK(check_matrix_gradient(p, r.grad, [&]() { return kl_divergence_grid(p, z).value; }) <= 1e-6);
}

TEST_CASE("total loss composition") {
    Rng rng(7);
    Matrix pf = standard_normals(4, 6, rng), pm = standard_normals(4, 6, rng), pb = standard_normals(4, 6, rng);
    const Matrix zf = standard_normals(4, 6, rng), zm = standard_normals(4, 6, rng), zb = standard_normals(4, 6, rng);
    const double tau = 0.4;

    SUBCASE("lambda zero is the cycle loss") {
        const TotalLossResult r = total_loss({pf, pm, pb, zf, zm, zb}, 0.0, tau);
        CHECK(r.report.total == r.report.cyc);
        CHECK(r.report.cyc == cycle_loss_on_grids(pf, pm, pb, tau).value);
    }
    SUBCASE("total equals cyc + lambda * reg") {
        for (double lambda : {0.5, 1.0, 3.0}) {
            const TotalLossResult r = total_loss({pf, pm, pb, zf, zm, zb}, lambda, tau);
            CHECK(std::abs(r.report.total - (r.report.cyc + lambda * r.report.reg)) <= 1e-12);
            CHECK(r.report.lambda == lambda);
            const KlRegularizerResult kl =
                kl_regularizer({{EmbeddingGrid(1, 4, pf), EmbeddingGrid(1, 4, zf)},
                                {EmbeddingGrid(1, 4, pm), EmbeddingGrid(1, 4, zm)},
                                {EmbeddingGrid(1, 4, pb), EmbeddingGrid(1, 4, zb)}});
            CHECK(r.report.reg == doctest::Approx(kl.value).epsilon(1e-14));
        }
    }
    SUBCASE("perfect cycle with p == z has zero total") {
        const Matrix e = Matrix::identity(4) * 10.0;
        const TotalLossResult r = total_loss({e, e, e, e, e, e}, 1.0, 0.03);
        CHECK(r.report.total == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(std::abs(r.report.total) <= 1e-12);
    }
    SUBCASE("gradients match finite differences") {
        const double lambda = 0.8;
        const TotalLossResult r = total_loss({pf, pm, pb, zf, zm, zb}, lambda, tau);
        auto f = [&]() { return total_loss({pf, pm, pb, zf, zm, zb}, lambda, tau).report.total; };
        CHECK(check_matrix_gradient(pf, r.grad_forward, f) <= 1e-6);
        CHECK(check_matrix_gradient(pm, r.grad_intermediate, f) <= 1e-6);
        CHECK(check_matrix_gradient(pb, r.grad_backward, f) <= 1e-6);
    }
    CHECK_THROWS_AS(total_loss({pf, pm, pb, zf, zm, zb}, -1.0, tau), ParameterError);
}

TEST_CASE("M_cyc hand values and trace identity") {
    ProjectionParams g = identity_projection(ProjectionKind::linear, 2);
    g.bypass_layer_norm = true;
    const Matrix z{{0.3, -0.2}};
    CHECK(surrogate_m_cyc(g, z, z) == 0.0);

    g.weight1 = Matrix::identity(2) * 2.0;
    CHECK(surrogate_m_cyc(g, Matrix{{1.0, 0.0}}, Matrix{{0.0, 0.0}}) == doctest::Approx(2.0));

    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        ProjectionParams w = identity_projection(ProjectionKind::linear, 5);
        w.bypass_layer_norm = true;
        w.weight1 = standard_normals(5, 5, rng);
        const Matrix z1 = standard_normals(200, 5, rng), z2 = standard_normals(200, 5, rng);
        const Matrix sigma_hat = covariance_of_differences(z1, z2);
        const double trace_form = 0.5 * trace(matmul(matmul_tn(w.weight1, w.weight1), sigma_hat));
        CHECK(std::abs(surrogate_m_cyc(w, z1, z2) - trace_form) <= 1e-10 * std::max(1.0, trace_form));
    }
    CHECK_THROWS_AS(surrogate_m_cyc(g, Matrix(0, 2), Matrix(0, 2)), ParameterError);
}

TEST_CASE("M_reg hand values") {
    Rng rng(9);
    ProjectionParams g = identity_projection(ProjectionKind::linear, 3);
    g.bypass_layer_norm = true;
    g.weight1 = random_orthogonal(3, rng);
    CHECK(surrogate_m_reg(g) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(std::abs(surrogate_m_reg(g)) <= 1e-14);
    g.weight1 = Matrix::identity(3) * 2.0;
    CHECK(surrogate_m_reg(g) == doctest::Approx(13.5));

    ProjectionParams mlp = init_projection(ProjectionKind::mlp, 6, rng, 0.1);
    mlp.bypass_layer_norm = true;
    const Matrix points = standard_normals(20, 6, rng);
    const Matrix w1 = mlp.weight1;
    mlp.weight1 = w1 * 1e-9;
    CHECK(surrogate_m_reg(mlp, points) == doctest::Approx(3.0).epsilon(1e-6));
    mlp.weight1 = w1;
    CHECK_THROWS_AS(surrogate_m_reg(mlp), ParameterError);
}

TEST_CASE("M_reg for the bare linear head equals the Jacobian average form") {
    Rng rng(10);
    ProjectionParams g = identity_projection(ProjectionKind::linear, 4);
    g.bypass_layer_norm = true;
    g.weight1 = Matrix::identity(4) + standard_normals(4, 4, rng) * 0.3;
    Matrix gram = matmul_nt(g.weight1, g.weight1) - Matrix::identity(4);
    const double direct = 0.5 * frobenius_norm(gram) * frobenius_norm(gram);
    CHECK(surrogate_m_reg(g) == doctest::Approx(direct).epsilon(1e-14));
    CHECK(surrogate_m_reg(g, standard_normals(7, 4, rng)) == doctest::Approx(direct).epsilon(1e-12));
}
