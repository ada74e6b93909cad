#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>

#include "cosettle/error.hpp"
#include "cosettle/projection.hpp"

using namespace cosettle;
namespace fs = std::filesystem;

namespace {

ProjectionParams random_params(ProjectionKind kind, std::size_t d, Rng& rng) {
    ProjectionParams p = init_projection(kind, d, rng, 0.3);
    std::normal_distribution<double> n(0.0, 0.2);
    for (double& g : p.ln_gain) g += n(rng);
    for (double& b : p.ln_bias) b = n(rng);
    return p;
}

double weighted_output(const ProjectionParams& p, const EmbeddingGrid& z, const Matrix& upstream) {
    const Matrix out = project_forward(p, z).grid.values;
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out.values()[i] * upstream.values()[i];
    return s;
}

double rel_err(double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-3});
}

double fd(const std::function<double(double)>& f, double x, double h) {
    return (8.0 * (f(x + h) - f(x - h)) - (f(x + 2 * h) - f(x - 2 * h))) / (12.0 * h);
}

fs::path temp_path(const std::string& name) {
    return fs::temp_directory_path() / ("cosettle_test_proj_" + name);
}

}  // namespace

TEST_CASE("identity head with eps 1e-12 leaves a standardized token unchanged") {
    ProjectionParams p = identity_projection(ProjectionKind::linear, 4);
    p.eps_ln = 1e-12;
    // mean 0, population variance 1
    EmbeddingGrid z(1, 1, Matrix{{1.0, -1.0, 1.0, -1.0}});
    const Matrix out = project_forward(p, z).grid.values;
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(out(0, j) - z.values(0, j)) <= 1e-5);
}

TEST_CASE("LayerNorm pre-affine statistics") {
    Rng rng(1);
    for (ProjectionKind kind : {ProjectionKind::linear, ProjectionKind::mlp}) {
        for (int trial = 0; trial < 20; ++trial) {
            ProjectionParams p = random_params(kind, 7, rng);
            p.eps_ln = 1e-12;
            EmbeddingGrid z(2, 3, standard_normals(6, 7, rng) * 3.0);
            const ForwardCache cache = project_forward(p, z).cache;
            for (std::size_t i = 0; i < cache.normalized.rows(); ++i) {
                double mean = 0.0, var = 0.0;
                for (double v : cache.normalized.row(i)) mean += v / 7.0;
                for (double v : cache.normalized.row(i)) var += (v - mean) * (v - mean) / 7.0;
                CHECK(std::abs(mean) <= 1e-10);
                CHECK(std::abs(var - 1.0) <= 1e-8);
            }
        }
    }
}

TEST_CASE("constant pre-norm token normalizes to zeros") {
    ProjectionParams p = identity_projection(ProjectionKind::linear, 5);
    EmbeddingGrid z(1, 2, Matrix{{2.5, 2.5, 2.5, 2.5, 2.5}, {0.0, 0.0, 0.0, 0.0, 0.0}});
    p.ln_bias = {0.1, 0.2, 0.3, 0.4, 0.5};
    const ProjectionOutput out = project_forward(p, z);
    for (double v : out.cache.normalized.values()) CHECK(v == 0.0);
    for (std::size_t j = 0; j < 5; ++j) CHECK(out.grid.values(0, j) == doctest::Approx(p.ln_bias[j]));
}

TEST_CASE("zero upstream gives zero gradients") {
    Rng rng(2);
    for (ProjectionKind kind : {ProjectionKind::linear, ProjectionKind::mlp}) {
        const ProjectionParams p = random_params(kind, 5, rng);
        EmbeddingGrid z(2, 2, standard_normals(4, 5, rng));
        const ProjectionOutput out = project_forward(p, z);
        const GradBundle g = project_backward(p, out.cache, Matrix(4, 5));
        for (auto t : g.tensors())
            for (double v : t) CHECK(v == 0.0);
        for (double v : g.input.values()) CHECK(v == 0.0);
    }
}

TEST_CASE("bypassed head has the linear adjoint as input gradient") {
    Rng rng(3);
    ProjectionParams p = identity_projection(ProjectionKind::linear, 4);
    p.weight1 = (Matrix::identity(4) + standard_normals(4, 4, rng) * 0.3) * 2.5;
    p.bypass_layer_norm = true;
    const Matrix tokens = standard_normals(3, 4, rng);
    EmbeddingGrid z(1, 3, tokens);
    const ProjectionOutput out = project_forward(p, z);
    CHECK(frobenius_norm(out.grid.values - matmul_nt(tokens, p.weight1)) <= 1e-12);
    const Matrix up = standard_normals(3, 4, rng);
    const GradBundle g = project_backward(p, out.cache, up);
    // Row form of Wᵀ·u for each token.
    CHECK(frobenius_norm(g.input - matmul(up, p.weight1)) <= 1e-12);
}

TEST_CASE("parameter and input gradients match finite differences (d=6, N=4)") {
    Rng rng(4);
    for (ProjectionKind kind : {ProjectionKind::linear, ProjectionKind::mlp}) {
        for (int trial = 0; trial < 10; ++trial) {
            ProjectionParams p = random_params(kind, 6, rng);
            EmbeddingGrid z(2, 2, standard_normals(4, 6, rng));
            const Matrix up = standard_normals(4, 6, rng);
            const ProjectionOutput out = project_forward(p, z);
            GradBundle g = project_backward(p, out.cache, up);
            auto tensors = p.tensors();
            auto grads = g.tensors();
            REQUIRE(tensors.size() == grads.size());
            double worst = 0.0;
            for (std::size_t t = 0; t < tensors.size(); ++t) {
                for (std::size_t i = 0; i < tensors[t].size(); ++i) {
                    const double x0 = tensors[t][i];
                    const double num = fd(
                        [&](double x) {
                            tensors[t][i] = x;
                            return weighted_output(p, z, up);
                        },
                        x0, 1e-5);
                    tensors[t][i] = x0;
                    worst = std::max(worst, rel_err(grads[t][i], num));
                }
            }
            for (std::size_t i = 0; i < z.values.size(); ++i) {
                const double x0 = z.values.values()[i];
                const double num = fd(
                    [&](double x) {
                        z.values.values()[i] = x;
                        return weighted_output(p, z, up);
                    },
                    x0, 1e-5);
                z.values.values()[i] = x0;
                worst = std::max(worst, rel_err(g.input.values()[i], num));
            }
            CHECK(worst <= 1e-6);
        }
    }
}

TEST_CASE("stale cache is a contract error") {
    Rng rng(5);
    ProjectionParams p = random_params(ProjectionKind::linear, 4, rng);
    EmbeddingGrid z(1, 2, standard_normals(2, 4, rng));
    const ProjectionOutput out = project_forward(p, z);
    p.weight1(0, 0) += 1e-3;
    CHECK_THROWS_AS(project_backward(p, out.cache, Matrix(2, 4)), ContractError);
}

TEST_CASE("shape mismatch is a shape error") {
    Rng rng(6);
    const ProjectionParams p = random_params(ProjectionKind::linear, 4, rng);
    CHECK_THROWS_AS(project_forward(p, EmbeddingGrid(1, 2, 5)), ShapeError);
}

TEST_CASE("jacobian matches finite differences of a single token") {
    Rng rng(7);
    for (ProjectionKind kind : {ProjectionKind::linear, ProjectionKind::mlp}) {
        const ProjectionParams p = random_params(kind, 5, rng);
        std::vector<double> z(5);
        for (double& v : z) v = std::normal_distribution<double>(0.0, 1.0)(rng);
        const Matrix j = projection_jacobian(p, z);
        for (std::size_t c = 0; c < 5; ++c) {
            for (std::size_t r = 0; r < 5; ++r) {
                const double num = fd(
                    [&](double x) {
                        std::vector<double> zz = z;
                        zz[c] = x;
                        return project_tokens(p, Matrix(1, 5, zz))(0, r);
                    },
                    z[c], 1e-5);
                CHECK(rel_err(j(r, c), num) <= 1e-7);
            }
        }
    }
}

TEST_CASE("MLP head approaches W2·W1·z as W1 shrinks") {
    Rng rng(8);
    ProjectionParams p = init_projection(ProjectionKind::mlp, 6, rng, 0.3);
    p.bypass_layer_norm = true;
    const Matrix w1 = p.weight1;
    const Matrix z = standard_normals(32, 6, rng);
    double previous = INFINITY;
    for (double scale : {1.0, 0.1, 0.01, 0.001}) {
        p.weight1 = w1 * scale;
        const Matrix out = project_tokens(p, z);
        const Matrix lin = matmul_nt(z, matmul(p.weight2, p.weight1));
        double worst = 0.0;
        for (std::size_t i = 0; i < z.rows(); ++i) {
            std::vector<double> diff(6), ref(6);
            for (std::size_t j = 0; j < 6; ++j) {
                diff[j] = out(i, j) - lin(i, j);
                ref[j] = lin(i, j);
            }
            worst = std::max(worst, norm2(diff) / norm2(ref));
        }
        CHECK(worst < previous);
        previous = worst;
    }
    CHECK(previous <= 1e-5);
}

TEST_CASE("initialization follows the documented rule") {
    Rng rng(9);
    const ProjectionParams p = init_projection(ProjectionKind::linear, 64, rng);
    Matrix dev = p.weight1 - Matrix::identity(64);
    double var = 0.0;
    for (double v : dev.values()) var += v * v / static_cast<double>(dev.size());
    CHECK(std::sqrt(var) == doctest::Approx(0.02).epsilon(0.05));
    for (double g : p.ln_gain) CHECK(g == 1.0);
    for (double b : p.ln_bias) CHECK(b == 0.0);
    CHECK(p.parameter_count() == 64 * 64 + 2 * 64);
    const ProjectionParams m = init_projection(ProjectionKind::mlp, 8, rng);
    CHECK(m.parameter_count() == 2 * 64 + 2 * 8);
    CHECK(m.tensors().size() == 4);
}

TEST_CASE("checkpoint round trip is bit-exact for both variants") {
    Rng rng(10);
    for (ProjectionKind kind : {ProjectionKind::linear, ProjectionKind::mlp}) {
        ProjectionParams p = random_params(kind, 5, rng);
        p.eps_ln = 3e-7;
        const fs::path path = temp_path(std::string(to_string(kind)) + ".bin");
        write_checkpoint(path, p);
        const ProjectionParams back = read_checkpoint(path);
        CHECK(back == p);
        const std::size_t expected = 4 + 4 + 1 + 4 + 8 * (p.parameter_count() + 1);
        CHECK(fs::file_size(path) == expected);
        fs::remove(path);
    }
}

TEST_CASE("corrupted checkpoints raise format errors") {
    Rng rng(11);
    const fs::path path = temp_path("corrupt.bin");
    write_checkpoint(path, random_params(ProjectionKind::linear, 3, rng));
    std::vector<char> good;
    {
        std::ifstream in(path, std::ios::binary);
        good.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    auto write = [&](const std::vector<char>& bytes) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    };
    auto offset_of = [&]() -> std::uint64_t {
        try {
            read_checkpoint(path);
        } catch (const FormatError& e) {
            return e.offset();
        }
        FAIL("expected FormatError");
        return 0;
    };

    auto bad_magic = good;
    bad_magic[1] = 'Q';
    write(bad_magic);
    CHECK(offset_of() == 0);

    auto bad_variant = good;
    bad_variant[8] = 7;
    write(bad_variant);
    CHECK(offset_of() == 8);

    auto truncated = good;
    truncated.resize(good.size() - 1);
    write(truncated);
    CHECK_THROWS_AS(read_checkpoint(path), FormatError);

    write(std::vector<char>(good.begin(), good.begin() + 6));
    CHECK(offset_of() == 4);
    fs::remove(path);
}

TEST_CASE("projection kind names") {
    CHECK(std::string(to_string(ProjectionKind::linear)) == "linear");
    CHECK(projection_kind_from_string("mlp") == ProjectionKind::mlp);
    CHECK_THROWS_AS(projection_kind_from_string("conv"), ParameterError);
}
