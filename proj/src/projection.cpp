#include "cosettle/projection.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "binary_io.hpp"
#include "cosettle/error.hpp"

namespace cosettle {

const char* to_string(ProjectionKind kind) {
    return kind == ProjectionKind::linear ? "linear" : "mlp";
}

ProjectionKind projection_kind_from_string(const std::string& name) {
    if (name == "linear") return ProjectionKind::linear;
    if (name == "mlp") return ProjectionKind::mlp;
    throw ParameterError("unknown projection kind '" + name + "' (expected linear or mlp)");
}

void ProjectionParams::validate() const {
    const std::size_t d = dim();
    if (d == 0 || !weight1.is_square()) throw ShapeError("projection weight must be square and non-empty");
    if (kind == ProjectionKind::mlp) {
        if (weight2.rows() != d || weight2.cols() != d) throw ShapeError("mlp weight2 must be d×d");
    } else if (!weight2.empty()) {
        throw ShapeError("linear projection must not carry weight2");
    }
    if (ln_gain.size() != d || ln_bias.size() != d) throw ShapeError("LayerNorm affine must have length d");
    if (!(eps_ln > 0.0)) throw ParameterError("eps_ln must be positive");
    for (auto t : tensors()) {
        for (double v : t)
            if (!std::isfinite(v)) throw InvalidInputError("projection parameters contain non-finite values");
    }
}

std::vector<std::span<double>> ProjectionParams::tensors() {
    std::vector<std::span<double>> out{weight1.values()};
    if (kind == ProjectionKind::mlp) out.push_back(weight2.values());
    out.emplace_back(ln_gain);
    out.emplace_back(ln_bias);
    return out;
}

std::vector<std::span<const double>> ProjectionParams::tensors() const {
    std::vector<std::span<const double>> out{weight1.values()};
    if (kind == ProjectionKind::mlp) out.push_back(weight2.values());
    out.emplace_back(ln_gain);
    out.emplace_back(ln_bias);
    return out;
}

std::size_t ProjectionParams::parameter_count() const {
    std::size_t n = 0;
    for (auto t : tensors()) n += t.size();
    return n;
}

ProjectionParams identity_projection(ProjectionKind kind, std::size_t dim) {
    ProjectionParams p;
    p.kind = kind;
    p.weight1 = Matrix::identity(dim);
    if (kind == ProjectionKind::mlp) p.weight2 = Matrix::identity(dim);
    p.ln_gain.assign(dim, 1.0);
    p.ln_bias.assign(dim, 0.0);
    return p;
}

ProjectionParams init_projection(ProjectionKind kind, std::size_t dim, Rng& rng, double init_std) {
    ProjectionParams p = identity_projection(kind, dim);
    std::normal_distribution<double> noise(0.0, init_std);
    for (double& v : p.weight1.values()) v += noise(rng);
    if (kind == ProjectionKind::mlp)
        for (double& v : p.weight2.values()) v += noise(rng);
    return p;
}

GradBundle GradBundle::zeros_like(const ProjectionParams& params) {
    GradBundle g;
    g.kind = params.kind;
    g.weight1 = Matrix(params.dim(), params.dim());
    if (params.kind == ProjectionKind::mlp) g.weight2 = Matrix(params.dim(), params.dim());
    g.ln_gain.assign(params.dim(), 0.0);
    g.ln_bias.assign(params.dim(), 0.0);
    return g;
}

std::vector<std::span<double>> GradBundle::tensors() {
    std::vector<std::span<double>> out{weight1.values()};
    if (kind == ProjectionKind::mlp) out.push_back(weight2.values());
    out.emplace_back(ln_gain);
    out.emplace_back(ln_bias);
    return out;
}

std::vector<std::span<const double>> GradBundle::tensors() const {
    std::vector<std::span<const double>> out{weight1.values()};
    if (kind == ProjectionKind::mlp) out.push_back(weight2.values());
    out.emplace_back(ln_gain);
    out.emplace_back(ln_bias);
    return out;
}

GradBundle& GradBundle::accumulate_params(const GradBundle& other) {
    if (other.kind != kind) throw ContractError("accumulating gradients of different projection kinds");
    auto dst = tensors();
    auto src = other.tensors();
    for (std::size_t t = 0; t < dst.size(); ++t) {
        if (dst[t].size() != src[t].size()) throw ContractError("gradient tensor size mismatch");
        for (std::size_t i = 0; i < dst[t].size(); ++i) dst[t][i] += src[t][i];
    }
    return *this;
}

GradBundle& GradBundle::scale_params(double s) {
    for (auto t : tensors())
        for (double& v : t) v *= s;
    return *this;
}

bool GradBundle::all_finite() const {
    for (auto t : tensors())
        for (double v : t)
            if (!std::isfinite(v)) return false;
    return input.all_finite();
}

std::uint64_t parameter_fingerprint(const ProjectionParams& params) {
    // FNV-1a over the raw bits.
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xFFu;
            h *= 1099511628211ull;
        }
    };
    mix(static_cast<std::uint64_t>(params.kind));
    mix(params.bypass_layer_norm ? 1u : 0u);
    mix(std::bit_cast<std::uint64_t>(params.eps_ln));
    for (auto t : params.tensors())
        for (double v : t) mix(std::bit_cast<std::uint64_t>(v));
    return h;
}

namespace {

void layer_norm_rows(const ProjectionParams& params, const Matrix& y, Matrix& normalized,
                     std::vector<double>& inv_std, Matrix& out) {
    const std::size_t n = y.rows();
    const std::size_t d = y.cols();
    normalized = Matrix(n, d);
    inv_std.assign(n, 0.0);
    out = Matrix(n, d);
    for (std::size_t r = 0; r < n; ++r) {
        auto in = y.row(r);
        auto xh = normalized.row(r);
        const auto [lo, hi] = std::minmax_element(in.begin(), in.end());
        double mean = 0.0;
        for (double v : in) mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : in) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        const double rstd = 1.0 / std::sqrt(var + params.eps_ln);
        inv_std[r] = rstd;
        // A constant token normalizes to exact zeros regardless of rounding in the mean.
        const bool constant = *lo == *hi;
        for (std::size_t c = 0; c < d; ++c) xh[c] = constant ? 0.0 : (in[c] - mean) * rstd;
        auto o = out.row(r);
        for (std::size_t c = 0; c < d; ++c) o[c] = xh[c] * params.ln_gain[c] + params.ln_bias[c];
    }
}

}  // namespace

Matrix project_tokens(const ProjectionParams& params, const Matrix& tokens, ForwardCache* cache) {
    params.validate();
    if (tokens.cols() != params.dim()) {
        throw ShapeError("projection expects dim " + std::to_string(params.dim()) + ", got " +
                         std::to_string(tokens.cols()));
    }
    Matrix hidden;
    Matrix y;
    if (params.kind == ProjectionKind::linear) {
        y = matmul_nt(tokens, params.weight1);
    } else {
        hidden = matmul_nt(tokens, params.weight1);
        for (double& v : hidden.values()) v = std::tanh(v);
        y = matmul_nt(hidden, params.weight2);
    }

    Matrix out;
    Matrix normalized;
    std::vector<double> inv_std;
    if (params.bypass_layer_norm) {
        out = y;
    } else {
        layer_norm_rows(params, y, normalized, inv_std, out);
    }

    if (cache != nullptr) {
        cache->input = tokens;
        cache->hidden = std::move(hidden);
        cache->pre_norm = std::move(y);
        cache->normalized = std::move(normalized);
        cache->inv_std = std::move(inv_std);
        cache->fingerprint = parameter_fingerprint(params);
    }
    return out;
}

ProjectionOutput project_forward(const ProjectionParams& params, const EmbeddingGrid& grid) {
    ProjectionOutput result;
    Matrix p = project_tokens(params, grid.values, &result.cache);
    result.grid = EmbeddingGrid(grid.n_h, grid.n_w, std::move(p));
    return result;
}

GradBundle project_backward(const ProjectionParams& params, const ForwardCache& cache,
                            const Matrix& upstream) {
    if (cache.fingerprint != parameter_fingerprint(params)) {
        throw ContractError("project_backward: cache was produced with different parameters");
    }
    const std::size_t n = cache.input.rows();
    const std::size_t d = params.dim();
    if (upstream.rows() != n || upstream.cols() != d) {
        throw ShapeError("project_backward: upstream gradient shape does not match the forward output");
    }

    GradBundle g = GradBundle::zeros_like(params);
    Matrix dy;
    if (params.bypass_layer_norm) {
        dy = upstream;
    } else {
        dy = Matrix(n, d);
        for (std::size_t r = 0; r < n; ++r) {
            auto up = upstream.row(r);
            auto xh = cache.normalized.row(r);
            std::vector<double> dxh(d);
            double mean_dxh = 0.0;
            double mean_dxh_xh = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                g.ln_gain[c] += up[c] * xh[c];
                g.ln_bias[c] += up[c];
                dxh[c] = up[c] * params.ln_gain[c];
                mean_dxh += dxh[c];
                mean_dxh_xh += dxh[c] * xh[c];
            }
            mean_dxh /= static_cast<double>(d);
            mean_dxh_xh /= static_cast<double>(d);
            auto out = dy.row(r);
            const double rstd = cache.inv_std[r];
            for (std::size_t c = 0; c < d; ++c) out[c] = rstd * (dxh[c] - mean_dxh - xh[c] * mean_dxh_xh);
        }
    }

    if (params.kind == ProjectionKind::linear) {
        g.weight1 = matmul_tn(dy, cache.input);
        g.input = matmul(dy, params.weight1);
    } else {
        g.weight2 = matmul_tn(dy, cache.hidden);
        Matrix dh = matmul(dy, params.weight2);
        for (std::size_t i = 0; i < dh.size(); ++i) {
            const double a = cache.hidden.values()[i];
            dh.values()[i] *= 1.0 - a * a;
        }
        g.weight1 = matmul_tn(dh, cache.input);
        g.input = matmul(dh, params.weight1);
    }
    return g;
}

Matrix projection_jacobian(const ProjectionParams& params, std::span<const double> token) {
    params.validate();
    const std::size_t d = params.dim();
    if (token.size() != d) throw ShapeError("projection_jacobian: token has wrong dimension");

    Matrix core;
    Matrix z(1, d, std::vector<double>(token.begin(), token.end()));
    if (params.kind == ProjectionKind::linear) {
        core = params.weight1;
    } else {
        Matrix h = matmul_nt(z, params.weight1);
        Matrix scaled = params.weight1;
        for (std::size_t j = 0; j < d; ++j) {
            const double a = std::tanh(h(0, j));
            for (std::size_t k = 0; k < d; ++k) scaled(j, k) *= 1.0 - a * a;
        }
        core = matmul(params.weight2, scaled);
    }
    if (params.bypass_layer_norm) return core;

    ForwardCache cache;
    (void)project_tokens(params, z, &cache);
    const double rstd = cache.inv_std[0];
    auto xh = cache.normalized.row(0);
    Matrix ln(d, d);
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            ln(i, j) = params.ln_gain[i] * rstd * ((i == j ? 1.0 : 0.0) - inv_d - xh[i] * xh[j] * inv_d);
    return matmul(ln, core);
}

void write_checkpoint(const std::filesystem::path& path, const ProjectionParams& params) {
    params.validate();
    detail::ByteWriter w;
    w.bytes(kCheckpointMagic, 4);
    w.u32(kCheckpointVersion);
    w.u8(static_cast<std::uint8_t>(params.kind));
    w.u32(static_cast<std::uint32_t>(params.dim()));
    for (auto t : params.tensors())
        for (double v : t) w.f64(v);
    w.f64(params.eps_ln);
    w.save(path);
}

ProjectionParams read_checkpoint(const std::filesystem::path& path) {
    detail::ByteReader r(path);
    r.expect_magic(kCheckpointMagic);
    const std::uint64_t version_at = r.offset();
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
    }
    const std::uint64_t variant_at = r.offset();
    const std::uint8_t variant = r.u8("variant tag");
    if (variant > 1) throw FormatError("unknown projection variant " + std::to_string(variant), variant_at);
    const std::uint64_t dim_at = r.offset();
    const std::uint32_t d = r.u32("dim");
    if (d == 0) throw FormatError("zero projection dimension", dim_at);

    ProjectionParams p = identity_projection(static_cast<ProjectionKind>(variant), d);
    std::uint64_t count = p.parameter_count() + 1;
    r.need(8 * count, "parameters");
    for (auto t : p.tensors()) {
        for (double& v : t) {
            const std::uint64_t at = r.offset();
            v = r.f64("parameter");
            if (!std::isfinite(v)) throw FormatError("non-finite parameter", at);
        }
    }
    const std::uint64_t eps_at = r.offset();
    p.eps_ln = r.f64("eps_ln");
    if (!(p.eps_ln > 0.0) || !std::isfinite(p.eps_ln)) throw FormatError("eps_ln must be positive", eps_at);
    r.expect_end();
    return p;
}

}  // namespace cosettle
