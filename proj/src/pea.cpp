#include "cosettle/pea.hpp"

#include <cmath>
#include <string>

#include "binary_io.hpp"
#include "cosettle/error.hpp"

namespace cosettle {

PositionalGrid sinusoidal_grid(std::size_t n_h, std::size_t n_w, std::size_t dim, double base) {
    if (dim < 4 || dim % 2 != 0) {
        throw ParameterError("sinusoidal_grid: dim must be even and >= 4, got " + std::to_string(dim));
    }
    if (n_h == 0 || n_w == 0) throw ParameterError("sinusoidal_grid: empty grid");
    const std::size_t half = dim / 2;
    PositionalGrid g{n_h, n_w, Matrix(n_h * n_w, dim)};
    for (std::size_t r = 0; r < n_h; ++r) {
        for (std::size_t c = 0; c < n_w; ++c) {
            auto row = g.values.row(r * n_w + c);
            for (std::size_t part = 0; part < 2; ++part) {
                const double pos = static_cast<double>(part == 0 ? r : c);
                for (std::size_t j = 0; j < half; ++j) {
                    const std::size_t k = j / 2;
                    const double omega =
                        std::pow(base, -2.0 * static_cast<double>(k) / static_cast<double>(half));
                    row[part * half + j] = (j % 2 == 0) ? std::sin(pos * omega) : std::cos(pos * omega);
                }
            }
        }
    }
    return g;
}

PositionalGrid resample_bilinear(const PositionalGrid& grid, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0) throw ParameterError("resample_bilinear: empty target");
    if (grid.values.rows() != grid.n_h * grid.n_w) throw ShapeError("positional grid rows != n_h·n_w");
    const std::size_t d = grid.dim();

    // Corner-aligned source coordinate of output index i along an axis.
    auto source = [](std::size_t i, std::size_t in, std::size_t out, std::size_t& lo, std::size_t& hi,
                     double& frac) {
        if (in == 1 || out == 1) {
            lo = hi = 0;
            frac = 0.0;
            return;
        }
        const double x = static_cast<double>(i * (in - 1)) / static_cast<double>(out - 1);
        lo = static_cast<std::size_t>(std::floor(x));
        if (lo >= in - 1) {
            lo = hi = in - 1;
            frac = 0.0;
            return;
        }
        hi = lo + 1;
        frac = x - static_cast<double>(lo);
    };

    PositionalGrid out{out_h, out_w, Matrix(out_h * out_w, d)};
    for (std::size_t r = 0; r < out_h; ++r) {
        std::size_t r0, r1;
        double fr;
        source(r, grid.n_h, out_h, r0, r1, fr);
        for (std::size_t c = 0; c < out_w; ++c) {
            std::size_t c0, c1;
            double fc;
            source(c, grid.n_w, out_w, c0, c1, fc);
            auto a = grid.values.row(r0 * grid.n_w + c0);
            auto b = grid.values.row(r0 * grid.n_w + c1);
            auto e = grid.values.row(r1 * grid.n_w + c0);
            auto f = grid.values.row(r1 * grid.n_w + c1);
            auto o = out.values.row(r * out_w + c);
            for (std::size_t k = 0; k < d; ++k) {
                // lerp form x + t·(y − x) keeps constant grids exact and t = 0 bit-exact.
                const double top = a[k] + fc * (b[k] - a[k]);
                const double bottom = e[k] + fc * (f[k] - e[k]);
                o[k] = top + fr * (bottom - top);
            }
        }
    }
    return out;
}

std::size_t pea_upsampled_side(std::size_t side, double alpha) {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ParameterError("PEA alpha must be finite and >= 0");
    return static_cast<std::size_t>(std::ceil((1.0 + alpha) * static_cast<double>(side)));
}

PositionalGrid pea_augment(const PositionalGrid& grid, double alpha, Rng& rng) {
    const std::size_t up_h = pea_upsampled_side(grid.n_h, alpha);
    const std::size_t up_w = pea_upsampled_side(grid.n_w, alpha);
    const PositionalGrid big = resample_bilinear(grid, up_h, up_w);

    std::uniform_int_distribution<std::size_t> pick_r(0, up_h - grid.n_h);
    std::uniform_int_distribution<std::size_t> pick_c(0, up_w - grid.n_w);
    const std::size_t r0 = pick_r(rng);
    const std::size_t c0 = pick_c(rng);

    PositionalGrid out{grid.n_h, grid.n_w, Matrix(grid.n_h * grid.n_w, grid.dim())};
    for (std::size_t r = 0; r < grid.n_h; ++r) {
        for (std::size_t c = 0; c < grid.n_w; ++c) {
            auto src = big.values.row((r + r0) * up_w + (c + c0));
            auto dst = out.values.row(r * grid.n_w + c);
            std::copy(src.begin(), src.end(), dst.begin());
        }
    }
    return out;
}

const char* to_string(ProbeSetting setting) {
    switch (setting) {
        case ProbeSetting::irrelevant: return "irrelevant";
        case ProbeSetting::shuffled: return "shuffled";
        case ProbeSetting::normal: return "normal";
    }
    return "normal";
}

ProbeSetting probe_setting_from_string(const std::string& name) {
    if (name == "irrelevant") return ProbeSetting::irrelevant;
    if (name == "shuffled") return ProbeSetting::shuffled;
    if (name == "normal") return ProbeSetting::normal;
    throw ParameterError("unknown probe setting '" + name + "' (expected irrelevant, shuffled or normal)");
}

void write_positional_grid(const std::filesystem::path& path, const PositionalGrid& grid) {
    if (grid.n_h == 0 || grid.n_w == 0 || grid.dim() == 0 || grid.values.rows() != grid.n_h * grid.n_w) {
        throw ShapeError("positional grid shape does not match its values");
    }
    if (!grid.values.all_finite()) throw InvalidInputError("positional grid has non-finite entries");
    detail::ByteWriter w;
    w.bytes(kPositionalMagic, 4);
    w.u32(kPositionalVersion);
    w.u32(static_cast<std::uint32_t>(grid.dim()));
    w.u32(static_cast<std::uint32_t>(grid.n_h));
    w.u32(static_cast<std::uint32_t>(grid.n_w));
    for (double v : grid.values.values()) w.f32(static_cast<float>(v));
    w.save(path);
}

PositionalGrid read_positional_grid(const std::filesystem::path& path) {
    detail::ByteReader r(path);
    r.expect_magic(kPositionalMagic);
    const std::uint64_t version_at = r.offset();
    const std::uint32_t version = r.u32("version");
    if (version != kPositionalVersion) {
        throw FormatError("unsupported positional grid version " + std::to_string(version), version_at);
    }
    const std::uint64_t header_at = r.offset();
    const std::uint32_t dim = r.u32("dim");
    const std::uint32_t n_h = r.u32("n_h");
    const std::uint32_t n_w = r.u32("n_w");
    if (dim == 0 || n_h == 0 || n_w == 0) throw FormatError("inconsistent positional grid header", header_at);
    const std::uint64_t tokens = std::uint64_t{n_h} * n_w;
    r.need(4 * tokens * dim, "positional values");
    PositionalGrid grid{n_h, n_w, Matrix(tokens, dim)};
    for (double& v : grid.values.values()) {
        const std::uint64_t at = r.offset();
        v = static_cast<double>(r.f32("positional value"));
        if (!std::isfinite(v)) throw FormatError("non-finite positional value", at);
    }
    r.expect_end();
    return grid;
}

}  // namespace cosettle
