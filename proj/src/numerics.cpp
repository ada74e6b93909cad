#include "cosettle/numerics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <boost/math/special_functions/erf.hpp>

#include "cosettle/error.hpp"

namespace cosettle {

Matrix softmax_rows(const Matrix& m, double temperature) {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw ParameterError("softmax temperature must be positive and finite, got " +
                             std::to_string(temperature));
    }
    if (!m.all_finite()) throw InvalidInputError("softmax_rows: input contains non-finite entries");

    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto in = m.row(r);
        auto o = out.row(r);
        const double mx = *std::max_element(in.begin(), in.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            o[c] = std::exp((in[c] - mx) / temperature);
            sum += o[c];
        }
        for (double& v : o) v /= sum;
    }
    return out;
}

Matrix softmax_rows_backward(const Matrix& probs, const Matrix& grad_probs, double temperature) {
    require_same_shape(probs, grad_probs, "softmax_rows_backward");
    Matrix g(probs.rows(), probs.cols());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        auto p = probs.row(r);
        auto gp = grad_probs.row(r);
        const double inner = dot(p, gp);
        auto out = g.row(r);
        for (std::size_t c = 0; c < p.size(); ++c) out[c] = p[c] * (gp[c] - inner) / temperature;
    }
    return g;
}

namespace {

double off_diagonal_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

}  // namespace

SymEigResult sym_eig(const Matrix& s) {
    if (!s.is_square()) {
        throw ShapeError("sym_eig: matrix is " + std::to_string(s.rows()) + "x" +
                         std::to_string(s.cols()));
    }
    if (!s.all_finite()) throw InvalidInputError("sym_eig: non-finite entries");
    const std::size_t n = s.rows();
    const double scale = frobenius_norm(s);
    if (frobenius_norm(s - transpose(s)) > 1e-9 * scale) {
        throw InvalidInputError("sym_eig: matrix is not symmetric");
    }

    Matrix a = symmetrize(s);
    Matrix v = Matrix::identity(n);
    const double target = kJacobiTolerance * std::max(scale, std::numeric_limits<double>::min());

    int sweep = 0;
    while (off_diagonal_norm(a) > target) {
        if (sweep == kJacobiMaxSweeps) {
            throw NumericError("sym_eig: no convergence after " + std::to_string(kJacobiMaxSweeps) +
                               " sweeps, off-diagonal norm " + std::to_string(off_diagonal_norm(a)));
        }
        ++sweep;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

    SymEigResult result;
    result.sweeps = sweep;
    result.eigenvalues.resize(n);
    result.basis = Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t src = order[k];
        result.eigenvalues[k] = a(src, src);
        std::size_t arg = 0;
        for (std::size_t r = 1; r < n; ++r)
            if (std::abs(v(r, src)) > std::abs(v(arg, src))) arg = r;
        const double sign = v(arg, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t r = 0; r < n; ++r) result.basis(r, k) = sign * v(r, src);
    }
    return result;
}

Matrix compose_spectral(const Matrix& basis, std::span<const double> values) {
    if (!basis.is_square() || basis.rows() != values.size()) {
        throw ShapeError("compose_spectral: basis/values size mismatch");
    }
    const std::size_t n = values.size();
    Matrix scaled = basis;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) scaled(r, c) *= values[c];
    return matmul_nt(scaled, basis);
}

Matrix covariance_of_differences(
    std::span<const std::pair<std::vector<double>, std::vector<double>>> pairs) {
    if (pairs.empty()) throw ParameterError("covariance_of_differences: no pairs");
    const std::size_t d = pairs.front().first.size();
    Matrix a(pairs.size(), d);
    Matrix b(pairs.size(), d);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto& [x, y] = pairs[k];
        if (x.size() != d || y.size() != d) {
            throw ShapeError("covariance_of_differences: pair " + std::to_string(k) +
                             " has dimensions " + std::to_string(x.size()) + "/" +
                             std::to_string(y.size()) + ", expected " + std::to_string(d));
        }
        std::copy(x.begin(), x.end(), a.row(k).begin());
        std::copy(y.begin(), y.end(), b.row(k).begin());
    }
    return covariance_of_differences(a, b);
}

Matrix covariance_of_differences(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "covariance_of_differences");
    if (a.rows() == 0) throw ParameterError("covariance_of_differences: no pairs");
    const Matrix diff = a - b;
    Matrix cov = matmul_tn(diff, diff);
    cov *= 1.0 / static_cast<double>(a.rows());
    // Exact symmetry: copy the upper triangle down.
    for (std::size_t i = 0; i < cov.rows(); ++i)
        for (std::size_t j = 0; j < i; ++j) cov(i, j) = cov(j, i);
    return cov;
}

Matrix psd_factor(const Matrix& cov) {
    const SymEigResult eig = sym_eig(cov);
    const double floor = -1e-10 * std::max(1.0, frobenius_norm(cov));
    const std::size_t n = cov.rows();
    Matrix factor = eig.basis;
    for (std::size_t k = 0; k < n; ++k) {
        const double lam = eig.eigenvalues[k];
        if (lam < floor) {
            throw ParameterError("covariance is not positive semi-definite (eigenvalue " +
                                 std::to_string(lam) + ")");
        }
        const double root = std::sqrt(std::max(lam, 0.0));
        for (std::size_t r = 0; r < n; ++r) factor(r, k) *= root;
    }
    return factor;
}

Matrix standard_normals(std::size_t n, std::size_t d, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix out(n, d);
    for (double& v : out.values()) v = normal(rng);
    return out;
}

Matrix random_orthogonal(std::size_t n, Rng& rng) {
    // Gram–Schmidt on a Gaussian matrix, with the R-diagonal sign fix for Haar measure.
    Matrix q = standard_normals(n, n, rng);
    for (std::size_t c = 0; c < n; ++c) {
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t prev = 0; prev < c; ++prev) {
                double proj = 0.0;
                for (std::size_t r = 0; r < n; ++r) proj += q(r, c) * q(r, prev);
                for (std::size_t r = 0; r < n; ++r) q(r, c) -= proj * q(r, prev);
            }
        }
        double len = 0.0;
        for (std::size_t r = 0; r < n; ++r) len += q(r, c) * q(r, c);
        len = std::sqrt(len);
        if (len < 1e-12) throw NumericError("random_orthogonal: degenerate Gaussian draw");
        for (std::size_t r = 0; r < n; ++r) q(r, c) /= len;
    }
    return q;
}

double normal_quantile(double u) {
    if (!(u > 0.0 && u < 1.0)) throw ParameterError("normal_quantile: u must lie in (0, 1)");
    return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u);
}

Matrix balanced_standard_normals(std::size_t n, std::size_t d, Rng& rng) {
    if (n == 0 || d == 0) throw ParameterError("balanced_standard_normals: empty design");
    const std::size_t order = std::bit_ceil(d);
    const std::size_t blocks = (n + order - 1) / order;

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    // Stratified half-normal magnitudes, one independent stratum permutation per column.
    Matrix magnitude(blocks, d);
    std::vector<std::size_t> strata(blocks);
    for (std::size_t j = 0; j < d; ++j) {
        std::iota(strata.begin(), strata.end(), 0);
        std::shuffle(strata.begin(), strata.end(), rng);
        for (std::size_t k = 0; k < blocks; ++k) {
            double u = (static_cast<double>(strata[k]) + unit(rng)) / static_cast<double>(blocks);
            u = std::clamp(u, 1e-300, 1.0 - 1e-16);
            magnitude(k, j) = normal_quantile(0.5 + 0.5 * u);
        }
    }

    Matrix out(blocks * order, d);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t k = 0; k < blocks; ++k) {
        std::vector<double> flip(d);
        for (double& f : flip) f = coin(rng) ? 1.0 : -1.0;
        for (std::size_t h = 0; h < order; ++h) {
            auto row = out.row(k * order + h);
            for (std::size_t j = 0; j < d; ++j) {
                // Sylvester Hadamard entry H[h][j] = (−1)^popcount(h & j).
                const double sign = (std::popcount(h & j) % 2 == 0) ? 1.0 : -1.0;
                row[j] = flip[j] * sign * magnitude(k, j);
            }
        }
    }
    return out;
}

Matrix correlate_rows(const Matrix& standard, const Matrix& factor) {
    return matmul_nt(standard, factor);
}

}  // namespace cosettle
