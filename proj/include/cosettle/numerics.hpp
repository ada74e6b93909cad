#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "cosettle/matrix.hpp"

namespace cosettle {

/// Engine used everywhere randomness is needed; seeded explicitly for reproducibility.
using Rng = std::mt19937_64;

/// Row-wise softmax of m / temperature with max subtraction.
Matrix softmax_rows(const Matrix& m, double temperature);

/// Backward of softmax_rows: given the output A and dL/dA, returns dL/dm.
Matrix softmax_rows_backward(const Matrix& probs, const Matrix& grad_probs, double temperature);

struct SymEigResult {
    std::vector<double> eigenvalues;  // ascending
    Matrix basis;                     // column k is the eigenvector of eigenvalues[k]
    int sweeps = 0;
};

inline constexpr int kJacobiMaxSweeps = 100;
inline constexpr double kJacobiTolerance = 1e-12;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// The input is symmetrized before rotating; inputs whose asymmetry exceeds
/// 1e-9 of their Frobenius norm are rejected. Each eigenvector is signed so its
/// largest-magnitude entry is positive, which makes the output deterministic.
SymEigResult sym_eig(const Matrix& s);

/// U · diag(values) · Uᵀ
Matrix compose_spectral(const Matrix& basis, std::span<const double> values);

/// (1/K) Σ_k (a_k − b_k)(a_k − b_k)ᵀ over paired row vectors.
Matrix covariance_of_differences(std::span<const std::pair<std::vector<double>, std::vector<double>>> pairs);

/// Same as above where row k of `a` pairs with row k of `b`.
Matrix covariance_of_differences(const Matrix& a, const Matrix& b);

/// Square root factor L (L·Lᵀ == cov) of a symmetric PSD matrix.
/// Throws ParameterError when cov has an eigenvalue below −1e-10·max(1, ‖cov‖_F).
Matrix psd_factor(const Matrix& cov);

/// Haar-distributed random orthogonal matrix.
Matrix random_orthogonal(std::size_t n, Rng& rng);

/// n×d matrix of independent standard normals.
Matrix standard_normals(std::size_t n, std::size_t d, Rng& rng);

/// Gaussian design with stratified half-normal magnitudes and Hadamard sign
/// patterns. Every column has an N(0,1) marginal; the sample second-moment
/// matrix has exactly zero off-diagonal entries and diagonal entries that are
/// stratified estimates of 1. The row count is rounded up to a multiple of the
/// Hadamard order (next power of two ≥ d).
Matrix balanced_standard_normals(std::size_t n, std::size_t d, Rng& rng);

/// Rows x_k = L · s_k for the given factor L and standard design rows s_k.
Matrix correlate_rows(const Matrix& standard, const Matrix& factor);

/// Φ⁻¹(u) for u in (0, 1).
double normal_quantile(double u);

}  // namespace cosettle
