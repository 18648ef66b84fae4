#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "contra/matrix.hpp"
#include "contra/rng.hpp"

namespace contra {

/// Pre-normalization row norms, kept for the backward pass.
struct NormalizationContext {
  std::vector<double> norms;
};

struct NormalizedRows {
  Matrix rows;
  NormalizationContext context;
};

/// Scales every row to unit Euclidean norm. Throws DegenerateInput naming the
/// first row whose norm is <= 1e-12.
NormalizedRows l2_normalize_rows(const Matrix& m);

/// Gradient w.r.t. the raw rows given the gradient w.r.t. the normalized rows:
/// dx = (dy - y (y . dy)) / |x|.
Matrix l2_normalize_backward(const NormalizationContext& ctx, const Matrix& normalized,
                             const Matrix& upstream);

/// Row-wise softmax with row-max subtraction.
Matrix softmax_rows(const Matrix& m);

/// log-sum-exp of each row, stabilized the same way.
std::vector<double> logsumexp_rows(const Matrix& m);

using ScalarFunction = std::function<double(std::span<const double>)>;

inline constexpr double kDefaultFdEps = 1e-5;

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps). Calls f
/// twice at the base point first and throws OracleViolation if the values
/// differ, since a non-deterministic f makes the estimate meaningless.
std::vector<double> finite_difference_gradient(const ScalarFunction& f, std::span<const double> params,
                                               double eps = kDefaultFdEps);

/// |a - b|_2 / max(|a|_2, |b|_2, 1e-8).
double relative_error(std::span<const double> a, std::span<const double> b);
/// Scalar form of relative_error.
double relative_error(double a, double b);

/// Inverted-dropout mask with entries in {0, 1/(1-rate)}. Entry (r, c) is a
/// counter draw at (row_offset + r, c), so the mask of a sub-batch equals the
/// matching rows of the full-batch mask. Throws InvalidArgument unless 0 <= rate < 1.
Matrix seeded_dropout_mask(std::size_t rows, std::size_t cols, double rate, const SeedContext& ctx,
                           std::size_t row_offset = 0);

}  // namespace contra
