#include "contra/numerics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "contra/error.hpp"
#include "contra/kernels.hpp"

namespace contra {

NormalizedRows l2_normalize_rows(const Matrix& m) {
  NormalizedRows out{m, {std::vector<double>(m.rows())}};
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = out.rows.row(r);
    const double norm = std::sqrt(kernels::dot(row.data(), row.data(), row.size()));
    if (!(norm > 1e-12)) {
      throw DegenerateInput(fmt::format("row {} has norm {} and cannot be normalized", r, norm));
    }
    out.context.norms[r] = norm;
    for (double& v : row) v /= norm;
  }
  return out;
}

Matrix l2_normalize_backward(const NormalizationContext& ctx, const Matrix& normalized,
                             const Matrix& upstream) {
  if (normalized.rows() != upstream.rows() || normalized.cols() != upstream.cols() ||
      ctx.norms.size() != normalized.rows()) {
    throw ContractError("l2_normalize_backward shape mismatch");
  }
  Matrix dx = upstream;
  for (std::size_t r = 0; r < dx.rows(); ++r) {
    const auto y = normalized.row(r);
    auto g = dx.row(r);
    const double proj = kernels::dot(y.data(), g.data(), y.size());
    kernels::axpy(-proj, y.data(), g.data(), g.size());
    kernels::scale(1.0 / ctx.norms[r], g.data(), g.size());
  }
  return dx;
}

Matrix softmax_rows(const Matrix& m) {
  if (!m.all_finite()) throw NonFiniteError("softmax_rows: non-finite input");
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto in = m.row(r);
    auto dst = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      dst[c] = std::exp(in[c] - mx);
      sum += dst[c];
    }
    for (double& v : dst) v /= sum;
  }
  return out;
}

std::vector<double> logsumexp_rows(const Matrix& m) {
  std::vector<double> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto in = m.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (double v : in) sum += std::exp(v - mx);
    out[r] = mx + std::log(sum);
  }
  return out;
}

std::vector<double> finite_difference_gradient(const ScalarFunction& f, std::span<const double> params,
                                               double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("finite_difference_gradient: eps must be positive");
  std::vector<double> x(params.begin(), params.end());
  const double f0 = f(x);
  const double f1 = f(x);
  if (f0 != f1) {
    throw OracleViolation(
        fmt::format("objective is not deterministic: {:.17g} then {:.17g} at the same point", f0, f1));
  }
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double fp = f(x);
    x[i] = saved - eps;
    const double fm = f(x);
    x[i] = saved;
    grad[i] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("relative_error length mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-8});
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

Matrix seeded_dropout_mask(std::size_t rows, std::size_t cols, double rate, const SeedContext& ctx,
                           std::size_t row_offset) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw InvalidArgument(fmt::format("dropout rate {} outside [0, 1)", rate));
  }
  Matrix mask(rows, cols, 1.0);
  if (rate == 0.0) return mask;
  const double keep = 1.0 / (1.0 - rate);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      mask(r, c) = ctx.uniform(row_offset + r, c) < rate ? 0.0 : keep;
  return mask;
}

}  // namespace contra
