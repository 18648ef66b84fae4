#include "contra/matrix.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "contra/error.hpp"
#include "contra/kernels.hpp"

namespace contra {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ContractError(fmt::format("matrix {}x{} given {} values", rows_, cols_, data_.size()));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ContractError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix Matrix::row_block(std::size_t first, std::size_t count) const {
  if (first + count > rows_) {
    throw ContractError(fmt::format("row block [{}, {}) outside {} rows", first, first + count, rows_));
  }
  Matrix out(count, cols_);
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(first * cols_), count * cols_,
              out.data_.begin());
  return out;
}

void Matrix::set_row_block(std::size_t first, const Matrix& block) {
  if (block.cols_ != cols_ || first + block.rows_ > rows_) {
    throw ContractError("set_row_block shape mismatch");
  }
  std::copy(block.data_.begin(), block.data_.end(),
            data_.begin() + static_cast<std::ptrdiff_t>(first * cols_));
}

Matrix Matrix::gather_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows_) throw ContractError("gather_rows index out of range");
    auto src = row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix& Matrix::operator+=(const Matrix& o) {
  if (o.rows_ != rows_ || o.cols_ != cols_) throw ContractError("matrix += shape mismatch");
  kernels::axpy(1.0, o.data(), data(), data_.size());
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
  if (o.rows_ != rows_ || o.cols_ != cols_) throw ContractError("matrix -= shape mismatch");
  kernels::axpy(-1.0, o.data(), data(), data_.size());
  return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
  kernels::scale(s, data(), data_.size());
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ContractError(fmt::format("matmul {}x{} * {}x{}", a.rows(), a.cols(), b.rows(), b.cols()));
  }
  Matrix c(a.rows(), b.cols());
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* out = c.row(i).data();
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double s = a(i, p);
      if (s != 0.0) k.axpy(s, b.row(p).data(), out, b.cols());
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ContractError(
        fmt::format("matmul_nt {}x{} * ({}x{})^T", a.rows(), a.cols(), b.rows(), b.cols()));
  }
  Matrix c(a.rows(), b.rows());
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = k.dot(a.row(i).data(), b.row(j).data(), a.cols());
  return c;
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.rows() != b.rows() || c.rows() != a.cols() || c.cols() != b.cols()) {
    throw ContractError(fmt::format("matmul_tn ({}x{})^T * {}x{} into {}x{}", a.rows(), a.cols(),
                                    b.rows(), b.cols(), c.rows(), c.cols()));
  }
  const auto& k = kernels::active();
  for (std::size_t p = 0; p < a.rows(); ++p) {
    const double* src = b.row(p).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double s = a(p, i);
      if (s != 0.0) k.axpy(s, src, c.row(i).data(), b.cols());
    }
  }
}

double frobenius_norm(const Matrix& m) {
  return std::sqrt(kernels::dot(m.data(), m.data(), m.size()));
}

double max_abs(const Matrix& m) {
  double best = 0.0;
  for (double v : m.flat()) best = std::max(best, std::abs(v));
  return best;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ContractError("max_abs_diff shape mismatch");
  double best = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) best = std::max(best, std::abs(a.flat()[i] - b.flat()[i]));
  return best;
}

}  // namespace contra
