#include "contra/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/core.h>

#include "contra/error.hpp"
#include "contra/kernels.hpp"
#include "contra/numerics.hpp"

namespace contra {
namespace {

void check_labels(const LabelMatrix& y, std::size_t rows, std::size_t cols, const char* what) {
  if (y.y.rows() != rows || y.y.cols() != cols) {
    throw ContractError(fmt::format("{} labels are {}x{}, expected {}x{}", what, y.y.rows(),
                                    y.y.cols(), rows, cols));
  }
}

double nll_rows(const Matrix& s, const Matrix& y) {
  const std::vector<double> lse = logsumexp_rows(s);
  double total = 0.0;
  for (std::size_t j = 0; j < s.rows(); ++j) {
    for (std::size_t k = 0; k < s.cols(); ++k) {
      const double label = y(j, k);
      if (label != 0.0) total -= label * (s(j, k) - lse[j]);
    }
  }
  return total;
}

}  // namespace

LabelMatrix LabelMatrix::identity(std::size_t n) {
  Matrix y(n, n);
  for (std::size_t j = 0; j < n; ++j) y(j, j) = 1.0;
  return {std::move(y)};
}

LabelMatrix LabelMatrix::mirror(std::size_t n) {
  Matrix y(n, n);
  for (std::size_t j = 0; j < n; ++j) y(j, n - 1 - j) = 1.0;
  return {std::move(y)};
}

LabelMatrix LabelMatrix::blend(double lambda, std::size_t n) {
  Matrix y(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    y(j, j) += lambda;
    y(j, n - 1 - j) += 1.0 - lambda;
  }
  return {std::move(y)};
}

SimilarityMatrix similarity_matrix(const Matrix& img, const Matrix& txt, double tau) {
  if (!(tau > 0.0)) throw InvalidArgument(fmt::format("temperature {} must be positive", tau));
  if (img.cols() != txt.cols()) {
    throw ContractError(fmt::format("embedding dims differ: {} vs {}", img.cols(), txt.cols()));
  }
  Matrix s = matmul_nt(img, txt);
  s *= 1.0 / tau;
  return {std::move(s), tau};
}

double infonce_loss(const SimilarityMatrix& s, const LabelMatrix& y_i2t, const LabelMatrix& y_t2i) {
  const std::size_t n = s.s.rows();
  check_labels(y_i2t, n, s.s.cols(), "I2T");
  check_labels(y_t2i, s.s.cols(), n, "T2I");
  if (n == 0) throw ContractError("empty similarity matrix");
  const double i2t = nll_rows(s.s, y_i2t.y);
  const double t2i = nll_rows(s.s.transposed(), y_t2i.y);
  return (i2t + t2i) / (2.0 * static_cast<double>(n));
}

ProbabilityPair probability_matrices(const SimilarityMatrix& s) {
  return {softmax_rows(s.s), softmax_rows(s.s.transposed())};
}

Matrix coefficient_matrix(const ProbabilityPair& p, const LabelMatrix& y_i2t, const LabelMatrix& y_t2i) {
  const std::size_t n = p.i2t.rows();
  const std::size_t m = p.i2t.cols();
  check_labels(y_i2t, n, m, "I2T");
  check_labels(y_t2i, m, n, "T2I");
  if (p.t2i.rows() != m || p.t2i.cols() != n) throw ContractError("probability pair shapes disagree");
  Matrix g(n, m);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < m; ++k)
      g(j, k) = (p.i2t(j, k) - y_i2t.y(j, k)) + (p.t2i(k, j) - y_t2i.y(k, j));
  return g;
}

GradientSet analytic_gradients(const ProbabilityPair& p, const LabelMatrix& y_i2t,
                               const LabelMatrix& y_t2i, const Matrix& img, const Matrix& txt,
                               double tau) {
  const Matrix g = coefficient_matrix(p, y_i2t, y_t2i);
  if (img.rows() != g.rows() || txt.rows() != g.cols() || img.cols() != txt.cols()) {
    throw ContractError("analytic_gradients: embedding shapes do not match probabilities");
  }
  const double c = 1.0 / (2.0 * static_cast<double>(img.rows()) * tau);
  GradientSet out;
  out.d_img = matmul(g, txt) * c;
  out.d_txt = Matrix(txt.rows(), txt.cols());
  matmul_tn_acc(g, img, out.d_txt);
  out.d_txt *= c;
  // sum_jk G_jk s_jk with s_jk = i_j . t_k / tau, reusing G T.
  double gs = 0.0;
  const Matrix gt = matmul(g, txt);
  for (std::size_t j = 0; j < img.rows(); ++j) {
    gs += kernels::dot(gt.row(j).data(), img.row(j).data(), img.cols());
  }
  out.d_tau = -c * gs / tau;
  return out;
}

ShardPartition contiguous_shards(std::size_t n, std::size_t workers) {
  if (workers == 0 || n % workers != 0) {
    throw InvalidArgument(fmt::format("{} workers do not divide a batch of {}", workers, n));
  }
  ShardPartition shards(workers);
  const std::size_t per = n / workers;
  for (std::size_t w = 0; w < workers; ++w)
    for (std::size_t r = 0; r < per; ++r) shards[w].push_back(w * per + r);
  return shards;
}

DetachedGradient detached_gather_gradient(const ShardPartition& shards, const ProbabilityPair& p,
                                          const LabelMatrix& y_i2t, const LabelMatrix& y_t2i,
                                          const Matrix& img, const Matrix& txt, double tau) {
  const std::size_t n = img.rows();
  if (txt.rows() != n || p.i2t.rows() != n || p.i2t.cols() != n) {
    throw ContractError("detached_gather_gradient needs a square paired batch");
  }
  std::vector<std::size_t> owner(n, shards.size());
  for (std::size_t w = 0; w < shards.size(); ++w) {
    for (std::size_t r : shards[w]) {
      if (r >= n) throw ContractError(fmt::format("shard {} holds row {} outside [0, {})", w, r, n));
      if (owner[r] != shards.size()) throw ContractError(fmt::format("row {} is in two shards", r));
      owner[r] = w;
    }
  }
  for (std::size_t r = 0; r < n; ++r) {
    if (owner[r] == shards.size()) throw ContractError(fmt::format("row {} belongs to no shard", r));
  }
  check_labels(y_i2t, n, n, "I2T");
  check_labels(y_t2i, n, n, "T2I");

  // Only the dropped cross terms are accumulated, so a single worker loses
  // nothing and its detached gradient is the analytic one bit for bit.
  const double c = 1.0 / (2.0 * static_cast<double>(n) * tau);
  const std::size_t d = img.cols();
  GradientSet deficit{Matrix(n, d), Matrix(n, d), 0.0};
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      if (owner[j] == owner[k]) continue;
      const double a = p.i2t(j, k) - y_i2t.y(j, k);  // I2T row j never reaches remote t_k
      const double b = p.t2i(k, j) - y_t2i.y(k, j);  // T2I row k never reaches remote i_j
      kernels::axpy(c * a, img.row(j).data(), deficit.d_txt.row(k).data(), d);
      kernels::axpy(c * b, txt.row(k).data(), deficit.d_img.row(j).data(), d);
    }
  }
  const GradientSet full = analytic_gradients(p, y_i2t, y_t2i, img, txt, tau);
  GradientSet det{full.d_img - deficit.d_img, full.d_txt - deficit.d_txt, full.d_tau};
  return {std::move(det), std::move(deficit)};
}

NegativeLogpStats negative_logp_stats(const ProbabilityPair& p, const LabelMatrix& y_i2t,
                                      const LabelMatrix& y_t2i, std::span<const int> source_tags) {
  const std::size_t n = p.i2t.rows();
  if (source_tags.size() != n || p.t2i.rows() != n) {
    throw ContractError(fmt::format("{} source tags for a batch of {}", source_tags.size(), n));
  }
  struct Acc {
    double sum[2] = {0.0, 0.0};
    std::size_t count[2] = {0, 0};
  };
  std::map<int, Acc> acc;
  const Matrix* probs[2] = {&p.i2t, &p.t2i};
  const Matrix* labels[2] = {&y_i2t.y, &y_t2i.y};
  for (std::size_t j = 0; j < n; ++j) {
    Acc& a = acc[source_tags[j]];
    for (int dir = 0; dir < 2; ++dir) {
      for (std::size_t k = 0; k < probs[dir]->cols(); ++k) {
        if ((*labels[dir])(j, k) != 0.0) continue;
        // Underflowed probabilities are clamped so one pair cannot turn the mean into -inf.
        a.sum[dir] += std::log(std::max((*probs[dir])(j, k), std::numeric_limits<double>::min()));
        ++a.count[dir];
      }
    }
  }
  NegativeLogpStats out;
  for (const auto& [source, a] : acc) {
    if (a.count[0] == 0 || a.count[1] == 0) {
      out.omitted.push_back(source);
      continue;
    }
    out.per_source[source] = 0.5 * (a.sum[0] / static_cast<double>(a.count[0]) +
                                    a.sum[1] / static_cast<double>(a.count[1]));
  }
  return out;
}

}  // namespace contra
