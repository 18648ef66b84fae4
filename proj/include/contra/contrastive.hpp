#pragma once

// Bidirectional InfoNCE over a paired batch.
//
//   s_jk = i_j . t_k / tau
//   L    = 1/(2N) [ sum_j NLL(softmax(S)_j, Y_i2t_j) + sum_k NLL(softmax(S^T)_k, Y_t2i_k) ]
//
// Gradients w.r.t. the unit-norm embeddings use the coefficient matrix
//   G = (P_i2t - Y_i2t) + (P_t2i - Y_t2i)^T
// as dI = G T / (2 N tau), dT = G^T I / (2 N tau), dtau = -sum(G . S) / (2 N tau).

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "contra/matrix.hpp"

namespace contra {

struct SimilarityMatrix {
  Matrix s;
  double tau = 0.0;
};

/// Rows are label distributions (one-hot for plain pairs, soft under mixup).
struct LabelMatrix {
  Matrix y;

  static LabelMatrix identity(std::size_t n);
  /// Pairs row j with column n-1-j.
  static LabelMatrix mirror(std::size_t n);
  /// lambda * identity + (1 - lambda) * mirror.
  static LabelMatrix blend(double lambda, std::size_t n);
};

struct ProbabilityPair {
  Matrix i2t;  // row softmax of S
  Matrix t2i;  // row softmax of S^T
};

struct GradientSet {
  Matrix d_img;
  Matrix d_txt;
  double d_tau = 0.0;
};

SimilarityMatrix similarity_matrix(const Matrix& img, const Matrix& txt, double tau);

double infonce_loss(const SimilarityMatrix& s, const LabelMatrix& y_i2t, const LabelMatrix& y_t2i);

ProbabilityPair probability_matrices(const SimilarityMatrix& s);

/// (P_i2t - Y_i2t) + (P_t2i - Y_t2i)^T, the per-pair coefficient shared by both towers.
Matrix coefficient_matrix(const ProbabilityPair& p, const LabelMatrix& y_i2t, const LabelMatrix& y_t2i);

GradientSet analytic_gradients(const ProbabilityPair& p, const LabelMatrix& y_i2t,
                               const LabelMatrix& y_t2i, const Matrix& img, const Matrix& txt,
                               double tau);

/// Row index sets, one per worker. Image row j and text row j live on the same worker.
using ShardPartition = std::vector<std::vector<std::size_t>>;

/// Contiguous equal shards of [0, n). Throws InvalidArgument unless workers divides n.
ShardPartition contiguous_shards(std::size_t n, std::size_t workers);

struct DetachedGradient {
  GradientSet detached;  // what per-worker gradients sum to when gathered rows are constants
  GradientSet deficit;   // analytic - detached
};

/// Gradient obtained when every worker treats gathered remote embeddings as
/// constants: for a cross-worker pair (j, k) the I2T term into t_k and the T2I
/// term into i_j are lost. dtau is unaffected. Throws ContractError unless the
/// shards partition [0, N).
DetachedGradient detached_gather_gradient(const ShardPartition& shards, const ProbabilityPair& p,
                                          const LabelMatrix& y_i2t, const LabelMatrix& y_t2i,
                                          const Matrix& img, const Matrix& txt, double tau);

struct NegativeLogpStats {
  std::map<int, double> per_source;
  /// Sources present in the batch that had no negative pair.
  std::vector<int> omitted;
};

/// Per source: mean of log p over negative pairs (label exactly 0) whose query
/// comes from that source, computed per direction and then averaged.
NegativeLogpStats negative_logp_stats(const ProbabilityPair& p, const LabelMatrix& y_i2t,
                                      const LabelMatrix& y_t2i, std::span<const int> source_tags);

}  // namespace contra
