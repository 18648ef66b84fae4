#pragma once

// Independent reference computations used by `contra verify` and the test
// suites. None of these share code paths with the fast implementations they
// check beyond the forward encoders.

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "contra/contrastive.hpp"
#include "contra/engine.hpp"
#include "contra/eval.hpp"

namespace contra {

/// Random toy problem for gradient checks.
struct ToySetup {
  std::size_t batch = 4;
  std::size_t patches = 3;
  std::size_t patch_dim = 5;
  std::size_t hidden = 8;
  std::size_t vocab = 12;
  std::size_t embed_dim = 6;
  std::size_t min_len = 2;
  std::size_t max_len = 6;
  double dropout = 0.0;
  double token_drop = 0.0;
  bool mixup = false;
  double mixup_lambda = 0.7;  // used when mixup is on
  bool image_coin = true;     // mixed modality when mixup is on
  std::uint64_t seed = 1;
  /// Temperature replacing the 0.02 initial value; toy embeddings at random
  /// init give a sharper softmax than is useful for FD checks.
  double tau = 0.5;
};

struct ToyProblem {
  EncoderParams params;
  Batch batch;
  StepOptions opts;
  SeedContext ctx;
};

ToyProblem make_toy_problem(const ToySetup& setup);

/// Forward-only loss of a batch: encoders, optional mixup, InfoNCE.
double forward_loss(const EncoderParams& params, const Batch& batch, const StepOptions& opts,
                    const SeedContext& ctx);

struct FdReport {
  ParamBlocks analytic;
  ParamBlocks numeric;
  double relative_error = 0.0;  // worst block, vector norm
};

/// Central differences over every parameter (eps 1e-5) against full_batch_gradients.
FdReport finite_difference_check(const ToyProblem& problem, double eps = 1e-5);

/// Cross-term deficit of detached gathering from its per-pair definition: for
/// each pair (j, k) on different workers, the I2T term of row j into t_k and
/// the T2I term of row k into i_j.
GradientSet brute_force_detached_deficit(const ShardPartition& shards, const Matrix& img, const Matrix& txt,
                                         double tau, const LabelMatrix& labels);

/// Recalls from a full sort of every query's candidates (descending cosine,
/// lower index first on ties).
RetrievalReport brute_force_retrieval(const Matrix& img, const Matrix& txt);

struct VerifyOutcome {
  std::string suite;
  bool passed = true;
  std::vector<std::string> lines;  // one per checked invariant
};

const std::vector<std::string>& verify_suite_names();
/// Runs one oracle suite and reports each invariant as "PASS|FAIL <name>: observed ... expected ...".
/// Throws InvalidArgument for an unknown suite.
VerifyOutcome run_verify_suite(const std::string& suite);

}  // namespace contra
