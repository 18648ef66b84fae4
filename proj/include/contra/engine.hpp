#pragma once

// Gradient execution modes and the optimizer.
//
// Every mode produces the gradient of the same bidirectional InfoNCE (or its
// coin-flip mixup variant) over one global batch:
//   * full batch: one forward of everything, one backward.
//   * simulated workers: W contiguous shards, each forwarding its own rows and
//     computing its share of the loss against gathered embeddings. In reserved
//     mode gradients into gathered rows are routed back to their owner; in
//     detached mode they are dropped. Per-worker parameter gradients are summed
//     in rank order.
//   * decoupled gradient accumulation (DGA): a no-grad pass caches the global
//     embeddings and the stop-gradient coefficient rows, then every sub-batch is
//     re-forwarded under the same SeedContext and back-propagated through the
//     surrogate sum(left_I * I + left_T * T) / (2 N sqrt(tau)).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "contra/contrastive.hpp"
#include "contra/encoders.hpp"
#include "contra/mixup.hpp"

namespace contra {

/// One global training batch. Row j of images pairs with row j of texts.
struct Batch {
  ImageBatch images;
  TextBatch texts;
  std::vector<int> sources;

  std::size_t size() const noexcept { return images.count; }
};

struct StepOptions {
  double token_drop_rate = 0.0;
  std::optional<MixupDecision> mixup;
};

/// Loss, probabilities and labels of the global batch, for metrics and diagnostics.
struct StepDiagnostics {
  double loss = 0.0;
  ProbabilityPair probs;
  LabelMatrix labels;  // used for both directions
};

struct BatchGradients {
  ParamBlocks grads;
  StepDiagnostics diag;
  Matrix img_emb;
  Matrix txt_emb;
};

BatchGradients full_batch_gradients(const EncoderParams& params, const Batch& batch,
                                    const StepOptions& opts, const SeedContext& ctx);

enum class GatherMode { kDetached, kReserved };

std::string to_string(GatherMode mode);

struct WorkerGradients {
  ParamBlocks grads;
  StepDiagnostics diag;
  /// Per-worker embedding gradients after routing, stacked in row order.
  Matrix d_img;
  Matrix d_txt;
};

/// Throws InvalidArgument unless workers divides the batch size.
WorkerGradients simulate_workers(const EncoderParams& params, const Batch& batch, std::size_t workers,
                                 GatherMode mode, const StepOptions& opts, const SeedContext& ctx);

struct DgaPlan {
  std::size_t global_batch = 0;
  std::size_t sub_batch = 0;
  SeedContext forward_seed;
  Matrix img_bar;   // stop-gradient global image embeddings
  Matrix txt_bar;
  Matrix left_img;  // ((P_i2t + P_t2i^T) - (Y_i2t + Y_t2i^T)) T / sqrt(tau)
  Matrix left_txt;  // ((P_i2t^T + P_t2i) - (Y_i2t^T + Y_t2i)) I / sqrt(tau)
  double tau = 0.0;
  std::vector<std::uint64_t> checksums;  // per sub-batch, images then texts
  StepDiagnostics diag;
};

struct DgaOptions {
  std::size_t sub_batch = 0;
  /// Compare pass-2 embeddings with pass 1 and throw StabilityViolation on mismatch.
  bool verify_stability = true;
  /// Seed for the second pass; only set to reproduce unstable seeding.
  std::optional<SeedContext> pass2_seed;
};

/// Pass 1: no-grad forward of every sub-batch and the cached coefficient rows.
DgaPlan build_dga_plan(const EncoderParams& params, const Batch& batch, std::size_t sub_batch,
                       const StepOptions& opts, const SeedContext& ctx);

/// Pass 2: re-forward each sub-batch with gradients and accumulate.
ParamBlocks dga_accumulate(const EncoderParams& params, const Batch& batch, const DgaPlan& plan,
                           const StepOptions& opts, const DgaOptions& dga);

struct DgaGradients {
  ParamBlocks grads;
  StepDiagnostics diag;
};

DgaGradients dga_gradients(const EncoderParams& params, const Batch& batch, const DgaOptions& dga,
                           const StepOptions& opts, const SeedContext& ctx);

/// Order-sensitive FNV-1a over the bit patterns of a matrix.
std::uint64_t checksum(const Matrix& m) noexcept;

struct OptimizerHyper {
  double base_lr = 1e-4;
  double min_lr = 1e-5;
  double weight_decay = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  ParamBlocks first_moment;
  ParamBlocks second_moment;
  std::uint64_t step = 0;

  static OptimizerState for_params(const EncoderParams& params);
};

/// min + (base - min) (1 + cos(pi step / total)) / 2.
double cosine_lr(std::size_t step, std::size_t total_steps, double base, double min);

/// Bias-corrected Adam moments with decoupled weight decay on the matrix
/// blocks. Frozen towers and their moments are left untouched. The temperature
/// gets no weight decay and is clamped to >= 1e-4 afterwards.
/// Throws NonFiniteError on non-finite gradients.
void adamw_update(EncoderParams& params, const ParamBlocks& grads, OptimizerState& state, double lr,
                  const OptimizerHyper& hyper);

/// Euclidean norm over every gradient entry including d tau.
double gradient_norm(const ParamBlocks& grads);

/// Largest relative_error over the flattened blocks of two gradient sets.
double gradient_relative_error(const ParamBlocks& a, const ParamBlocks& b);

}  // namespace contra
