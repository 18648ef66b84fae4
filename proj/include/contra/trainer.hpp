#pragma once

// Training loop over a corpus: epoch planning, batch assembly with text
// corruption, the configured gradient mode, AdamW on a cosine schedule, and
// held-out retrieval evaluation.
//
// Seed layout (all derived from ExperimentConfig::seed):
//   init                  parameter initialization
//   plan/epoch#e          epoch e's batch plan
//   kmeans                virtual-source clustering
//   step/n#s              everything random inside optimizer step s
//                         (corrupt#row, mixup, forward)

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "contra/config.hpp"
#include "contra/engine.hpp"
#include "contra/eval.hpp"
#include "contra/sampling.hpp"
#include "contra/synthdata.hpp"

namespace contra {

struct StepMetrics {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::string mode;
  double loss = 0.0;
  double lr = 0.0;
  double tau = 0.0;  // after the update
  double grad_norm = 0.0;
  std::map<int, double> logp_neg_per_source;
  double wallclock_ms = 0.0;

  /// One JSON object on a single line.
  std::string to_json() const;
  static StepMetrics from_json(const std::string& line);
};

using MetricsSink = std::function<void(const StepMetrics&)>;

/// What one optimizer step needs besides parameters and data.
struct StepConfig {
  ExecutionMode mode;
  double token_drop = 0.0;
  bool mixup = false;
  double mixup_alpha = kDefaultMixupAlpha;
  OptimizerHyper optimizer;

  static StepConfig from(const ExperimentConfig& cfg);
};

/// Gradients of one global batch under the configured execution mode.
/// `ctx` is the step context; mixup and forward randomness derive from it.
struct ModeGradients {
  ParamBlocks grads;
  StepDiagnostics diag;
};
ModeGradients mode_gradients(const EncoderParams& params, const Batch& batch, const StepConfig& cfg,
                             const SeedContext& ctx);

/// Gradients, non-finite check, AdamW update. Throws NonFiniteError with a
/// diagnostic dump when the loss is not finite. wallclock_ms is left at 0.
StepMetrics train_step(EncoderParams& params, OptimizerState& state, const Batch& batch,
                       const StepConfig& cfg, double lr, const SeedContext& ctx);

/// Training batch for the given corpus rows; captions are corrupted when asked.
Batch assemble_batch(const Corpus& corpus, std::span<const std::size_t> indices, bool corrupt,
                     const SeedContext& step_ctx);

/// Unit-norm mean-pooled raw patch features of the training split, the
/// representation clustered by the debiased-kmeans sampler.
Matrix clustering_features(const Corpus& corpus);

/// Plans one epoch according to cfg.sampler. `virtual_sources` must be given
/// for debiased-kmeans.
EpochPlan plan_epoch(const Corpus& corpus, const ExperimentConfig& cfg, std::size_t epoch,
                     const SourceCatalog* virtual_sources = nullptr);

struct TrainResult {
  EncoderParams params;
  OptimizerState optimizer;
  std::vector<StepMetrics> metrics;
  RetrievalReport report;
  std::size_t total_steps = 0;
  std::size_t batches_per_epoch = 0;
};

/// Trains from `init` (or a fresh initialization) and evaluates on the eval split.
TrainResult train(const Corpus& corpus, const ExperimentConfig& cfg, const MetricsSink& sink = {},
                  std::optional<EncoderParams> init = std::nullopt);

/// Retrieval on the held-out split with dropout and TokenDrop off.
RetrievalReport evaluate(const EncoderParams& params, const Corpus& corpus);

/// Image and text embeddings (dropout off) of the training rows given.
std::pair<Matrix, Matrix> embed_rows(const EncoderParams& params, const Corpus& corpus,
                                     const std::vector<std::size_t>& rows);

/// First `per_source` training rows of every source, in source order.
std::vector<std::size_t> export_rows(const Corpus& corpus, std::size_t per_source);

/// Mean of logp_neg_per_source over the steps of the final epoch, per source.
std::map<int, double> final_epoch_logp(const std::vector<StepMetrics>& metrics);

/// Freezes `frozen`, reinitializes the other tower with hidden width
/// `replacement_hidden`, and trains. Throws InvalidArgument if that would leave
/// both towers frozen.
TrainResult auxiliary_retrain(const EncoderParams& params, Tower frozen, std::size_t replacement_hidden,
                              const Corpus& corpus, const ExperimentConfig& cfg,
                              const SeedContext& ctx, const MetricsSink& sink = {});

}  // namespace contra
