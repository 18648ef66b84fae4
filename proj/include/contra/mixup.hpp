#pragma once

// Coin-flipping mixup: one coin per batch picks the single modality to mix, a
// single lambda ~ Beta(alpha, alpha) is shared by the batch, and sample j is
// mixed with its mirror partner r(j) = N-1-j.

#include <cstddef>

#include "contra/contrastive.hpp"
#include "contra/encoders.hpp"
#include "contra/rng.hpp"

namespace contra {

inline constexpr double kDefaultMixupAlpha = 0.1;

enum class Modality { kImage, kText };

/// Image when the coin exceeds 0.5, text otherwise.
constexpr Modality modality_for_coin(double gamma) noexcept {
  return gamma > 0.5 ? Modality::kImage : Modality::kText;
}

struct MixupDecision {
  double gamma = 0.0;
  Modality modality = Modality::kText;
  double lambda = 1.0;
  double alpha = kDefaultMixupAlpha;
  std::size_t batch = 0;

  std::size_t partner(std::size_t j) const noexcept { return batch - 1 - j; }
};

/// Draws gamma ~ U[0,1) and lambda ~ Beta(alpha, alpha) from ctx's "mixup" stream.
MixupDecision sample_mixup_decision(double alpha, std::size_t batch, const SeedContext& ctx);

/// x~_j = lambda x_j + (1 - lambda) x_{r(j)} on raw patch features.
ImageBatch apply_input_mixup(const ImageBatch& x, const MixupDecision& d);

/// Pooled-representation mix for the text tower: partners are the mirrored sequences.
PooledMix text_pooled_mix(const TextBatch& x, const MixupDecision& d);

/// lambda * Y_identity + (1 - lambda) * Y_mirror, used for both directions.
LabelMatrix mixup_labels(const MixupDecision& d);

/// lambda * L(identity labels) + (1 - lambda) * L(mirror labels), each a full
/// bidirectional InfoNCE with 1/(2N) normalization.
double mixup_loss(const Matrix& emb_mixed, const Matrix& emb_plain, const MixupDecision& d, double tau);

/// Gradient of mixup_loss: analytic_gradients under the blended labels.
GradientSet mixup_gradients(const ProbabilityPair& p, const MixupDecision& d, const Matrix& img,
                            const Matrix& txt, double tau);

}  // namespace contra
