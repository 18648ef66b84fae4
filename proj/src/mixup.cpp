#include "contra/mixup.hpp"

#include <fmt/core.h>

#include "contra/error.hpp"

namespace contra {

MixupDecision sample_mixup_decision(double alpha, std::size_t batch, const SeedContext& ctx) {
  if (!(alpha > 0.0)) throw InvalidArgument(fmt::format("mixup alpha {} must be positive", alpha));
  if (batch == 0) throw InvalidArgument("mixup needs a non-empty batch");
  Rng rng(ctx.derive("mixup"));
  MixupDecision d;
  d.gamma = rng.uniform();
  d.modality = modality_for_coin(d.gamma);
  d.lambda = rng.beta(alpha, alpha);
  d.alpha = alpha;
  d.batch = batch;
  return d;
}

ImageBatch apply_input_mixup(const ImageBatch& x, const MixupDecision& d) {
  if (d.modality != Modality::kImage) throw ContractError("input mixup requested for a text coin");
  if (d.batch != x.count) {
    throw ContractError(fmt::format("mixup decision for {} samples applied to {}", d.batch, x.count));
  }
  ImageBatch out = x;
  const std::size_t per_sample = x.patches * x.features.cols();
  const double* src = x.features.data();
  double* dst = out.features.data();
  for (std::size_t j = 0; j < x.count; ++j) {
    const double* a = src + j * per_sample;
    const double* b = src + d.partner(j) * per_sample;
    double* o = dst + j * per_sample;
    for (std::size_t i = 0; i < per_sample; ++i) o[i] = d.lambda * a[i] + (1.0 - d.lambda) * b[i];
  }
  return out;
}

PooledMix text_pooled_mix(const TextBatch& x, const MixupDecision& d) {
  if (d.modality != Modality::kText) throw ContractError("pooled text mix requested for an image coin");
  if (d.batch != x.count()) {
    throw ContractError(fmt::format("mixup decision for {} samples applied to {}", d.batch, x.count()));
  }
  PooledMix mix;
  mix.lambda = d.lambda;
  mix.partners.row_offset = x.row_offset;
  mix.partners.sequences.reserve(x.count());
  for (std::size_t j = 0; j < x.count(); ++j) mix.partners.sequences.push_back(x.sequences[d.partner(j)]);
  return mix;
}

LabelMatrix mixup_labels(const MixupDecision& d) { return LabelMatrix::blend(d.lambda, d.batch); }

double mixup_loss(const Matrix& emb_mixed, const Matrix& emb_plain, const MixupDecision& d, double tau) {
  if (emb_mixed.rows() != emb_plain.rows() || emb_mixed.rows() != d.batch) {
    throw ContractError("mixup_loss: batch sizes disagree");
  }
  const bool image_mixed = d.modality == Modality::kImage;
  const Matrix& img = image_mixed ? emb_mixed : emb_plain;
  const Matrix& txt = image_mixed ? emb_plain : emb_mixed;
  const SimilarityMatrix s = similarity_matrix(img, txt, tau);
  const LabelMatrix id = LabelMatrix::identity(d.batch);
  const LabelMatrix mirror = LabelMatrix::mirror(d.batch);
  return d.lambda * infonce_loss(s, id, id) + (1.0 - d.lambda) * infonce_loss(s, mirror, mirror);
}

GradientSet mixup_gradients(const ProbabilityPair& p, const MixupDecision& d, const Matrix& img,
                            const Matrix& txt, double tau) {
  const LabelMatrix y = mixup_labels(d);
  return analytic_gradients(p, y, y, img, txt, tau);
}

}  // namespace contra
