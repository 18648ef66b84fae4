#include "contra/engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include <fmt/core.h>

#include "contra/error.hpp"
#include "contra/kernels.hpp"
#include "contra/numerics.hpp"

namespace contra {
namespace {

// Inputs after the batch-level mixup decision has been applied.
struct Prepared {
  ImageBatch images;
  std::optional<PooledMix> text_mix;
  LabelMatrix labels;
};

Prepared prepare(const Batch& batch, const StepOptions& opts) {
  const std::size_t n = batch.size();
  if (batch.texts.count() != n) {
    throw ContractError(fmt::format("batch has {} images but {} texts", n, batch.texts.count()));
  }
  if (n == 0) throw ContractError("empty batch");
  Prepared p;
  if (opts.mixup) {
    const MixupDecision& d = *opts.mixup;
    if (d.modality == Modality::kImage) {
      p.images = apply_input_mixup(batch.images, d);
    } else {
      p.images = batch.images;
      p.text_mix = text_pooled_mix(batch.texts, d);
    }
    p.labels = mixup_labels(d);
  } else {
    p.images = batch.images;
    p.labels = LabelMatrix::identity(n);
  }
  return p;
}

std::optional<PooledMix> slice_mix(const std::optional<PooledMix>& mix, std::size_t first, std::size_t n) {
  if (!mix) return std::nullopt;
  return PooledMix{mix->lambda, mix->partners.slice(first, n)};
}

StepDiagnostics diagnostics(const Matrix& img, const Matrix& txt, double tau, LabelMatrix labels) {
  StepDiagnostics d;
  const SimilarityMatrix s = similarity_matrix(img, txt, tau);
  d.loss = infonce_loss(s, labels, labels);
  d.probs = probability_matrices(s);
  d.labels = std::move(labels);
  return d;
}

void require_finite(const ParamBlocks& g, const char* what) {
  for (const auto& b : matrix_blocks(g)) {
    if (!b.values->all_finite()) {
      throw NonFiniteError(fmt::format("{}: non-finite gradient in block {}", what, b.name));
    }
  }
  if (!std::isfinite(g.temperature)) throw NonFiniteError(fmt::format("{}: non-finite temperature gradient", what));
}

}  // namespace

std::string to_string(GatherMode mode) { return mode == GatherMode::kReserved ? "reserved" : "detached"; }

BatchGradients full_batch_gradients(const EncoderParams& params, const Batch& batch,
                                    const StepOptions& opts, const SeedContext& ctx) {
  Prepared prep = prepare(batch, opts);
  auto img = encode_images(params, prep.images, opts.token_drop_rate, ctx);
  auto txt = encode_texts(params, batch.texts, prep.text_mix, ctx);
  const double tau = params.blocks.temperature;

  BatchGradients out;
  out.diag = diagnostics(img.embeddings, txt.embeddings, tau, std::move(prep.labels));
  const LabelMatrix& y = out.diag.labels;
  const GradientSet g = analytic_gradients(out.diag.probs, y, y, img.embeddings, txt.embeddings, tau);
  out.grads = params.blocks.zeros_like();
  encoder_backward(params, img.tape, g.d_img, out.grads);
  encoder_backward(params, txt.tape, g.d_txt, out.grads);
  out.grads.temperature = g.d_tau;
  out.img_emb = std::move(img.embeddings);
  out.txt_emb = std::move(txt.embeddings);
  return out;
}

WorkerGradients simulate_workers(const EncoderParams& params, const Batch& batch, std::size_t workers,
                                 GatherMode mode, const StepOptions& opts, const SeedContext& ctx) {
  const std::size_t n = batch.size();
  const ShardPartition shards = contiguous_shards(n, workers);
  const std::size_t per = n / workers;
  Prepared prep = prepare(batch, opts);

  // Each worker forwards its own rows.
  std::vector<Encoded<ImageTape>> img_parts;
  std::vector<Encoded<TextTape>> txt_parts;
  for (std::size_t w = 0; w < workers; ++w) {
    img_parts.push_back(encode_images(params, prep.images.slice(w * per, per), opts.token_drop_rate, ctx));
    txt_parts.push_back(
        encode_texts(params, batch.texts.slice(w * per, per), slice_mix(prep.text_mix, w * per, per), ctx));
  }

  // All-gather of the embeddings.
  const std::size_t d = params.dims.embed_dim;
  Matrix img(n, d), txt(n, d);
  for (std::size_t w = 0; w < workers; ++w) {
    img.set_row_block(w * per, img_parts[w].embeddings);
    txt.set_row_block(w * per, txt_parts[w].embeddings);
  }
  const double tau = params.blocks.temperature;
  WorkerGradients out;
  out.diag = diagnostics(img, txt, tau, std::move(prep.labels));
  const ProbabilityPair& p = out.diag.probs;
  const Matrix& y = out.diag.labels.y;
  const SimilarityMatrix s = similarity_matrix(img, txt, tau);
  const double c = 1.0 / (2.0 * static_cast<double>(n) * tau);

  // Embedding gradients of each worker's loss share, then the gather backward.
  std::vector<Matrix> routed_img(workers, Matrix(per, d));
  std::vector<Matrix> routed_txt(workers, Matrix(per, d));
  double d_tau = 0.0;
  for (std::size_t w = 0; w < workers; ++w) {
    Matrix g_img(n, d), g_txt(n, d);
    double tau_share = 0.0;
    for (std::size_t j : shards[w]) {  // I2T rows held by this worker
      for (std::size_t k = 0; k < n; ++k) {
        const double a = p.i2t(j, k) - y(j, k);
        kernels::axpy(c * a, txt.row(k).data(), g_img.row(j).data(), d);
        kernels::axpy(c * a, img.row(j).data(), g_txt.row(k).data(), d);
        tau_share += a * s.s(j, k);
      }
    }
    for (std::size_t k : shards[w]) {  // T2I rows held by this worker
      for (std::size_t j = 0; j < n; ++j) {
        const double b = p.t2i(k, j) - y(k, j);
        kernels::axpy(c * b, img.row(j).data(), g_txt.row(k).data(), d);
        kernels::axpy(c * b, txt.row(k).data(), g_img.row(j).data(), d);
        tau_share += b * s.s(j, k);
      }
    }
    d_tau += -c * tau_share;
    for (std::size_t owner = 0; owner < workers; ++owner) {
      if (mode == GatherMode::kDetached && owner != w) continue;
      routed_img[owner] += g_img.row_block(owner * per, per);
      routed_txt[owner] += g_txt.row_block(owner * per, per);
    }
  }

  out.grads = params.blocks.zeros_like();
  out.d_img = Matrix(n, d);
  out.d_txt = Matrix(n, d);
  for (std::size_t w = 0; w < workers; ++w) {
    ParamBlocks local = params.blocks.zeros_like();
    encoder_backward(params, img_parts[w].tape, routed_img[w], local);
    encoder_backward(params, txt_parts[w].tape, routed_txt[w], local);
    out.grads += local;  // all-reduce, rank order
    out.d_img.set_row_block(w * per, routed_img[w]);
    out.d_txt.set_row_block(w * per, routed_txt[w]);
  }
  out.grads.temperature = d_tau;
  return out;
}

std::uint64_t checksum(const Matrix& m) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (double v : m.flat()) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= bits & 0xFF;
      h *= 0x100000001B3ULL;
      bits >>= 8;
    }
  }
  return h;
}

DgaPlan build_dga_plan(const EncoderParams& params, const Batch& batch, std::size_t sub_batch,
                       const StepOptions& opts, const SeedContext& ctx) {
  const std::size_t n = batch.size();
  if (sub_batch == 0 || n % sub_batch != 0) {
    throw InvalidArgument(fmt::format("sub-batch {} does not divide batch {}", sub_batch, n));
  }
  Prepared prep = prepare(batch, opts);
  DgaPlan plan;
  plan.global_batch = n;
  plan.sub_batch = sub_batch;
  plan.forward_seed = ctx;
  plan.tau = params.blocks.temperature;
  const std::size_t d = params.dims.embed_dim;
  plan.img_bar = Matrix(n, d);
  plan.txt_bar = Matrix(n, d);
  for (std::size_t first = 0; first < n; first += sub_batch) {
    const auto img = encode_images(params, prep.images.slice(first, sub_batch), opts.token_drop_rate, ctx);
    const auto txt = encode_texts(params, batch.texts.slice(first, sub_batch),
                                  slice_mix(prep.text_mix, first, sub_batch), ctx);
    plan.checksums.push_back(checksum(img.embeddings));
    plan.checksums.push_back(checksum(txt.embeddings));
    plan.img_bar.set_row_block(first, img.embeddings);
    plan.txt_bar.set_row_block(first, txt.embeddings);
  }
  plan.diag = diagnostics(plan.img_bar, plan.txt_bar, plan.tau, std::move(prep.labels));
  const Matrix g = coefficient_matrix(plan.diag.probs, plan.diag.labels, plan.diag.labels);
  const double inv_sqrt_tau = 1.0 / std::sqrt(plan.tau);
  plan.left_img = matmul(g, plan.txt_bar) * inv_sqrt_tau;
  plan.left_txt = Matrix(n, d);
  matmul_tn_acc(g, plan.img_bar, plan.left_txt);
  plan.left_txt *= inv_sqrt_tau;
  return plan;
}

ParamBlocks dga_accumulate(const EncoderParams& params, const Batch& batch, const DgaPlan& plan,
                           const StepOptions& opts, const DgaOptions& dga) {
  if (batch.size() != plan.global_batch) throw ContractError("DGA plan was built for a different batch");
  const SeedContext ctx = dga.pass2_seed.value_or(plan.forward_seed);
  Prepared prep = prepare(batch, opts);
  const std::size_t n = plan.global_batch;
  const std::size_t m = plan.sub_batch;
  const double tau = params.blocks.temperature;
  const double sqrt_tau = std::sqrt(tau);
  const double scale = 1.0 / (2.0 * static_cast<double>(n) * sqrt_tau);

  ParamBlocks grads = params.blocks.zeros_like();
  double surrogate = 0.0;  // sum(left_I * I + left_T * T)
  for (std::size_t first = 0, sub = 0; first < n; first += m, ++sub) {
    auto img = encode_images(params, prep.images.slice(first, m), opts.token_drop_rate, ctx);
    auto txt = encode_texts(params, batch.texts.slice(first, m), slice_mix(prep.text_mix, first, m), ctx);
    if (dga.verify_stability &&
        (checksum(img.embeddings) != plan.checksums[2 * sub] ||
         checksum(txt.embeddings) != plan.checksums[2 * sub + 1])) {
      throw StabilityViolation(fmt::format(
          "sub-batch {} (rows {}..{}) embeds differently in the gradient pass than in the caching pass; "
          "forward randomness is not reproduced",
          sub, first, first + m - 1));
    }
    const Matrix left_i = plan.left_img.row_block(first, m);
    const Matrix left_t = plan.left_txt.row_block(first, m);
    surrogate += kernels::dot(left_i.data(), img.embeddings.data(), left_i.size());
    surrogate += kernels::dot(left_t.data(), txt.embeddings.data(), left_t.size());
    encoder_backward(params, img.tape, left_i * scale, grads);
    encoder_backward(params, txt.tape, left_t * scale, grads);
  }
  // d/dtau of surrogate / (2 N sqrt(tau)) with the cached rows held constant.
  grads.temperature = -surrogate / (4.0 * static_cast<double>(n) * tau * sqrt_tau);
  return grads;
}

DgaGradients dga_gradients(const EncoderParams& params, const Batch& batch, const DgaOptions& dga,
                           const StepOptions& opts, const SeedContext& ctx) {
  DgaPlan plan = build_dga_plan(params, batch, dga.sub_batch, opts, ctx);
  DgaGradients out;
  out.grads = dga_accumulate(params, batch, plan, opts, dga);
  out.diag = std::move(plan.diag);
  return out;
}

OptimizerState OptimizerState::for_params(const EncoderParams& params) {
  return {params.blocks.zeros_like(), params.blocks.zeros_like(), 0};
}

double cosine_lr(std::size_t step, std::size_t total_steps, double base, double min) {
  if (step > total_steps) throw InvalidArgument(fmt::format("step {} beyond schedule of {}", step, total_steps));
  if (total_steps == 0) return base;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return min + 0.5 * (base - min) * (1.0 + std::cos(std::acos(-1.0) * progress));
}

void adamw_update(EncoderParams& params, const ParamBlocks& grads, OptimizerState& state, double lr,
                  const OptimizerHyper& h) {
  require_finite(grads, "adamw_update");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(h.beta1, t);
  const double bc2 = 1.0 - std::pow(h.beta2, t);

  auto p_blocks = matrix_blocks(params.blocks);
  auto g_blocks = matrix_blocks(grads);
  auto m_blocks = matrix_blocks(state.first_moment);
  auto v_blocks = matrix_blocks(state.second_moment);
  for (std::size_t b = 0; b < p_blocks.size(); ++b) {
    if (params.frozen(p_blocks[b].tower)) continue;
    auto p = p_blocks[b].values->flat();
    auto g = g_blocks[b].values->flat();
    auto m = m_blocks[b].values->flat();
    auto v = v_blocks[b].values->flat();
    if (p.size() != g.size()) {
      throw ContractError(fmt::format("gradient block {} has {} values, parameter has {}",
                                      p_blocks[b].name, g.size(), p.size()));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      const double step = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + h.eps);
      p[i] -= lr * (step + h.weight_decay * p[i]);
    }
  }
  double& m = state.first_moment.temperature;
  double& v = state.second_moment.temperature;
  const double g = grads.temperature;
  m = h.beta1 * m + (1.0 - h.beta1) * g;
  v = h.beta2 * v + (1.0 - h.beta2) * g * g;
  params.blocks.temperature -= lr * (m / bc1) / (std::sqrt(v / bc2) + h.eps);
  params.blocks.temperature = std::max(params.blocks.temperature, kMinTemperature);
}

double gradient_norm(const ParamBlocks& grads) {
  double sq = grads.temperature * grads.temperature;
  for (const auto& b : matrix_blocks(grads)) sq += kernels::dot(b.values->data(), b.values->data(), b.values->size());
  return std::sqrt(sq);
}

double gradient_relative_error(const ParamBlocks& a, const ParamBlocks& b) {
  double worst = relative_error(a.temperature, b.temperature);
  const auto ab = matrix_blocks(a);
  const auto bb = matrix_blocks(b);
  for (std::size_t i = 0; i < ab.size(); ++i) {
    worst = std::max(worst, relative_error(ab[i].values->flat(), bb[i].values->flat()));
  }
  return worst;
}

}  // namespace contra
