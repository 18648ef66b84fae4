#include "contra/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/core.h>

#include "contra/error.hpp"
#include "contra/kernels.hpp"

namespace contra {
namespace {

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double bound, const SeedContext& ctx) {
  Rng rng(ctx);
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = rng.uniform(-bound, bound);
  return m;
}

void tanh_inplace(Matrix& m) {
  for (double& v : m.flat()) v = std::tanh(v);
}

// Shared head: hidden linear + tanh + dropout -> output linear -> normalize.
struct HeadOut {
  Matrix hidden_act;
  Matrix mask;
  Matrix dropped;
  NormalizedRows out;
};

HeadOut run_head(const Matrix& pooled, const Matrix& w_hidden, const Matrix& w_out, double dropout,
                 const SeedContext& mask_ctx, std::size_t row_offset) {
  HeadOut h;
  h.hidden_act = matmul(pooled, w_hidden);
  tanh_inplace(h.hidden_act);
  h.mask = seeded_dropout_mask(pooled.rows(), w_hidden.cols(), dropout, mask_ctx, row_offset);
  h.dropped = h.hidden_act;
  for (std::size_t i = 0; i < h.dropped.size(); ++i) h.dropped.flat()[i] *= h.mask.flat()[i];
  h.out = l2_normalize_rows(matmul(h.dropped, w_out));
  return h;
}

// Backward through the head; returns the gradient w.r.t. the pooled input.
Matrix head_backward(const Matrix& pooled, const Matrix& hidden_act, const Matrix& mask,
                     const Matrix& dropped, const NormalizationContext& norm, const Matrix& embeddings,
                     const Matrix& upstream, const Matrix& w_hidden, const Matrix& w_out,
                     Matrix& g_hidden, Matrix& g_out) {
  const Matrix d_raw = l2_normalize_backward(norm, embeddings, upstream);
  matmul_tn_acc(dropped, d_raw, g_out);
  Matrix d_pre = matmul_nt(d_raw, w_out);
  for (std::size_t i = 0; i < d_pre.size(); ++i) {
    const double a = hidden_act.flat()[i];
    d_pre.flat()[i] *= mask.flat()[i] * (1.0 - a * a);
  }
  matmul_tn_acc(pooled, d_pre, g_hidden);
  return matmul_nt(d_pre, w_hidden);
}

Matrix pool_tokens(const Matrix& table, const std::vector<std::vector<std::uint32_t>>& seqs,
                   std::string_view what) {
  Matrix pooled(seqs.size(), table.cols());
  for (std::size_t j = 0; j < seqs.size(); ++j) {
    const auto& seq = seqs[j];
    if (seq.empty()) throw DegenerateInput(fmt::format("{} sequence {} is empty", what, j));
    auto dst = pooled.row(j);
    for (std::uint32_t tok : seq) {
      if (tok >= table.rows()) {
        throw ContractError(fmt::format("{} sequence {} has token {} >= vocab {}", what, j, tok,
                                        table.rows()));
      }
      kernels::axpy(1.0, table.row(tok).data(), dst.data(), dst.size());
    }
    kernels::scale(1.0 / static_cast<double>(seq.size()), dst.data(), dst.size());
  }
  return pooled;
}

void scatter_tokens(const std::vector<std::vector<std::uint32_t>>& seqs, const Matrix& d_pooled,
                    double weight, Matrix& g_table) {
  for (std::size_t j = 0; j < seqs.size(); ++j) {
    const double share = weight / static_cast<double>(seqs[j].size());
    for (std::uint32_t tok : seqs[j]) {
      kernels::axpy(share, d_pooled.row(j).data(), g_table.row(tok).data(), g_table.cols());
    }
  }
}

}  // namespace

ParamBlocks ParamBlocks::zeros_like() const {
  ParamBlocks z;
  z.image_patch = Matrix(image_patch.rows(), image_patch.cols());
  z.image_hidden = Matrix(image_hidden.rows(), image_hidden.cols());
  z.image_out = Matrix(image_out.rows(), image_out.cols());
  z.text_embed = Matrix(text_embed.rows(), text_embed.cols());
  z.text_hidden = Matrix(text_hidden.rows(), text_hidden.cols());
  z.text_out = Matrix(text_out.rows(), text_out.cols());
  z.temperature = 0.0;
  return z;
}

std::size_t ParamBlocks::parameter_count() const {
  std::size_t n = 1;
  for (const auto& b : matrix_blocks(*this)) n += b.values->size();
  return n;
}

ParamBlocks& ParamBlocks::operator+=(const ParamBlocks& o) {
  auto mine = matrix_blocks(*this);
  auto theirs = matrix_blocks(o);
  for (std::size_t i = 0; i < mine.size(); ++i) *mine[i].values += *theirs[i].values;
  temperature += o.temperature;
  return *this;
}

std::array<BlockRef, 6> matrix_blocks(ParamBlocks& p) {
  return {{{"image.patch", Tower::kImage, &p.image_patch},
           {"image.hidden", Tower::kImage, &p.image_hidden},
           {"image.out", Tower::kImage, &p.image_out},
           {"text.embed", Tower::kText, &p.text_embed},
           {"text.hidden", Tower::kText, &p.text_hidden},
           {"text.out", Tower::kText, &p.text_out}}};
}

std::array<ConstBlockRef, 6> matrix_blocks(const ParamBlocks& p) {
  return {{{"image.patch", Tower::kImage, &p.image_patch},
           {"image.hidden", Tower::kImage, &p.image_hidden},
           {"image.out", Tower::kImage, &p.image_out},
           {"text.embed", Tower::kText, &p.text_embed},
           {"text.hidden", Tower::kText, &p.text_hidden},
           {"text.out", Tower::kText, &p.text_out}}};
}

std::vector<double> flatten(const ParamBlocks& p) {
  std::vector<double> flat;
  flat.reserve(p.parameter_count());
  for (const auto& b : matrix_blocks(p)) {
    flat.insert(flat.end(), b.values->flat().begin(), b.values->flat().end());
  }
  flat.push_back(p.temperature);
  return flat;
}

void unflatten(std::span<const double> flat, ParamBlocks& p) {
  if (flat.size() != p.parameter_count()) {
    throw ContractError(fmt::format("unflatten: {} values for {} parameters", flat.size(),
                                    p.parameter_count()));
  }
  std::size_t at = 0;
  for (auto& b : matrix_blocks(p)) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(at), b.values->size(), b.values->data());
    at += b.values->size();
  }
  p.temperature = flat[at];
}

EncoderParams init_params(const EncoderDims& d, const SeedContext& ctx) {
  if (d.patches == 0 || d.patch_dim == 0 || d.image_hidden == 0 || d.text_hidden == 0 ||
      d.vocab == 0 || d.embed_dim == 0) {
    throw InvalidArgument("encoder dimensions must be positive");
  }
  EncoderParams p;
  p.dims = d;
  p.blocks.temperature = kInitialTemperature;
  reinit_tower(p, Tower::kImage, d.image_hidden, ctx);
  reinit_tower(p, Tower::kText, d.text_hidden, ctx);
  return p;
}

void reinit_tower(EncoderParams& p, Tower tower, std::size_t hidden, const SeedContext& ctx) {
  if (hidden == 0) throw InvalidArgument("hidden width must be positive");
  const auto bound = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
  auto& b = p.blocks;
  const auto& d = p.dims;
  if (tower == Tower::kImage) {
    p.dims.image_hidden = hidden;
    b.image_patch = uniform_matrix(d.patch_dim, hidden, bound(d.patch_dim), ctx.derive("image.patch"));
    b.image_hidden = uniform_matrix(hidden, hidden, bound(hidden), ctx.derive("image.hidden"));
    b.image_out = uniform_matrix(hidden, d.embed_dim, bound(hidden), ctx.derive("image.out"));
  } else if (tower == Tower::kText) {
    p.dims.text_hidden = hidden;
    // A lookup row has a single active input, so fan_in is 1.
    b.text_embed = uniform_matrix(d.vocab, hidden, 1.0, ctx.derive("text.embed"));
    b.text_hidden = uniform_matrix(hidden, hidden, bound(hidden), ctx.derive("text.hidden"));
    b.text_out = uniform_matrix(hidden, d.embed_dim, bound(hidden), ctx.derive("text.out"));
  } else {
    throw InvalidArgument("reinit_tower needs the image or text tower");
  }
}

ImageBatch ImageBatch::slice(std::size_t first, std::size_t n) const {
  if (first + n > count) throw ContractError("image slice out of range");
  return {n, patches, features.row_block(first * patches, n * patches), row_offset + first};
}

TextBatch TextBatch::slice(std::size_t first, std::size_t n) const {
  if (first + n > sequences.size()) throw ContractError("text slice out of range");
  TextBatch out;
  out.sequences.assign(sequences.begin() + static_cast<std::ptrdiff_t>(first),
                       sequences.begin() + static_cast<std::ptrdiff_t>(first + n));
  out.row_offset = row_offset + first;
  return out;
}

TextBatch::Padded TextBatch::padded() const {
  Padded p;
  for (const auto& s : sequences) p.max_len = std::max(p.max_len, s.size());
  p.ids.assign(sequences.size() * p.max_len, 0);
  p.mask.assign(sequences.size() * p.max_len, 0);
  for (std::size_t j = 0; j < sequences.size(); ++j) {
    for (std::size_t t = 0; t < sequences[j].size(); ++t) {
      p.ids[j * p.max_len + t] = sequences[j][t];
      p.mask[j * p.max_len + t] = 1;
    }
  }
  return p;
}

std::size_t token_drop_count(double rate, std::size_t patches) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw InvalidArgument(fmt::format("token drop rate {} outside [0, 1)", rate));
  }
  return static_cast<std::size_t>(std::floor(rate * static_cast<double>(patches) + 1e-9));
}

Encoded<ImageTape> encode_images(const EncoderParams& p, const ImageBatch& x, double token_drop_rate,
                                 const SeedContext& ctx) {
  const auto& w = p.blocks;
  if (x.features.cols() != w.image_patch.rows() || x.features.rows() != x.count * x.patches) {
    throw ContractError(fmt::format("image batch {}x{}x{} does not match patch_dim {}", x.count,
                                    x.patches, x.features.cols(), w.image_patch.rows()));
  }
  const std::size_t drop = token_drop_count(token_drop_rate, x.patches);
  if (drop >= x.patches) {
    throw DegenerateInput(fmt::format("token drop removes all {} patches", x.patches));
  }
  ImageTape t;
  t.count = x.count;
  t.kept = x.patches - drop;
  t.kept_patches.resize(x.count * t.kept);

  const SeedContext drop_ctx = ctx.derive("image.tokendrop");
  std::vector<std::size_t> order(x.patches);
  std::vector<double> keys(x.patches);
  for (std::size_t i = 0; i < x.count; ++i) {
    std::iota(order.begin(), order.end(), 0);
    if (drop > 0) {
      for (std::size_t q = 0; q < x.patches; ++q) keys[q] = drop_ctx.uniform(x.row_offset + i, q);
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return keys[a] < keys[b] || (keys[a] == keys[b] && a < b);
      });
      std::sort(order.begin() + static_cast<std::ptrdiff_t>(drop), order.end());
    }
    std::copy(order.begin() + static_cast<std::ptrdiff_t>(drop), order.end(),
              t.kept_patches.begin() + static_cast<std::ptrdiff_t>(i * t.kept));
  }

  t.inputs = Matrix(x.count * t.kept, x.features.cols());
  for (std::size_t r = 0; r < t.inputs.rows(); ++r) {
    const auto src = x.patch(r / t.kept, t.kept_patches[r]);
    std::copy(src.begin(), src.end(), t.inputs.row(r).begin());
  }
  t.patch_act = matmul(t.inputs, w.image_patch);
  tanh_inplace(t.patch_act);

  t.pooled = Matrix(x.count, w.image_patch.cols());
  const double inv_kept = 1.0 / static_cast<double>(t.kept);
  for (std::size_t i = 0; i < x.count; ++i) {
    auto dst = t.pooled.row(i);
    for (std::size_t q = 0; q < t.kept; ++q) {
      kernels::axpy(inv_kept, t.patch_act.row(i * t.kept + q).data(), dst.data(), dst.size());
    }
  }

  HeadOut h = run_head(t.pooled, w.image_hidden, w.image_out, p.dropout, ctx.derive("image.dropout"),
                       x.row_offset);
  t.hidden_act = std::move(h.hidden_act);
  t.dropout_mask = std::move(h.mask);
  t.dropped = std::move(h.dropped);
  t.norm = std::move(h.out.context);
  t.embeddings = std::move(h.out.rows);
  Matrix emb = t.embeddings;
  return {std::move(emb), std::move(t)};
}

Encoded<TextTape> encode_texts(const EncoderParams& p, const TextBatch& x,
                               const std::optional<PooledMix>& mix, const SeedContext& ctx) {
  const auto& w = p.blocks;
  TextTape t;
  t.sequences = x.sequences;
  t.pooled = pool_tokens(w.text_embed, x.sequences, "text");
  if (mix) {
    if (mix->partners.count() != x.count()) {
      throw ContractError(fmt::format("pooled mix has {} partners for {} texts",
                                      mix->partners.count(), x.count()));
    }
    if (!(mix->lambda >= 0.0 && mix->lambda <= 1.0)) {
      throw InvalidArgument(fmt::format("mix lambda {} outside [0, 1]", mix->lambda));
    }
    t.lambda = mix->lambda;
    t.partner_sequences = mix->partners.sequences;
    const Matrix partner_pooled = pool_tokens(w.text_embed, t.partner_sequences, "partner");
    kernels::scale(t.lambda, t.pooled.data(), t.pooled.size());
    kernels::axpy(1.0 - t.lambda, partner_pooled.data(), t.pooled.data(), t.pooled.size());
  }

  HeadOut h = run_head(t.pooled, w.text_hidden, w.text_out, p.dropout, ctx.derive("text.dropout"),
                       x.row_offset);
  t.hidden_act = std::move(h.hidden_act);
  t.dropout_mask = std::move(h.mask);
  t.dropped = std::move(h.dropped);
  t.norm = std::move(h.out.context);
  t.embeddings = std::move(h.out.rows);
  Matrix emb = t.embeddings;
  return {std::move(emb), std::move(t)};
}

void encoder_backward(const EncoderParams& p, const ImageTape& t, const Matrix& upstream,
                      ParamBlocks& g) {
  if (upstream.rows() != t.embeddings.rows() || upstream.cols() != t.embeddings.cols()) {
    throw ContractError(fmt::format("upstream {}x{} does not match image tape {}x{}", upstream.rows(),
                                    upstream.cols(), t.embeddings.rows(), t.embeddings.cols()));
  }
  if (p.freeze_image) return;
  const auto& w = p.blocks;
  const Matrix d_pooled = head_backward(t.pooled, t.hidden_act, t.dropout_mask, t.dropped, t.norm,
                                        t.embeddings, upstream, w.image_hidden, w.image_out,
                                        g.image_hidden, g.image_out);
  Matrix d_patch(t.patch_act.rows(), t.patch_act.cols());
  const double inv_kept = 1.0 / static_cast<double>(t.kept);
  for (std::size_t r = 0; r < d_patch.rows(); ++r) {
    const auto src = d_pooled.row(r / t.kept);
    const auto act = t.patch_act.row(r);
    auto dst = d_patch.row(r);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] = src[c] * inv_kept * (1.0 - act[c] * act[c]);
  }
  matmul_tn_acc(t.inputs, d_patch, g.image_patch);
}

void encoder_backward(const EncoderParams& p, const TextTape& t, const Matrix& upstream,
                      ParamBlocks& g) {
  if (upstream.rows() != t.embeddings.rows() || upstream.cols() != t.embeddings.cols()) {
    throw ContractError(fmt::format("upstream {}x{} does not match text tape {}x{}", upstream.rows(),
                                    upstream.cols(), t.embeddings.rows(), t.embeddings.cols()));
  }
  if (p.freeze_text) return;
  const auto& w = p.blocks;
  const Matrix d_pooled = head_backward(t.pooled, t.hidden_act, t.dropout_mask, t.dropped, t.norm,
                                        t.embeddings, upstream, w.text_hidden, w.text_out,
                                        g.text_hidden, g.text_out);
  scatter_tokens(t.sequences, d_pooled, t.lambda, g.text_embed);
  if (!t.partner_sequences.empty()) {
    scatter_tokens(t.partner_sequences, d_pooled, 1.0 - t.lambda, g.text_embed);
  }
}

}  // namespace contra
