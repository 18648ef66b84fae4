#pragma once

// Toy dual encoders with hand-written backward passes.
//
// Image tower: TokenDrop over patches -> per-patch linear + tanh -> mean pool
//   -> hidden linear + tanh + dropout -> output linear -> l2 normalize.
// Text tower: embedding lookup -> mean pool over tokens -> optional pooled
//   mixup with partner sequences -> hidden linear + tanh + dropout -> output
//   linear -> l2 normalize.
//
// All randomness (TokenDrop choice, dropout masks) is drawn with counter draws
// keyed on the global row index (batch.row_offset + local row). A sub-batch
// forward therefore reproduces exactly the rows of a full-batch forward under
// the same SeedContext.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "contra/matrix.hpp"
#include "contra/numerics.hpp"
#include "contra/rng.hpp"

namespace contra {

inline constexpr double kInitialTemperature = 0.02;
inline constexpr double kMinTemperature = 1e-4;

struct EncoderDims {
  std::size_t patches = 8;
  std::size_t patch_dim = 16;
  std::size_t image_hidden = 64;
  std::size_t text_hidden = 64;
  std::size_t vocab = 256;
  std::size_t embed_dim = 512;

  friend bool operator==(const EncoderDims&, const EncoderDims&) = default;
};

enum class Tower { kImage, kText, kShared };

/// Every trainable tensor. Also used for gradients and optimizer moments.
struct ParamBlocks {
  Matrix image_patch;   // patch_dim x image_hidden
  Matrix image_hidden;  // image_hidden x image_hidden
  Matrix image_out;     // image_hidden x embed_dim
  Matrix text_embed;    // vocab x text_hidden
  Matrix text_hidden;   // text_hidden x text_hidden
  Matrix text_out;      // text_hidden x embed_dim
  double temperature = 0.0;

  /// Same shapes, all zeros.
  ParamBlocks zeros_like() const;
  std::size_t parameter_count() const;

  ParamBlocks& operator+=(const ParamBlocks& o);

  friend bool operator==(const ParamBlocks&, const ParamBlocks&) = default;
};

struct BlockRef {
  std::string_view name;
  Tower tower;
  Matrix* values;
};
struct ConstBlockRef {
  std::string_view name;
  Tower tower;
  const Matrix* values;
};

/// The six matrix blocks in a fixed order (temperature excluded).
std::array<BlockRef, 6> matrix_blocks(ParamBlocks& p);
std::array<ConstBlockRef, 6> matrix_blocks(const ParamBlocks& p);

/// Flat copy: matrix blocks in matrix_blocks order, then temperature.
std::vector<double> flatten(const ParamBlocks& p);
void unflatten(std::span<const double> flat, ParamBlocks& p);

struct EncoderParams {
  EncoderDims dims;
  ParamBlocks blocks;
  bool freeze_image = false;
  bool freeze_text = false;
  double dropout = 0.0;

  bool frozen(Tower t) const noexcept {
    return (t == Tower::kImage && freeze_image) || (t == Tower::kText && freeze_text);
  }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, embedding table in (-1, 1),
/// temperature 0.02. Each block draws from its own child stream of ctx.
EncoderParams init_params(const EncoderDims& dims, const SeedContext& ctx);

/// Re-draws one tower with possibly different hidden width; the other tower is untouched.
void reinit_tower(EncoderParams& params, Tower tower, std::size_t hidden, const SeedContext& ctx);

/// N samples x P patches x patch_dim features, stored as an (N*P) x patch_dim matrix.
struct ImageBatch {
  std::size_t count = 0;
  std::size_t patches = 0;
  Matrix features;
  /// Global index of row 0 within the step's batch.
  std::size_t row_offset = 0;

  std::span<const double> patch(std::size_t sample, std::size_t p) const {
    return features.row(sample * patches + p);
  }
  ImageBatch slice(std::size_t first, std::size_t n) const;
};

struct TextBatch {
  std::vector<std::vector<std::uint32_t>> sequences;
  std::size_t row_offset = 0;

  std::size_t count() const noexcept { return sequences.size(); }
  TextBatch slice(std::size_t first, std::size_t n) const;
  struct Padded {
    std::size_t max_len = 0;
    std::vector<std::uint32_t> ids;   // count x max_len, pad id 0
    std::vector<std::uint8_t> mask;   // 1 where a real token sits
  };
  Padded padded() const;
};

/// Mixing of the pooled text representation: v_j <- lambda v_j + (1 - lambda) v'_j
/// where v'_j pools partners.sequences[j].
struct PooledMix {
  double lambda = 1.0;
  TextBatch partners;
};

struct ImageTape {
  std::size_t count = 0;
  std::size_t kept = 0;                    // surviving patches per sample
  std::vector<std::size_t> kept_patches;   // count x kept, ascending per sample
  Matrix inputs;                           // (count*kept) x patch_dim
  Matrix patch_act;                        // (count*kept) x image_hidden, after tanh
  Matrix pooled;                           // count x image_hidden
  Matrix hidden_act;                       // count x image_hidden, after tanh
  Matrix dropout_mask;                     // count x image_hidden
  Matrix dropped;                          // hidden_act * mask
  NormalizationContext norm;
  Matrix embeddings;                       // count x embed_dim, unit rows
};

struct TextTape {
  std::vector<std::vector<std::uint32_t>> sequences;
  std::vector<std::vector<std::uint32_t>> partner_sequences;  // empty without mix
  double lambda = 1.0;
  Matrix pooled;        // after mixing
  Matrix hidden_act;
  Matrix dropout_mask;
  Matrix dropped;
  NormalizationContext norm;
  Matrix embeddings;
};

template <typename Tape>
struct Encoded {
  Matrix embeddings;
  Tape tape;
};

/// Number of patches TokenDrop removes: floor(rate * P).
std::size_t token_drop_count(double rate, std::size_t patches);

Encoded<ImageTape> encode_images(const EncoderParams& p, const ImageBatch& x, double token_drop_rate,
                                 const SeedContext& ctx);

Encoded<TextTape> encode_texts(const EncoderParams& p, const TextBatch& x,
                               const std::optional<PooledMix>& mix, const SeedContext& ctx);

/// Accumulates parameter gradients into grads. No-op for a frozen tower.
void encoder_backward(const EncoderParams& p, const ImageTape& tape, const Matrix& upstream,
                      ParamBlocks& grads);
void encoder_backward(const EncoderParams& p, const TextTape& tape, const Matrix& upstream,
                      ParamBlocks& grads);

}  // namespace contra
