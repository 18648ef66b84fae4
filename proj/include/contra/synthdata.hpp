#pragma once

// Synthetic multi-source image-text corpus with controllable dataset bias.
//
// Every pair shares a latent concept z ~ N(0, I_dz). Images are P patches,
// patch p = A_p z + strength_s * offset_s + noise. Captions mix content tokens
// (sign/magnitude buckets of random coordinates of z) with source-specific style
// tokens, and each source has its own caption-length range. The held-out eval
// split uses zero style strength, no style tokens and a neutral length range.
//
// Vocabulary layout: id 0 is MASK, content ids start at 1
// (1 + coord * resolution + bucket), style ranges follow.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "contra/encoders.hpp"
#include "contra/rng.hpp"
#include "contra/sampling.hpp"

namespace contra {

inline constexpr std::uint32_t kMaskToken = 0;
inline constexpr std::uint32_t kFirstContentToken = 1;

struct SourceSpec {
  std::size_t count = 1000;
  /// Direction of the image style shift; drawn as a random unit vector when empty.
  std::vector<double> style_offset;
  double style_strength = 0.0;
  std::size_t min_len = 8;
  std::size_t max_len = 12;
  double style_token_rate = 0.0;
  /// First style id; 0 means "place after the previous range".
  std::uint32_t style_token_first = 0;
  std::uint32_t style_token_count = 8;

  friend bool operator==(const SourceSpec&, const SourceSpec&) = default;
};

struct CorpusSpec {
  std::vector<SourceSpec> sources;
  std::size_t latent_dim = 16;
  std::size_t patches = 8;
  std::size_t patch_dim = 16;
  std::size_t vocab = 0;             // 0: smallest vocabulary that fits the layout
  std::size_t content_resolution = 6;  // buckets per coordinate, even
  double noise_scale = 0.3;
  std::size_t eval_count = 1000;
  std::size_t eval_min_len = 0;      // 0: derived from the sources
  std::size_t eval_max_len = 0;

  /// Content ids occupy [1, 1 + latent_dim * content_resolution).
  std::uint32_t content_end() const noexcept;
  /// Assigns style ranges and vocab where left at 0, then validates; throws InvalidArgument.
  CorpusSpec resolved() const;

  friend bool operator==(const CorpusSpec&, const CorpusSpec&) = default;
};

struct Sample {
  std::vector<double> image;          // patches x patch_dim, row-major
  std::vector<std::uint32_t> tokens;
  int source = -1;                    // -1 for the eval split
  std::uint64_t concept_id = 0;
  std::vector<double> latent;         // z, hidden ground truth

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Corpus {
  CorpusSpec spec;  // resolved
  std::vector<Sample> train;
  std::vector<Sample> eval;

  /// Catalog over train indices, one entry per source id.
  SourceCatalog catalog() const;
  EncoderDims encoder_dims(std::size_t image_hidden, std::size_t text_hidden,
                           std::size_t embed_dim) const;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

/// Bucket index in [0, resolution) for one latent coordinate.
std::size_t content_bucket(double z, std::size_t resolution) noexcept;

Corpus generate_corpus(const CorpusSpec& spec, const SeedContext& ctx);

ImageBatch make_image_batch(const std::vector<Sample>& samples, std::span<const std::size_t> indices,
                            std::size_t patches, std::size_t patch_dim);
TextBatch make_text_batch(const std::vector<Sample>& samples, std::span<const std::size_t> indices);

struct CorruptionConfig {
  double select_rate = 0.2;
  double mask_prob = 0.5;
  double replace_prob = 0.1;
  double delete_prob = 0.4;
  std::uint32_t mask_id = kMaskToken;
  std::uint32_t vocab = 0;  // replacements are uniform over [1, vocab)
};

struct CorruptionTrace {
  std::size_t seen = 0;
  std::size_t selected = 0;
  std::size_t masked = 0;
  std::size_t replaced = 0;
  std::size_t deleted = 0;
  std::size_t restored = 0;  // sequences that lost every token and got one back
};

/// Selects each token with select_rate; a selected token is masked, replaced by
/// a uniform non-mask id, or deleted with the configured probabilities. If every
/// token is deleted, one original token (uniformly chosen) is kept.
std::vector<std::uint32_t> corrupt_text(const std::vector<std::uint32_t>& tokens,
                                        const CorruptionConfig& cfg, const SeedContext& ctx,
                                        CorruptionTrace* trace = nullptr);

// On-disk corpus: a directory with
//   corpus.txt     key=value header (dims, vocab, counts)
//   images.csv     split,index,f0..f{P*d-1}       (%.17g)
//   tokens.txt     one sequence per line, space-separated ids; train rows then eval rows
//   manifest.csv   split,index,source_id,concept_id
//   latents.csv    split,index,z0..z{dz-1}
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace contra
