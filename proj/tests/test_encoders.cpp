#include "doctest.h"

#include <cmath>

#include "contra/encoders.hpp"
#include "contra/engine.hpp"
#include "contra/error.hpp"
#include "contra/oracles.hpp"

using namespace contra;

namespace {

EncoderDims small_dims() {
  EncoderDims d;
  d.patches = 4;
  d.patch_dim = 5;
  d.image_hidden = 7;
  d.text_hidden = 6;
  d.vocab = 20;
  d.embed_dim = 3;
  return d;
}

ImageBatch random_images(std::size_t n, const EncoderDims& d, std::uint64_t seed) {
  Rng rng(SeedContext(seed, "images"));
  ImageBatch x;
  x.count = n;
  x.patches = d.patches;
  x.features = Matrix(n * d.patches, d.patch_dim);
  for (double& v : x.features.flat()) v = rng.normal();
  return x;
}

TextBatch random_texts(std::size_t n, const EncoderDims& d, std::uint64_t seed) {
  Rng rng(SeedContext(seed, "texts"));
  TextBatch t;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::uint32_t> s(2 + rng.below(5));
    for (auto& tok : s) tok = static_cast<std::uint32_t>(1 + rng.below(d.vocab - 1));
    t.sequences.push_back(s);
  }
  return t;
}

}  // namespace

TEST_CASE("initialization") {
  const auto p = init_params(small_dims(), SeedContext(5, "init"));
  CHECK(p.blocks.temperature == kInitialTemperature);
  CHECK(p.blocks == init_params(small_dims(), SeedContext(5, "init")).blocks);
  CHECK_FALSE(p.blocks == init_params(small_dims(), SeedContext(6, "init")).blocks);

  EncoderDims wide;  // defaults: 512-wide embedding
  const auto big = init_params(wide, SeedContext(1, "init"));
  CHECK(big.blocks.image_out.cols() == 512);
  CHECK(big.blocks.text_out.cols() == 512);
}

TEST_CASE("token drop removes floor(rate * P) patches") {
  CHECK(token_drop_count(0.25, 8) == 2);
  CHECK(token_drop_count(0.0, 8) == 0);
  CHECK(token_drop_count(0.3, 3) == 0);

  EncoderDims d = small_dims();
  d.patches = 8;
  const auto p = init_params(d, SeedContext(1, "init"));
  const auto x = random_images(6, d, 2);
  const auto enc = encode_images(p, x, 0.25, SeedContext(1, "fwd"));
  CHECK(enc.tape.kept == 6);
  CHECK(enc.tape.kept_patches.size() == 6 * 6);
  CHECK_THROWS_AS(encode_images(p, x, 1.0, SeedContext(1, "fwd")), InvalidArgument);
}

TEST_CASE("encoders are deterministic and produce unit rows") {
  EncoderDims d = small_dims();
  auto p = init_params(d, SeedContext(1, "init"));
  p.dropout = 0.2;
  const auto x = random_images(5, d, 3);
  const auto t = random_texts(5, d, 3);
  const SeedContext ctx(9, "fwd");
  const auto a = encode_images(p, x, 0.25, ctx);
  const auto b = encode_images(p, x, 0.25, ctx);
  CHECK(a.embeddings == b.embeddings);
  const auto ta = encode_texts(p, t, std::nullopt, ctx);
  CHECK(ta.embeddings == encode_texts(p, t, std::nullopt, ctx).embeddings);
  for (const Matrix* m : {&a.embeddings, &ta.embeddings}) {
    for (std::size_t r = 0; r < m->rows(); ++r) {
      double s = 0.0;
      for (double v : m->row(r)) s += v * v;
      CHECK(std::abs(std::sqrt(s) - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("identical captions embed identically") {
  EncoderDims d = small_dims();
  const auto p = init_params(d, SeedContext(1, "init"));
  TextBatch t;
  t.sequences = {{3, 4, 5}, {3, 4, 5}};
  const auto e = encode_texts(p, t, std::nullopt, SeedContext(1, "fwd"));
  CHECK(max_abs_diff(e.embeddings.row_block(0, 1), e.embeddings.row_block(1, 1)) == 0.0);
}

TEST_CASE("pooled mixing at lambda 1 and self partners") {
  EncoderDims d = small_dims();
  const auto p = init_params(d, SeedContext(1, "init"));
  const auto t = random_texts(5, d, 4);
  const SeedContext ctx(2, "fwd");
  const auto plain = encode_texts(p, t, std::nullopt, ctx);

  PooledMix id_mix{1.0, t};
  std::reverse(id_mix.partners.sequences.begin(), id_mix.partners.sequences.end());
  CHECK(encode_texts(p, t, id_mix, ctx).embeddings == plain.embeddings);

  PooledMix half{0.4, t};
  std::reverse(half.partners.sequences.begin(), half.partners.sequences.end());
  const auto mixed = encode_texts(p, t, half, ctx);
  // Row 2 of 5 is its own partner.
  CHECK(max_abs_diff(mixed.embeddings.row_block(2, 1), plain.embeddings.row_block(2, 1)) <= 1e-15);
  CHECK(max_abs_diff(mixed.embeddings.row_block(0, 1), plain.embeddings.row_block(0, 1)) > 1e-6);
}

TEST_CASE("sub-batch forward reproduces full-batch rows") {
  EncoderDims d = small_dims();
  auto p = init_params(d, SeedContext(1, "init"));
  p.dropout = 0.3;
  const auto x = random_images(8, d, 5);
  const auto t = random_texts(8, d, 5);
  const SeedContext ctx(4, "fwd");
  const auto full_i = encode_images(p, x, 0.25, ctx);
  const auto full_t = encode_texts(p, t, std::nullopt, ctx);
  for (std::size_t first : {0u, 3u, 6u}) {
    const std::size_t n = std::min<std::size_t>(3, 8 - first);
    const auto si = encode_images(p, x.slice(first, n), 0.25, ctx);
    const auto st = encode_texts(p, t.slice(first, n), std::nullopt, ctx);
    CHECK(si.embeddings == full_i.embeddings.row_block(first, n));
    CHECK(st.embeddings == full_t.embeddings.row_block(first, n));
  }
}

TEST_CASE("zero upstream gives zero gradients") {
  EncoderDims d = small_dims();
  const auto p = init_params(d, SeedContext(1, "init"));
  const auto x = random_images(3, d, 6);
  const auto t = random_texts(3, d, 6);
  const auto ei = encode_images(p, x, 0.0, SeedContext(1, "f"));
  const auto et = encode_texts(p, t, std::nullopt, SeedContext(1, "f"));
  ParamBlocks g = p.blocks.zeros_like();
  encoder_backward(p, ei.tape, Matrix(3, d.embed_dim), g);
  encoder_backward(p, et.tape, Matrix(3, d.embed_dim), g);
  for (double v : flatten(g)) CHECK(v == 0.0);
}

TEST_CASE("frozen tower receives no gradient") {
  EncoderDims d = small_dims();
  auto p = init_params(d, SeedContext(1, "init"));
  p.freeze_text = true;
  const auto t = random_texts(3, d, 7);
  const auto et = encode_texts(p, t, std::nullopt, SeedContext(1, "f"));
  Matrix up(3, d.embed_dim, 0.5);
  ParamBlocks g = p.blocks.zeros_like();
  encoder_backward(p, et.tape, up, g);
  CHECK(max_abs(g.text_embed) == 0.0);
  CHECK(max_abs(g.text_hidden) == 0.0);
  CHECK(max_abs(g.text_out) == 0.0);
}

TEST_CASE("toy encoder stack matches finite differences") {
  ToySetup setup;  // N=4, P=3, d_patch=5, h=8, d_emb=6
  setup.dropout = 0.1;
  setup.seed = 11;
  const auto report = finite_difference_check(make_toy_problem(setup));
  CHECK(report.relative_error <= 1e-6);

  setup.token_drop = 0.34;
  setup.seed = 12;
  CHECK(finite_difference_check(make_toy_problem(setup)).relative_error <= 1e-6);
}

TEST_CASE("flatten and unflatten are inverse") {
  auto p = init_params(small_dims(), SeedContext(3, "init"));
  const auto flat = flatten(p.blocks);
  CHECK(flat.size() == p.blocks.parameter_count());
  ParamBlocks q = p.blocks.zeros_like();
  unflatten(flat, q);
  CHECK(q == p.blocks);
}

TEST_CASE("reinitializing one tower leaves the other alone") {
  auto p = init_params(small_dims(), SeedContext(3, "init"));
  const auto before = p.blocks;
  reinit_tower(p, Tower::kText, 11, SeedContext(4, "re"));
  CHECK(p.blocks.image_patch == before.image_patch);
  CHECK(p.blocks.image_out == before.image_out);
  CHECK(p.dims.text_hidden == 11);
  CHECK(p.blocks.text_hidden.rows() == 11);
  CHECK(p.blocks.text_out.rows() == 11);
}
