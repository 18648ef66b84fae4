#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <numeric>

#include "contra/error.hpp"
#include "contra/synthdata.hpp"

using namespace contra;

namespace {

CorpusSpec two_sources(double strength, double token_rate) {
  CorpusSpec spec;
  for (int s = 0; s < 2; ++s) {
    SourceSpec src;
    src.count = 400;
    src.style_strength = strength;
    src.style_token_rate = token_rate;
    spec.sources.push_back(src);
  }
  spec.latent_dim = 6;
  spec.patches = 4;
  spec.patch_dim = 5;
  spec.eval_count = 100;
  return spec;
}

double mean_length(const std::vector<Sample>& rows, int source) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : rows)
    if (s.source == source) sum += static_cast<double>(s.tokens.size()), ++n;
  return sum / static_cast<double>(n);
}

}  // namespace

TEST_CASE("generation is deterministic") {
  const auto spec = two_sources(1.0, 0.2);
  const auto a = generate_corpus(spec, SeedContext(3, "corpus"));
  CHECK(a == generate_corpus(spec, SeedContext(3, "corpus")));
  CHECK_FALSE(a == generate_corpus(spec, SeedContext(4, "corpus")));
  CHECK(a.train.size() == 800);
  CHECK(a.eval.size() == 100);
  a.catalog().validate();
}

TEST_CASE("eval split is unstyled and tokens stay in range") {
  const auto c = generate_corpus(two_sources(2.0, 0.5), SeedContext(1, "corpus"));
  const auto end = c.spec.content_end();
  for (const auto& s : c.eval) {
    CHECK(s.source == -1);
    for (auto t : s.tokens) {
      CHECK(t >= kFirstContentToken);
      CHECK(t < end);
    }
  }
  bool styled = false;
  for (const auto& s : c.train) {
    CHECK(s.tokens.size() >= 8);
    CHECK(s.tokens.size() <= 12);
    for (auto t : s.tokens) {
      CHECK(t < c.spec.vocab);
      CHECK(t != kMaskToken);
      styled |= t >= end;
    }
  }
  CHECK(styled);
}

TEST_CASE("content buckets") {
  // Sign/magnitude layout: positive levels first, then negative levels.
  CHECK(content_bucket(0.0, 6) == 0);
  CHECK(content_bucket(100.0, 6) == 2);
  CHECK(content_bucket(-1e-9, 6) == 3);
  CHECK(content_bucket(-100.0, 6) == 5);
  for (double z = -3; z < 3; z += 0.1) CHECK(content_bucket(z, 4) < 4);
}

TEST_CASE("caption lengths follow the source ranges") {
  auto spec = two_sources(0.0, 0.0);
  spec.sources[0].min_len = 5;
  spec.sources[0].max_len = 8;
  spec.sources[1].min_len = 20;
  spec.sources[1].max_len = 25;
  const auto c = generate_corpus(spec, SeedContext(2, "corpus"));
  CHECK(mean_length(c.train, 0) == doctest::Approx(6.5).epsilon(0.05));
  CHECK(mean_length(c.train, 1) == doctest::Approx(22.5).epsilon(0.05));
}

TEST_CASE("unbiased sources are statistically indistinguishable") {
  auto spec = two_sources(0.0, 0.0);
  spec.sources[0].count = spec.sources[1].count = 2000;
  const auto c = generate_corpus(spec, SeedContext(5, "corpus"));
  const std::size_t dims = spec.patches * spec.patch_dim;
  // Welch z statistic per image feature and for caption length.
  double worst = 0.0;
  for (std::size_t f = 0; f <= dims; ++f) {
    double sum[2] = {0, 0}, sq[2] = {0, 0};
    double n[2] = {0, 0};
    for (const auto& s : c.train) {
      const double v = f < dims ? s.image[f] : static_cast<double>(s.tokens.size());
      sum[s.source] += v, sq[s.source] += v * v, n[s.source] += 1;
    }
    double m[2], var[2];
    for (int k = 0; k < 2; ++k) m[k] = sum[k] / n[k], var[k] = sq[k] / n[k] - m[k] * m[k];
    worst = std::max(worst, std::abs(m[0] - m[1]) / std::sqrt(var[0] / n[0] + var[1] / n[1]));
  }
  // 81 statistics; 4.5 sigma keeps the family-wise false-alarm rate negligible.
  CHECK(worst < 4.5);

  // The same test picks up a real style shift.
  auto biased = spec;
  biased.sources[1].style_strength = 0.5;
  const auto b = generate_corpus(biased, SeedContext(5, "corpus"));
  double shift = 0.0;
  for (std::size_t f = 0; f < dims; ++f) {
    double sum[2] = {0, 0}, n[2] = {0, 0};
    for (const auto& s : b.train) sum[s.source] += s.image[f], n[s.source] += 1;
    shift += std::abs(sum[0] / n[0] - sum[1] / n[1]);
  }
  CHECK(shift > 1.0);
}

TEST_CASE("positive pairs share the latent concept") {
  const auto c = generate_corpus(two_sources(0.5, 0.1), SeedContext(6, "corpus"));
  for (std::size_t i = 0; i < 50; ++i) {
    const auto& s = c.train[i];
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t j = 0; j < c.train.size(); ++j) {
      double d = 0;
      for (std::size_t k = 0; k < s.latent.size(); ++k) d += std::pow(c.train[j].latent[k] - s.latent[k], 2);
      if (d < best_d) best_d = d, best = j;
    }
    CHECK(best == i);
  }
}

TEST_CASE("text corruption") {
  CorruptionConfig cfg;
  cfg.vocab = 50;
  const std::vector<std::uint32_t> seq{5, 6, 7, 8, 9, 10, 11, 12};

  CorruptionConfig off = cfg;
  off.select_rate = 0.0;
  CHECK(corrupt_text(seq, off, SeedContext(1, "c")) == seq);

  CorruptionConfig all_delete = cfg;
  all_delete.select_rate = 1.0;
  all_delete.mask_prob = 0.0;
  all_delete.replace_prob = 0.0;
  all_delete.delete_prob = 1.0;
  CorruptionTrace trace;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto out = corrupt_text(seq, all_delete, SeedContext(s, "c"), &trace);
    REQUIRE(out.size() == 1);
    CHECK(std::find(seq.begin(), seq.end(), out[0]) != seq.end());
  }
  CHECK(trace.restored == 100);

  CorruptionTrace t2;
  for (std::uint64_t s = 0; s < 2000; ++s) {
    const auto out = corrupt_text(seq, cfg, SeedContext(s, "c"), &t2);
    CHECK_FALSE(out.empty());
    for (auto tok : out) CHECK(tok < cfg.vocab);
  }
  CHECK(corrupt_text(seq, cfg, SeedContext(9, "c")) == corrupt_text(seq, cfg, SeedContext(9, "c")));

  CorruptionConfig bad = cfg;
  bad.mask_prob = 0.7;
  CHECK_THROWS_AS(corrupt_text(seq, bad, SeedContext(1, "c")), InvalidArgument);
}

TEST_CASE("corpus directory round-trip") {
  const auto c = generate_corpus(two_sources(1.0, 0.3), SeedContext(8, "corpus"));
  const auto dir = std::filesystem::temp_directory_path() / "contra_corpus_roundtrip";
  std::filesystem::remove_all(dir);
  save_corpus(c, dir);
  CHECK(load_corpus(dir) == c);
  std::filesystem::remove(dir / "tokens.txt");
  CHECK_THROWS(load_corpus(dir));
  std::filesystem::remove_all(dir);
}

TEST_CASE("batches from samples") {
  const auto c = generate_corpus(two_sources(1.0, 0.3), SeedContext(8, "corpus"));
  const std::vector<std::size_t> rows{3, 1};
  const auto img = make_image_batch(c.train, rows, c.spec.patches, c.spec.patch_dim);
  CHECK(img.count == 2);
  CHECK(img.patch(0, 1)[2] == c.train[3].image[1 * c.spec.patch_dim + 2]);
  const auto txt = make_text_batch(c.train, rows);
  CHECK(txt.sequences[1] == c.train[1].tokens);
}
