#include "doctest.h"

#include <cmath>

#include "contra/mixup.hpp"
#include "contra/numerics.hpp"
#include "contra/oracles.hpp"

using namespace contra;

namespace {

Matrix unit_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(SeedContext(seed, "emb"));
  Matrix m(n, d);
  for (double& v : m.flat()) v = rng.normal();
  return l2_normalize_rows(m).rows;
}

MixupDecision decision(double lambda, std::size_t n, Modality m = Modality::kImage) {
  MixupDecision d;
  d.lambda = lambda;
  d.batch = n;
  d.modality = m;
  d.gamma = m == Modality::kImage ? 0.9 : 0.1;
  return d;
}

}  // namespace

TEST_CASE("coin and lambda draws") {
  CHECK(modality_for_coin(0.7) == Modality::kImage);
  CHECK(modality_for_coin(0.5) == Modality::kText);
  CHECK(modality_for_coin(0.2) == Modality::kText);

  const SeedContext ctx(3, "step");
  const auto a = sample_mixup_decision(0.1, 8, ctx);
  const auto b = sample_mixup_decision(0.1, 8, ctx);
  CHECK(a.gamma == b.gamma);
  CHECK(a.lambda == b.lambda);
  CHECK(a.modality == modality_for_coin(a.gamma));
  CHECK(a.partner(0) == 7);
  CHECK(a.partner(3) == 4);

  const auto wide = sample_mixup_decision(1e6, 8, ctx);
  CHECK(wide.lambda >= 0.49);
  CHECK(wide.lambda <= 0.51);
}

TEST_CASE("input mixup on raw patches") {
  ImageBatch x;
  x.count = 3;
  x.patches = 2;
  x.features = Matrix{{1, 2}, {3, 4}, {5, 6}, {7, 8}, {9, 10}, {11, 12}};
  CHECK(apply_input_mixup(x, decision(1.0, 3)).features == x.features);

  const auto rev = apply_input_mixup(x, decision(0.0, 3));
  CHECK(rev.features.row_block(0, 2) == x.features.row_block(4, 2));
  CHECK(rev.features.row_block(2, 2) == x.features.row_block(2, 2));

  const auto half = apply_input_mixup(x, decision(0.5, 3));
  CHECK(half.features.row_block(0, 2) == half.features.row_block(4, 2));
  CHECK(half.features(0, 0) == doctest::Approx(5.0));
  CHECK(half.count == 3);
  CHECK(half.features.cols() == 2);
}

TEST_CASE("text partners are the mirrored captions") {
  TextBatch t;
  t.sequences = {{1}, {2, 2}, {3, 3, 3}, {4}};
  const auto mix = text_pooled_mix(t, decision(0.3, 4, Modality::kText));
  CHECK(mix.lambda == 0.3);
  CHECK(mix.partners.sequences[0] == t.sequences[3]);
  CHECK(mix.partners.sequences[1] == t.sequences[2]);
}

TEST_CASE("mixup loss is affine in lambda") {
  const std::size_t n = 6;
  const Matrix a = unit_rows(n, 4, 1), b = unit_rows(n, 4, 2);
  const double tau = 0.3;
  const auto s = similarity_matrix(a, b, tau);
  const auto id = LabelMatrix::identity(n), mir = LabelMatrix::mirror(n);
  const double l_id = infonce_loss(s, id, id), l_mir = infonce_loss(s, mir, mir);

  CHECK(mixup_loss(a, b, decision(1.0, n), tau) == l_id);
  CHECK(mixup_loss(a, b, decision(0.0, n), tau) == l_mir);
  for (double lam : {0.3, 0.55, 0.91}) {
    CHECK(std::abs(mixup_loss(a, b, decision(lam, n), tau) - (lam * l_id + (1 - lam) * l_mir)) <= 1e-12);
  }
}

TEST_CASE("mixup gradients") {
  const std::size_t n = 4;
  const Matrix a = unit_rows(n, 3, 3), b = unit_rows(n, 3, 4);
  const double tau = 0.5;
  const auto p = probability_matrices(similarity_matrix(a, b, tau));
  const auto id = LabelMatrix::identity(n);
  const auto plain = analytic_gradients(p, id, id, a, b, tau);
  const auto one = mixup_gradients(p, decision(1.0, n), a, b, tau);
  CHECK(one.d_img == plain.d_img);
  CHECK(one.d_tau == plain.d_tau);

  // N=2, lambda 0.5: both label rows are [0.5, 0.5].
  const auto y = mixup_labels(decision(0.5, 2));
  for (double v : y.y.flat()) CHECK(v == 0.5);
  const Matrix i2{{1.0, 0.0}, {0.0, 1.0}};
  const Matrix t2{{0.6, 0.8}, {1.0, 0.0}};
  const double t = 0.5;
  const auto p2 = probability_matrices(similarity_matrix(i2, t2, t));
  const auto g = mixup_gradients(p2, decision(0.5, 2), i2, t2, t);
  // By hand: G = (P_i2t - 0.5) + (P_t2i - 0.5)^T, dI = G T / (2 N tau).
  Matrix gm(2, 2);
  for (int j = 0; j < 2; ++j)
    for (int k = 0; k < 2; ++k) gm(j, k) = (p2.i2t(j, k) - 0.5) + (p2.t2i(k, j) - 0.5);
  for (int j = 0; j < 2; ++j)
    for (int c = 0; c < 2; ++c) {
      const double expect = (gm(j, 0) * t2(0, c) + gm(j, 1) * t2(1, c)) / (4 * t);
      CHECK(std::abs(g.d_img(j, c) - expect) <= 1e-14);
    }
}

TEST_CASE("mixup through the full encoder stack matches finite differences") {
  for (bool image : {true, false}) {
    for (std::size_t n : {4u, 5u}) {
      ToySetup setup;
      setup.batch = n;
      setup.mixup = true;
      setup.image_coin = image;
      setup.mixup_lambda = 0.35;
      setup.dropout = 0.1;
      setup.seed = 20 + n;
      CHECK(finite_difference_check(make_toy_problem(setup)).relative_error <= 1e-6);
    }
  }
}
