#include "doctest.h"

#include <cmath>

#include "contra/engine.hpp"
#include "contra/error.hpp"
#include "contra/oracles.hpp"

using namespace contra;

namespace {

ToyProblem toy(std::size_t n, std::uint64_t seed, double dropout = 0.1) {
  ToySetup s;
  s.batch = n;
  s.seed = seed;
  s.dropout = dropout;
  s.token_drop = 0.34;
  return make_toy_problem(s);
}

}  // namespace

TEST_CASE("DGA with one sub-batch equals the full batch") {
  const auto t = toy(8, 1);
  const auto full = full_batch_gradients(t.params, t.batch, t.opts, t.ctx);
  DgaOptions o;
  o.sub_batch = 8;
  const auto dga = dga_gradients(t.params, t.batch, o, t.opts, t.ctx);
  CHECK(gradient_relative_error(full.grads, dga.grads) <= 1e-12);
  CHECK(dga.diag.loss == full.diag.loss);
}

TEST_CASE("DGA sub-batches reproduce the full-batch gradient") {
  const auto t = toy(12, 2);
  const auto full = full_batch_gradients(t.params, t.batch, t.opts, t.ctx);
  for (std::size_t m : {1u, 3u, 4u, 6u}) {
    DgaOptions o;
    o.sub_batch = m;
    CHECK(gradient_relative_error(full.grads, dga_gradients(t.params, t.batch, o, t.opts, t.ctx).grads) <= 1e-12);
  }
  DgaOptions bad;
  bad.sub_batch = 5;
  CHECK_THROWS_AS(dga_gradients(t.params, t.batch, bad, t.opts, t.ctx), InvalidArgument);
}

TEST_CASE("mismatched second-pass seed is caught") {
  const auto t = toy(8, 3);
  DgaOptions o;
  o.sub_batch = 4;
  o.pass2_seed = SeedContext(999, "other");
  CHECK_THROWS_AS(dga_gradients(t.params, t.batch, o, t.opts, t.ctx), StabilityViolation);
  o.verify_stability = false;
  const auto wrong = dga_gradients(t.params, t.batch, o, t.opts, t.ctx);
  const auto full = full_batch_gradients(t.params, t.batch, t.opts, t.ctx);
  CHECK(gradient_relative_error(full.grads, wrong.grads) > 1e-3);
}

TEST_CASE("simulated workers") {
  const auto t = toy(8, 4);
  const auto full = full_batch_gradients(t.params, t.batch, t.opts, t.ctx);
  for (std::size_t w : {1u, 2u, 4u, 8u}) {
    const auto r = simulate_workers(t.params, t.batch, w, GatherMode::kReserved, t.opts, t.ctx);
    CHECK(gradient_relative_error(full.grads, r.grads) <= 1e-12);
  }
  const auto one = simulate_workers(t.params, t.batch, 1, GatherMode::kDetached, t.opts, t.ctx);
  CHECK(gradient_relative_error(full.grads, one.grads) <= 1e-12);
  const auto det = simulate_workers(t.params, t.batch, 4, GatherMode::kDetached, t.opts, t.ctx);
  CHECK(gradient_relative_error(full.grads, det.grads) > 1e-3);
  CHECK(det.diag.loss == doctest::Approx(full.diag.loss).epsilon(1e-12));
  CHECK_THROWS_AS(simulate_workers(t.params, t.batch, 3, GatherMode::kReserved, t.opts, t.ctx), InvalidArgument);
  CHECK(to_string(GatherMode::kDetached) == "detached");
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(0, 100, 1e-3, 1e-4) == doctest::Approx(1e-3));
  CHECK(cosine_lr(100, 100, 1e-3, 1e-4) == doctest::Approx(1e-4));
  CHECK(cosine_lr(50, 100, 1e-3, 1e-4) == doctest::Approx(5.5e-4));
  for (std::size_t s = 1; s <= 100; ++s) CHECK(cosine_lr(s, 100, 1e-3, 1e-4) <= cosine_lr(s - 1, 100, 1e-3, 1e-4));
}

TEST_CASE("AdamW first step against the closed form") {
  auto t = toy(4, 5, 0.0);
  const auto g = full_batch_gradients(t.params, t.batch, t.opts, t.ctx).grads;
  OptimizerHyper h;
  h.weight_decay = 0.01;
  const double lr = 1e-2;
  auto p = t.params;
  auto state = OptimizerState::for_params(p);
  adamw_update(p, g, state, lr, h);
  CHECK(state.step == 1);

  // Bias-corrected first step: m_hat = g, v_hat = g^2.
  const auto before = flatten(t.params.blocks), after = flatten(p.blocks), grad = flatten(g);
  const std::size_t n_matrix = before.size() - 1;
  for (std::size_t i = 0; i < before.size(); ++i) {
    const double decay = i < n_matrix ? lr * h.weight_decay * before[i] : 0.0;
    const double expect = before[i] - decay - lr * grad[i] / (std::abs(grad[i]) + h.eps);
    CHECK(std::abs(after[i] - std::max(expect, i < n_matrix ? -1e300 : 1e-4)) <= 1e-12);
  }
}

TEST_CASE("optimizer edge cases") {
  auto t = toy(4, 6, 0.0);
  const auto g = full_batch_gradients(t.params, t.batch, t.opts, t.ctx).grads;
  OptimizerHyper h;
  h.weight_decay = 0.0;
  auto p = t.params;
  auto st = OptimizerState::for_params(p);
  adamw_update(p, g, st, 0.0, h);
  CHECK(p.blocks == t.params.blocks);

  auto frozen = t.params;
  frozen.freeze_image = true;
  auto st2 = OptimizerState::for_params(frozen);
  h.weight_decay = 0.1;
  adamw_update(frozen, g, st2, 1e-2, h);
  CHECK(frozen.blocks.image_patch == t.params.blocks.image_patch);
  CHECK(frozen.blocks.image_hidden == t.params.blocks.image_hidden);
  CHECK(frozen.blocks.image_out == t.params.blocks.image_out);
  CHECK(max_abs(st2.first_moment.image_out) == 0.0);
  CHECK_FALSE(frozen.blocks.text_out == t.params.blocks.text_out);

  auto bad = g;
  bad.text_out(0, 0) = std::nan("");
  auto p3 = t.params;
  auto st3 = OptimizerState::for_params(p3);
  CHECK_THROWS_AS(adamw_update(p3, bad, st3, 1e-2, h), NonFiniteError);

  // A huge temperature step is clamped.
  auto hot = g.zeros_like();
  hot.temperature = 1.0;
  auto p4 = t.params;
  auto st4 = OptimizerState::for_params(p4);
  adamw_update(p4, hot, st4, 10.0, h);
  CHECK(p4.blocks.temperature == kMinTemperature);
}

TEST_CASE("gradients are bit-reproducible") {
  const auto t = toy(6, 7);
  const auto a = full_batch_gradients(t.params, t.batch, t.opts, t.ctx);
  const auto b = full_batch_gradients(t.params, t.batch, t.opts, t.ctx);
  CHECK(a.grads == b.grads);
  CHECK(checksum(a.img_emb) == checksum(b.img_emb));
  CHECK(checksum(a.img_emb) != checksum(a.txt_emb));
  CHECK(gradient_norm(a.grads) > 0.0);
}
