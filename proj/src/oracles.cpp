#include "contra/oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "contra/error.hpp"
#include "contra/mixup.hpp"
#include "contra/numerics.hpp"
#include "contra/sampling.hpp"
#include "contra/synthdata.hpp"

namespace contra {

ToyProblem make_toy_problem(const ToySetup& s) {
  ToyProblem t;
  t.ctx = SeedContext(s.seed, "toy");
  EncoderDims d;
  d.patches = s.patches;
  d.patch_dim = s.patch_dim;
  d.image_hidden = s.hidden;
  d.text_hidden = s.hidden;
  d.vocab = s.vocab;
  d.embed_dim = s.embed_dim;
  t.params = init_params(d, t.ctx.derive("init"));
  t.params.blocks.temperature = s.tau;
  t.params.dropout = s.dropout;

  Rng rng(t.ctx.derive("data"));
  t.batch.images.count = s.batch;
  t.batch.images.patches = s.patches;
  t.batch.images.features = Matrix(s.batch * s.patches, s.patch_dim);
  for (double& v : t.batch.images.features.flat()) v = rng.normal();
  for (std::size_t j = 0; j < s.batch; ++j) {
    const std::size_t len = s.min_len + rng.below(s.max_len - s.min_len + 1);
    std::vector<std::uint32_t> seq(len);
    for (auto& tok : seq) tok = static_cast<std::uint32_t>(rng.below(s.vocab));
    t.batch.texts.sequences.push_back(std::move(seq));
    t.batch.sources.push_back(static_cast<int>(j % 2));
  }
  t.opts.token_drop_rate = s.token_drop;
  if (s.mixup) {
    MixupDecision m;
    m.gamma = s.image_coin ? 0.75 : 0.25;
    m.modality = modality_for_coin(m.gamma);
    m.lambda = s.mixup_lambda;
    m.batch = s.batch;
    t.opts.mixup = m;
  }
  t.ctx = t.ctx.derive("forward");
  return t;
}

double forward_loss(const EncoderParams& params, const Batch& batch, const StepOptions& opts,
                    const SeedContext& ctx) {
  const std::size_t n = batch.size();
  ImageBatch images = batch.images;
  std::optional<PooledMix> text_mix;
  LabelMatrix labels = LabelMatrix::identity(n);
  if (opts.mixup) {
    if (opts.mixup->modality == Modality::kImage) {
      images = apply_input_mixup(images, *opts.mixup);
    } else {
      text_mix = text_pooled_mix(batch.texts, *opts.mixup);
    }
    labels = LabelMatrix::blend(opts.mixup->lambda, n);
  }
  const auto img = encode_images(params, images, opts.token_drop_rate, ctx);
  const auto txt = encode_texts(params, batch.texts, text_mix, ctx);
  const SimilarityMatrix s = similarity_matrix(img.embeddings, txt.embeddings, params.blocks.temperature);
  return infonce_loss(s, labels, labels);
}

FdReport finite_difference_check(const ToyProblem& t, double eps) {
  FdReport r;
  r.analytic = full_batch_gradients(t.params, t.batch, t.opts, t.ctx).grads;
  const std::vector<double> base = flatten(t.params.blocks);
  EncoderParams probe = t.params;
  const auto f = [&](std::span<const double> x) {
    unflatten(x, probe.blocks);
    return forward_loss(probe, t.batch, t.opts, t.ctx);
  };
  const auto numeric = finite_difference_gradient(f, base, eps);
  r.numeric = t.params.blocks.zeros_like();
  unflatten(numeric, r.numeric);
  r.relative_error = gradient_relative_error(r.analytic, r.numeric);
  return r;
}

GradientSet brute_force_detached_deficit(const ShardPartition& shards, const Matrix& img, const Matrix& txt,
                                         double tau, const LabelMatrix& labels) {
  const std::size_t n = img.rows(), d = img.cols();
  std::vector<std::size_t> owner(n, n);
  for (std::size_t w = 0; w < shards.size(); ++w) {
    for (std::size_t j : shards[w]) owner.at(j) = w;
  }
  Matrix s(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) acc += img(j, c) * txt(k, c);
      s(j, k) = acc / tau;
    }
  }
  // p_i2t(j, k) = softmax over texts k; p_t2i(k, j) = softmax over images j of s(., k).
  Matrix p_i2t(n, n), p_t2i(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double mx = -INFINITY, z = 0.0;
    for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, s(j, k));
    for (std::size_t k = 0; k < n; ++k) z += std::exp(s(j, k) - mx);
    for (std::size_t k = 0; k < n; ++k) p_i2t(j, k) = std::exp(s(j, k) - mx) / z;
  }
  for (std::size_t k = 0; k < n; ++k) {
    double mx = -INFINITY, z = 0.0;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, s(j, k));
    for (std::size_t j = 0; j < n; ++j) z += std::exp(s(j, k) - mx);
    for (std::size_t j = 0; j < n; ++j) p_t2i(k, j) = std::exp(s(j, k) - mx) / z;
  }
  const double c = 1.0 / (2.0 * static_cast<double>(n) * tau);
  GradientSet out{Matrix(n, d), Matrix(n, d), 0.0};
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      if (owner[j] == owner[k]) continue;
      const double a = c * (p_i2t(j, k) - labels.y(j, k));
      const double b = c * (p_t2i(k, j) - labels.y(k, j));
      for (std::size_t e = 0; e < d; ++e) {
        out.d_txt(k, e) += a * img(j, e);
        out.d_img(j, e) += b * txt(k, e);
      }
    }
  }
  return out;
}

RetrievalReport brute_force_retrieval(const Matrix& img, const Matrix& txt) {
  if (img.rows() != txt.rows() || img.cols() != txt.cols()) throw InvalidArgument("shape mismatch");
  const std::size_t n = img.rows();
  const auto unit = [](const Matrix& m) {
    Matrix u = m;
    for (std::size_t r = 0; r < m.rows(); ++r) {
      double sq = 0.0;
      for (double v : m.row(r)) sq += v * v;
      const double norm = std::sqrt(sq);
      for (double& v : u.row(r)) v = norm > 0.0 ? v / norm : 0.0;
    }
    return u;
  };
  const Matrix a = unit(img), b = unit(txt);
  Matrix sim(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      double acc = 0.0;
      for (std::size_t c = 0; c < a.cols(); ++c) acc += a(j, c) * b(k, c);
      sim(j, k) = acc;
    }
  }
  double hits[2][3] = {};
  const std::size_t ks[3] = {1, 5, 10};
  std::vector<std::size_t> order(n);
  for (int dir = 0; dir < 2; ++dir) {
    for (std::size_t q = 0; q < n; ++q) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        const double sx = dir == 0 ? sim(q, x) : sim(x, q);
        const double sy = dir == 0 ? sim(q, y) : sim(y, q);
        return sx > sy;
      });
      const auto pos = static_cast<std::size_t>(std::find(order.begin(), order.end(), q) - order.begin());
      for (int i = 0; i < 3; ++i) hits[dir][i] += pos < ks[i] ? 1.0 : 0.0;
    }
  }
  RetrievalReport r;
  const auto pct = [n](double h) { return 100.0 * h / static_cast<double>(n); };
  r.i2t_r1 = pct(hits[0][0]);
  r.i2t_r5 = pct(hits[0][1]);
  r.i2t_r10 = pct(hits[0][2]);
  r.t2i_r1 = pct(hits[1][0]);
  r.t2i_r5 = pct(hits[1][1]);
  r.t2i_r10 = pct(hits[1][2]);
  r.rsum = r.i2t_r1 + r.i2t_r5 + r.i2t_r10 + r.t2i_r1 + r.t2i_r5 + r.t2i_r10;
  r.queries = n;
  return r;
}

namespace {

void record(VerifyOutcome& out, bool ok, const std::string& name, const std::string& observed,
            const std::string& expected) {
  out.passed = out.passed && ok;
  out.lines.push_back(fmt::format("{} {}: observed {}, expected {}", ok ? "PASS" : "FAIL", name, observed, expected));
}

ToySetup grad_config(std::size_t i) {
  static const std::size_t batches[] = {2, 4, 8, 16};
  ToySetup s;
  s.batch = batches[i % 4];
  s.dropout = (i / 4) % 2 ? 0.1 : 0.0;
  s.mixup = (i / 2) % 2 == 1;
  s.image_coin = (i / 5) % 2 == 0;
  s.mixup_lambda = 0.15 + 0.04 * static_cast<double>(i);
  s.token_drop = i % 3 == 0 ? 0.34 : 0.0;
  s.patches = 3;
  s.patch_dim = 3 + i % 5;
  s.hidden = 4 + (i * 3) % 12;
  s.embed_dim = 3 + (i * 5) % 13;
  s.vocab = 8 + i % 8;
  s.seed = 1000 + i;
  return s;
}

VerifyOutcome suite_grad() {
  VerifyOutcome out{"grad", true, {}};
  double worst = 0.0;
  for (std::size_t i = 0; i < 20; ++i) {
    const ToySetup s = grad_config(i);
    const double err = finite_difference_check(make_toy_problem(s)).relative_error;
    worst = std::max(worst, err);
    record(out, err <= 1e-6,
           fmt::format("fd gradient config {} (N={} dropout={} mixup={} token_drop={})", i, s.batch, s.dropout,
                       s.mixup, s.token_drop),
           fmt::format("rel err {:.3e}", err), "<= 1e-6");
  }
  out.lines.push_back(fmt::format("max rel. gradient error {:.3e}", worst));
  return out;
}

ToySetup dga_config() {
  ToySetup s;
  s.batch = 64;
  s.patches = 4;
  s.patch_dim = 8;
  s.hidden = 16;
  s.embed_dim = 16;
  s.vocab = 32;
  s.dropout = 0.1;
  s.token_drop = 0.25;
  s.tau = 0.07;
  s.seed = 77;
  return s;
}

VerifyOutcome suite_dga() {
  VerifyOutcome out{"dga", true, {}};
  double worst = 0.0;
  for (bool mixup : {false, true}) {
    for (bool image_coin : {true, false}) {
      if (!mixup && !image_coin) continue;
      ToySetup s = dga_config();
      s.mixup = mixup;
      s.image_coin = image_coin;
      s.mixup_lambda = 0.62;
      const ToyProblem t = make_toy_problem(s);
      const auto full = full_batch_gradients(t.params, t.batch, t.opts, t.ctx);
      for (std::size_t m : {8, 16, 32, 64}) {
        DgaOptions o;
        o.sub_batch = m;
        const auto dga = dga_gradients(t.params, t.batch, o, t.opts, t.ctx);
        const double err = gradient_relative_error(full.grads, dga.grads);
        const double tau_err = relative_error(full.grads.temperature, dga.grads.temperature);
        worst = std::max(worst, err);
        const std::string tag = mixup ? (image_coin ? "image mixup" : "text mixup") : "no mixup";
        record(out, err <= 1e-9, fmt::format("dga == full batch (m={}, {})", m, tag),
               fmt::format("rel err {:.3e}", err), "<= 1e-9");
        record(out, tau_err <= 1e-9, fmt::format("sqrt-tau surrogate dtau == direct dtau (m={}, {})", m, tag),
               fmt::format("rel err {:.3e}", tau_err), "<= 1e-9");
      }
    }
  }
  {
    const ToyProblem t = make_toy_problem(dga_config());
    DgaOptions o;
    o.sub_batch = 16;
    o.pass2_seed = t.ctx.derive("other");
    bool raised = false;
    try {
      (void)dga_gradients(t.params, t.batch, o, t.opts, t.ctx);
    } catch (const StabilityViolation&) {
      raised = true;
    }
    record(out, raised, "mismatched pass-2 seed raises stability violation", raised ? "raised" : "not raised",
           "raised");
    o.verify_stability = false;
    const auto full = full_batch_gradients(t.params, t.batch, t.opts, t.ctx);
    const double err = gradient_relative_error(full.grads, dga_gradients(t.params, t.batch, o, t.opts, t.ctx).grads);
    record(out, err > 1e-3, "mismatched pass-2 seed corrupts the gradient", fmt::format("rel err {:.3e}", err),
           "> 1e-3");
  }
  out.lines.push_back(fmt::format("max rel. gradient diff {:.3e}", worst));
  return out;
}

VerifyOutcome suite_gather() {
  VerifyOutcome out{"gather", true, {}};
  ToySetup s = dga_config();
  s.batch = 16;
  s.tau = 0.1;
  for (bool mixup : {false, true}) {
    s.mixup = mixup;
    const ToyProblem t = make_toy_problem(s);
    const auto full = full_batch_gradients(t.params, t.batch, t.opts, t.ctx);
    for (std::size_t w : {1, 2, 4, 8}) {
      const auto reserved = simulate_workers(t.params, t.batch, w, GatherMode::kReserved, t.opts, t.ctx);
      const double err = gradient_relative_error(full.grads, reserved.grads);
      record(out, err <= 1e-12, fmt::format("reserved gather == full batch (W={}, mixup={})", w, mixup),
             fmt::format("rel err {:.3e}", err), "<= 1e-12");
    }
    const auto d1 = simulate_workers(t.params, t.batch, 1, GatherMode::kDetached, t.opts, t.ctx);
    const double err1 = gradient_relative_error(full.grads, d1.grads);
    record(out, err1 <= 1e-12, fmt::format("detached with one worker == full batch (mixup={})", mixup),
           fmt::format("rel err {:.3e}", err1), "<= 1e-12");
  }
  for (std::size_t n : {4, 8}) {
    for (std::size_t w : {2, 4}) {
      if (w > n) continue;
      ToySetup small = dga_config();
      small.batch = n;
      small.tau = 0.1;
      small.seed = 500 + n * 10 + w;
      const ToyProblem t = make_toy_problem(small);
      const auto full = full_batch_gradients(t.params, t.batch, t.opts, t.ctx);
      const double tau = t.params.blocks.temperature;
      const GradientSet exact =
          analytic_gradients(full.diag.probs, full.diag.labels, full.diag.labels, full.img_emb, full.txt_emb, tau);
      const auto det = simulate_workers(t.params, t.batch, w, GatherMode::kDetached, t.opts, t.ctx);
      const ShardPartition shards = contiguous_shards(n, w);
      const GradientSet brute = brute_force_detached_deficit(shards, full.img_emb, full.txt_emb, tau, full.diag.labels);
      Matrix observed_img = exact.d_img;
      observed_img -= det.d_img;
      Matrix observed_txt = exact.d_txt;
      observed_txt -= det.d_txt;
      const double e_img = relative_error(observed_img.flat(), brute.d_img.flat());
      const double e_txt = relative_error(observed_txt.flat(), brute.d_txt.flat());
      record(out, std::max(e_img, e_txt) <= 1e-12,
             fmt::format("detached deficit == brute-force cross terms (N={}, W={})", n, w),
             fmt::format("rel err {:.3e}", std::max(e_img, e_txt)), "<= 1e-12");
      const auto predicted = detached_gather_gradient(shards, full.diag.probs, full.diag.labels, full.diag.labels,
                                                      full.img_emb, full.txt_emb, tau);
      const double e_pred = std::max(relative_error(predicted.deficit.d_img.flat(), brute.d_img.flat()),
                                     relative_error(predicted.deficit.d_txt.flat(), brute.d_txt.flat()));
      record(out, e_pred <= 1e-12, fmt::format("predicted deficit == brute-force cross terms (N={}, W={})", n, w),
             fmt::format("rel err {:.3e}", e_pred), "<= 1e-12");
    }
  }
  return out;
}

VerifyOutcome suite_mixup() {
  VerifyOutcome out{"mixup", true, {}};
  Rng rng(SeedContext(5, "verify.mixup"));
  const std::size_t n = 12, d = 6;
  Matrix a(n, d), b(n, d);
  for (double& v : a.flat()) v = rng.normal();
  for (double& v : b.flat()) v = rng.normal();
  const Matrix img = l2_normalize_rows(a).rows, txt = l2_normalize_rows(b).rows;
  const double tau = 0.1;
  const SimilarityMatrix s = similarity_matrix(img, txt, tau);
  const LabelMatrix id = LabelMatrix::identity(n), mirror = LabelMatrix::mirror(n);
  MixupDecision dec;
  dec.batch = n;
  dec.lambda = 1.0;
  dec.gamma = 0.25;
  dec.modality = Modality::kText;
  const double plain = infonce_loss(s, id, id);
  const double coin = mixup_loss(txt, img, dec, tau);
  record(out, coin == plain, "mixup loss at lambda=1 == InfoNCE", fmt::format("{:.17g}", coin),
         fmt::format("{:.17g}", plain));
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double lambda = rng.uniform();
    const LabelMatrix y = LabelMatrix::blend(lambda, n);
    const double blended = infonce_loss(s, y, y);
    const double split = lambda * infonce_loss(s, id, id) + (1.0 - lambda) * infonce_loss(s, mirror, mirror);
    worst = std::max(worst, relative_error(blended, split));
  }
  record(out, worst <= 1e-12, "blended-label loss == lambda L_id + (1-lambda) L_mirror (100 lambdas)",
         fmt::format("max rel err {:.3e}", worst), "<= 1e-12");
  for (bool image_coin : {true, false}) {
    for (std::size_t batch : {4, 8}) {
      ToySetup setup;
      setup.batch = batch;
      setup.mixup = true;
      setup.image_coin = image_coin;
      setup.mixup_lambda = 0.3 + 0.05 * static_cast<double>(batch);
      setup.dropout = 0.1;
      setup.seed = 40 + batch + (image_coin ? 1 : 0);
      const double err = finite_difference_check(make_toy_problem(setup)).relative_error;
      record(out, err <= 1e-6,
             fmt::format("mixup gradient vs finite differences ({} coin, N={})", image_coin ? "image" : "text", batch),
             fmt::format("rel err {:.3e}", err), "<= 1e-6");
    }
  }
  return out;
}

VerifyOutcome suite_sampler() {
  VerifyOutcome out{"sampler", true, {}};
  SourceCatalog cat;
  const std::size_t sizes[] = {530, 300, 170};
  std::size_t next = 0;
  for (int id = 0; id < 3; ++id) {
    SourceCatalog::Source src{id, {}};
    for (std::size_t i = 0; i < sizes[id]; ++i) src.indices.push_back(next++);
    cat.sources.push_back(std::move(src));
  }
  const std::vector<int> source_of = cat.source_of();
  const std::size_t bs = 32;
  const std::size_t per_source_batches = 530 / bs + 300 / bs + 170 / bs;
  const auto single_source = [&](const EpochPlan& plan) {
    for (const auto& b : plan.batches) {
      if (!b.source) return false;
      for (std::size_t i : b.indices) {
        if (source_of[i] != *b.source) return false;
      }
    }
    return true;
  };
  const auto no_repeats = [](const EpochPlan& plan) {
    std::vector<std::size_t> all;
    for (const auto& b : plan.batches) all.insert(all.end(), b.indices.begin(), b.indices.end());
    std::sort(all.begin(), all.end());
    return std::adjacent_find(all.begin(), all.end()) == all.end();
  };
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const SeedContext ctx(seed, "verify.sampler");
    const auto deb = build_debiased_epoch(cat, bs, ctx);
    const auto seq = build_sequential_epoch(cat, {2, 0, 1}, bs, ctx);
    const auto rnd = build_random_epoch(cat, bs, ctx);
    record(out, single_source(deb) && no_repeats(deb), fmt::format("debiased batches single-source (seed {})", seed),
           single_source(deb) ? "all single-source" : "mixed batch found", "all single-source");
    record(out, single_source(seq) && no_repeats(seq), fmt::format("sequential batches single-source (seed {})", seed),
           single_source(seq) ? "all single-source" : "mixed batch found", "all single-source");
    record(out, deb.batches.size() == per_source_batches && seq.batches.size() == per_source_batches,
           fmt::format("per-source floor division batch count (seed {})", seed),
           fmt::format("{} / {}", deb.batches.size(), seq.batches.size()), std::to_string(per_source_batches));
    record(out, rnd.batches.size() == 1000 / bs && no_repeats(rnd),
           fmt::format("random epoch batch count (seed {})", seed), std::to_string(rnd.batches.size()),
           std::to_string(1000 / bs));
  }

  // Two well separated blobs.
  Rng rng(SeedContext(11, "verify.kmeans"));
  const std::size_t per = 60, d = 4;
  Matrix pts(2 * per, d);
  for (std::size_t r = 0; r < 2 * per; ++r) {
    for (std::size_t c = 0; c < d; ++c) pts(r, c) = (r < per ? 3.0 : -3.0) * (c == 0) + 0.3 * rng.normal();
  }
  const auto km = cluster_into_virtual_sources(pts, 2, 50, SeedContext(3, "verify.kmeans"));
  bool monotone = true;
  for (std::size_t i = 1; i < km.objective.size(); ++i) monotone = monotone && km.objective[i] <= km.objective[i - 1];
  record(out, monotone, "k-means objective non-increasing", fmt::format("{} iterations", km.objective.size()),
         "monotone");
  std::size_t wrong = 0;
  for (std::size_t r = 0; r < pts.rows(); ++r) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t c = 0; c < km.centroids.rows(); ++c) {
      double dist = 0.0;
      for (std::size_t e = 0; e < d; ++e) dist += (pts(r, e) - km.centroids(c, e)) * (pts(r, e) - km.centroids(c, e));
      if (dist < best_d) best_d = dist, best = c;
    }
    wrong += best != km.assignment[r];
  }
  record(out, wrong == 0, "k-means assignments are nearest centroids", fmt::format("{} mismatches", wrong), "0");
  const bool separated = km.assignment.front() != km.assignment.back() &&
                         std::all_of(km.assignment.begin(), km.assignment.begin() + per,
                                     [&](std::size_t a) { return a == km.assignment.front(); }) &&
                         std::all_of(km.assignment.begin() + per, km.assignment.end(),
                                     [&](std::size_t a) { return a == km.assignment.back(); });
  record(out, separated, "k-means recovers the two blobs", separated ? "recovered" : "split wrongly", "recovered");
  return out;
}

VerifyOutcome suite_corrupt() {
  VerifyOutcome out{"corrupt", true, {}};
  CorruptionConfig cfg;
  cfg.vocab = 500;
  CorruptionTrace trace;
  Rng rng(SeedContext(9, "verify.corrupt.data"));
  const SeedContext ctx(9, "verify.corrupt");
  std::vector<std::uint32_t> seq(20);
  for (std::size_t i = 0; i < 50000; ++i) {
    for (auto& t : seq) t = 1 + static_cast<std::uint32_t>(rng.below(cfg.vocab - 1));
    (void)corrupt_text(seq, cfg, ctx.derive("seq", i), &trace);
  }
  const double sel = static_cast<double>(trace.selected) / static_cast<double>(trace.seen);
  const double sel_n = static_cast<double>(trace.selected);
  const double mask = static_cast<double>(trace.masked) / sel_n;
  const double repl = static_cast<double>(trace.replaced) / sel_n;
  const double del = static_cast<double>(trace.deleted) / sel_n;
  record(out, std::abs(sel - 0.2) <= 0.002, fmt::format("selection rate over {} tokens", trace.seen),
         fmt::format("{:.5f}", sel), "0.2 +- 0.002");
  record(out, std::abs(mask - 0.5) <= 0.01, "mask rate among selected", fmt::format("{:.5f}", mask), "0.5 +- 0.01");
  record(out, std::abs(repl - 0.1) <= 0.01, "replace rate among selected", fmt::format("{:.5f}", repl),
         "0.1 +- 0.01");
  record(out, std::abs(del - 0.4) <= 0.01, "delete rate among selected", fmt::format("{:.5f}", del), "0.4 +- 0.01");
  return out;
}

}  // namespace

const std::vector<std::string>& verify_suite_names() {
  static const std::vector<std::string> names = {"grad", "dga", "gather", "mixup", "sampler", "corrupt"};
  return names;
}

VerifyOutcome run_verify_suite(const std::string& suite) {
  if (suite == "grad") return suite_grad();
  if (suite == "dga") return suite_dga();
  if (suite == "gather") return suite_gather();
  if (suite == "mixup") return suite_mixup();
  if (suite == "sampler") return suite_sampler();
  if (suite == "corrupt") return suite_corrupt();
  throw InvalidArgument(fmt::format("unknown verify suite '{}' (grad, dga, gather, mixup, sampler, corrupt)", suite));
}

}  // namespace contra
