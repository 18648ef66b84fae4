#include "contra/trainer.hpp"

#include <chrono>
#include <cmath>

#include <fmt/format.h>

#include "json.hpp"

#include "contra/error.hpp"
#include "contra/numerics.hpp"

namespace contra {

std::string StepMetrics::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["mode"] = mode;
  j["loss"] = loss;
  j["lr"] = lr;
  j["tau"] = tau;
  j["grad_norm"] = grad_norm;
  nlohmann::ordered_json per_source = nlohmann::ordered_json::object();
  for (const auto& [source, value] : logp_neg_per_source) per_source[std::to_string(source)] = value;
  j["logp_neg_per_source"] = per_source;
  j["wallclock_ms"] = wallclock_ms;
  return j.dump();
}

StepMetrics StepMetrics::from_json(const std::string& line) {
  StepMetrics m;
  try {
    const auto j = nlohmann::json::parse(line);
    m.step = j.at("step").get<std::size_t>();
    m.epoch = j.at("epoch").get<std::size_t>();
    m.mode = j.at("mode").get<std::string>();
    m.loss = j.at("loss").get<double>();
    m.lr = j.at("lr").get<double>();
    m.tau = j.at("tau").get<double>();
    m.grad_norm = j.at("grad_norm").get<double>();
    for (const auto& [k, v] : j.at("logp_neg_per_source").items()) {
      m.logp_neg_per_source[std::stoi(k)] = v.get<double>();
    }
    m.wallclock_ms = j.at("wallclock_ms").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(fmt::format("malformed metrics line: {}", e.what()));
  }
  return m;
}

StepConfig StepConfig::from(const ExperimentConfig& cfg) {
  StepConfig s;
  s.mode = cfg.mode;
  s.token_drop = cfg.token_drop;
  s.mixup = cfg.mixup;
  s.mixup_alpha = cfg.mixup_alpha;
  s.optimizer = cfg.optimizer;
  return s;
}

ModeGradients mode_gradients(const EncoderParams& params, const Batch& batch, const StepConfig& cfg,
                             const SeedContext& ctx) {
  StepOptions opts;
  opts.token_drop_rate = cfg.token_drop;
  if (cfg.mixup) opts.mixup = sample_mixup_decision(cfg.mixup_alpha, batch.size(), ctx.derive("mixup"));
  const SeedContext forward = ctx.derive("forward");
  switch (cfg.mode.kind) {
    case ModeKind::kFull: {
      auto g = full_batch_gradients(params, batch, opts, forward);
      return {std::move(g.grads), std::move(g.diag)};
    }
    case ModeKind::kWorkers: {
      auto g = simulate_workers(params, batch, cfg.mode.workers, cfg.mode.gather, opts, forward);
      return {std::move(g.grads), std::move(g.diag)};
    }
    case ModeKind::kDga: {
      DgaOptions dga;
      dga.sub_batch = cfg.mode.sub_batch;
      auto g = dga_gradients(params, batch, dga, opts, forward);
      return {std::move(g.grads), std::move(g.diag)};
    }
  }
  throw InvalidArgument("unknown execution mode");
}

StepMetrics train_step(EncoderParams& params, OptimizerState& state, const Batch& batch,
                       const StepConfig& cfg, double lr, const SeedContext& ctx) {
  ModeGradients g;
  try {
    g = mode_gradients(params, batch, cfg, ctx);
  } catch (const NonFiniteError& e) {
    throw NonFiniteError(fmt::format("step {}: {} (tau {}, lr {}, mode {}, params finite: image_out {}, text_out {})",
                                     state.step, e.what(), params.blocks.temperature, lr, cfg.mode.to_string(),
                                     params.blocks.image_out.all_finite(), params.blocks.text_out.all_finite()));
  }
  StepMetrics m;
  m.step = state.step;
  m.mode = cfg.mode.to_string();
  m.loss = g.diag.loss;
  m.lr = lr;
  m.grad_norm = gradient_norm(g.grads);
  if (!std::isfinite(m.loss) || !std::isfinite(m.grad_norm)) {
    throw NonFiniteError(fmt::format(
        "step {}: loss {} grad_norm {} tau {} lr {} mode {} batch {} (params finite: image_out {}, text_out {})",
        state.step, m.loss, m.grad_norm, params.blocks.temperature, lr, m.mode, batch.size(),
        params.blocks.image_out.all_finite(), params.blocks.text_out.all_finite()));
  }
  m.logp_neg_per_source = negative_logp_stats(g.diag.probs, g.diag.labels, g.diag.labels, batch.sources).per_source;
  adamw_update(params, g.grads, state, lr, cfg.optimizer);
  m.tau = params.blocks.temperature;
  return m;
}

Batch assemble_batch(const Corpus& corpus, std::span<const std::size_t> indices, bool corrupt,
                     const SeedContext& step_ctx) {
  Batch b;
  b.images = make_image_batch(corpus.train, indices, corpus.spec.patches, corpus.spec.patch_dim);
  b.texts = make_text_batch(corpus.train, indices);
  if (corrupt) {
    CorruptionConfig cc;
    cc.vocab = static_cast<std::uint32_t>(corpus.spec.vocab);
    for (std::size_t r = 0; r < b.texts.sequences.size(); ++r) {
      b.texts.sequences[r] = corrupt_text(b.texts.sequences[r], cc, step_ctx.derive("corrupt", r));
    }
  }
  b.sources.reserve(indices.size());
  for (std::size_t i : indices) b.sources.push_back(corpus.train.at(i).source);
  return b;
}

Matrix clustering_features(const Corpus& corpus) {
  const std::size_t p = corpus.spec.patches, d = corpus.spec.patch_dim;
  Matrix pooled(corpus.train.size(), d);
  for (std::size_t i = 0; i < corpus.train.size(); ++i) {
    auto row = pooled.row(i);
    for (std::size_t k = 0; k < p; ++k) {
      for (std::size_t f = 0; f < d; ++f) row[f] += corpus.train[i].image[k * d + f];
    }
  }
  return l2_normalize_rows(pooled).rows;
}

EpochPlan plan_epoch(const Corpus& corpus, const ExperimentConfig& cfg, std::size_t epoch,
                     const SourceCatalog* virtual_sources) {
  const SeedContext ctx = SeedContext(cfg.seed, "plan").derive("epoch", epoch);
  switch (cfg.sampler) {
    case SamplerKind::kRandom:
      return build_random_epoch(corpus.catalog(), cfg.batch_size, ctx);
    case SamplerKind::kSequential: {
      const SourceCatalog cat = corpus.catalog();
      std::vector<int> order = cfg.sequential_order;
      if (order.empty()) {
        for (const auto& s : cat.sources) order.push_back(s.id);
      }
      return build_sequential_epoch(cat, order, cfg.batch_size, ctx);
    }
    case SamplerKind::kDebiased:
      return build_debiased_epoch(corpus.catalog(), cfg.batch_size, ctx);
    case SamplerKind::kDebiasedKMeans:
      if (!virtual_sources) throw ContractError("debiased-kmeans planning needs the clustered catalog");
      return build_debiased_epoch(*virtual_sources, cfg.batch_size, ctx);
  }
  throw InvalidArgument("unknown sampler");
}

RetrievalReport evaluate(const EncoderParams& params, const Corpus& corpus) {
  EncoderParams p = params;
  p.dropout = 0.0;
  std::vector<std::size_t> rows(corpus.eval.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const SeedContext ctx(0, "eval");
  const auto img = encode_images(p, make_image_batch(corpus.eval, rows, corpus.spec.patches, corpus.spec.patch_dim),
                                 0.0, ctx);
  const auto txt = encode_texts(p, make_text_batch(corpus.eval, rows), std::nullopt, ctx);
  return retrieval_report(img.embeddings, txt.embeddings);
}

std::pair<Matrix, Matrix> embed_rows(const EncoderParams& params, const Corpus& corpus,
                                     const std::vector<std::size_t>& rows) {
  EncoderParams p = params;
  p.dropout = 0.0;
  const SeedContext ctx(0, "export");
  auto img = encode_images(p, make_image_batch(corpus.train, rows, corpus.spec.patches, corpus.spec.patch_dim),
                           0.0, ctx);
  auto txt = encode_texts(p, make_text_batch(corpus.train, rows), std::nullopt, ctx);
  return {std::move(img.embeddings), std::move(txt.embeddings)};
}

std::vector<std::size_t> export_rows(const Corpus& corpus, std::size_t per_source) {
  std::vector<std::size_t> rows;
  for (const auto& src : corpus.catalog().sources) {
    const std::size_t n = std::min(per_source, src.indices.size());
    rows.insert(rows.end(), src.indices.begin(), src.indices.begin() + static_cast<std::ptrdiff_t>(n));
  }
  return rows;
}

std::map<int, double> final_epoch_logp(const std::vector<StepMetrics>& metrics) {
  std::map<int, std::pair<double, std::size_t>> acc;
  if (metrics.empty()) return {};
  const std::size_t last = metrics.back().epoch;
  for (const auto& m : metrics) {
    if (m.epoch != last) continue;
    for (const auto& [source, v] : m.logp_neg_per_source) {
      acc[source].first += v;
      ++acc[source].second;
    }
  }
  std::map<int, double> out;
  for (const auto& [source, a] : acc) out[source] = a.first / static_cast<double>(a.second);
  return out;
}

TrainResult train(const Corpus& corpus, const ExperimentConfig& cfg, const MetricsSink& sink,
                  std::optional<EncoderParams> init) {
  cfg.validate();
  TrainResult result;
  if (init) {
    result.params = std::move(*init);
    const EncoderDims expected = corpus.encoder_dims(result.params.dims.image_hidden,
                                                     result.params.dims.text_hidden, result.params.dims.embed_dim);
    if (result.params.dims != expected) throw ContractError("initial parameters do not fit the corpus dimensions");
  } else {
    result.params = init_params(corpus.encoder_dims(cfg.image_hidden, cfg.text_hidden, cfg.embed_dim),
                                SeedContext(cfg.seed, "init"));
  }
  result.params.dropout = cfg.dropout;
  result.optimizer = OptimizerState::for_params(result.params);

  std::optional<SourceCatalog> virtual_sources;
  if (cfg.sampler == SamplerKind::kDebiasedKMeans) {
    virtual_sources = cluster_into_virtual_sources(clustering_features(corpus), cfg.kmeans_k, cfg.kmeans_iters,
                                                   SeedContext(cfg.seed, "kmeans"))
                          .catalog;
  }
  const SourceCatalog* vs = virtual_sources ? &*virtual_sources : nullptr;

  const StepConfig step_cfg = StepConfig::from(cfg);
  EpochPlan plan = plan_epoch(corpus, cfg, 0, vs);
  result.batches_per_epoch = plan.batches.size();
  result.total_steps = result.batches_per_epoch * cfg.epochs;
  const SeedContext step_root(cfg.seed, "step");

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch > 0) plan = plan_epoch(corpus, cfg, epoch, vs);
    for (const auto& planned : plan.batches) {
      const auto start = std::chrono::steady_clock::now();
      const SeedContext ctx = step_root.derive("n", step);
      const Batch batch = assemble_batch(corpus, planned.indices, cfg.corrupt_text, ctx);
      const double lr = cosine_lr(step, result.total_steps, cfg.optimizer.base_lr, cfg.optimizer.min_lr);
      StepMetrics m = train_step(result.params, result.optimizer, batch, step_cfg, lr, ctx);
      m.step = step;
      m.epoch = epoch;
      m.wallclock_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      if (sink) sink(m);
      result.metrics.push_back(std::move(m));
      ++step;
    }
  }
  result.report = evaluate(result.params, corpus);
  return result;
}

TrainResult auxiliary_retrain(const EncoderParams& params, Tower frozen, std::size_t replacement_hidden,
                              const Corpus& corpus, const ExperimentConfig& cfg, const SeedContext& ctx,
                              const MetricsSink& sink) {
  if (frozen == Tower::kShared) throw InvalidArgument("auxiliary retraining needs one trainable tower");
  const Tower replaced = frozen == Tower::kImage ? Tower::kText : Tower::kImage;
  if (params.frozen(replaced)) {
    throw InvalidArgument("auxiliary retraining would leave both towers frozen");
  }
  EncoderParams p = params;
  reinit_tower(p, replaced, replacement_hidden, ctx);
  p.freeze_image = frozen == Tower::kImage;
  p.freeze_text = frozen == Tower::kText;
  return train(corpus, cfg, sink, std::move(p));
}

}  // namespace contra
