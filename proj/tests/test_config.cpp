#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "contra/checkpoint.hpp"
#include "contra/config.hpp"

using namespace contra;

namespace {

const char* kBase =
    "# comment line\n"
    "seed = 4\n"
    "sampler = debiased\n"
    "batch_size = 32\n"
    "epochs = 3   # trailing comment\n"
    "mode = dga:8\n";

ConfigError error_of(const std::string& text) {
  try {
    (void)config_from_map(parse_config_text(text));
  } catch (const ConfigError& e) {
    return e;
  }
  FAIL("expected a ConfigError");
  return ConfigError("", 0, "");
}

}  // namespace

TEST_CASE("parsing a config") {
  const auto cfg = config_from_map(parse_config_text(kBase));
  CHECK(cfg.seed == 4);
  CHECK(cfg.sampler == SamplerKind::kDebiased);
  CHECK(cfg.batch_size == 32);
  CHECK(cfg.epochs == 3);
  CHECK(cfg.mode.kind == ModeKind::kDga);
  CHECK(cfg.mode.sub_batch == 8);
}

TEST_CASE("execution modes") {
  const auto w = ExecutionMode::parse("workers:4:detached");
  CHECK(w.kind == ModeKind::kWorkers);
  CHECK(w.workers == 4);
  CHECK(w.gather == GatherMode::kDetached);
  CHECK(w.to_string() == "workers:4:detached");
  CHECK(ExecutionMode::parse("full").to_string() == "full");
  CHECK_THROWS_AS(ExecutionMode::parse("workers:4"), InvalidArgument);
  CHECK_THROWS_AS(ExecutionMode::parse("dga:0"), InvalidArgument);
  CHECK_THROWS_AS(ExecutionMode::parse("turbo"), InvalidArgument);
}

TEST_CASE("errors name the key and line") {
  auto e = error_of("seed = 1\nsampler = random\nbatch_size = 32\nepochs = 1\n");
  CHECK(e.key() == "mode");
  CHECK(std::string(e.what()).find("mode") != std::string::npos);

  e = error_of(std::string(kBase) + "batch_sise = 3\n");
  CHECK(e.key() == "batch_sise");
  CHECK(e.line() == 7);

  e = error_of("seed = 1\nsampler = random\nbatch_size = 30\nepochs = 1\nmode = workers:4:reserved\n");
  CHECK(e.line() == 5);
  CHECK(std::string(e.what()).find("config line 5") != std::string::npos);

  e = error_of("seed = 1\nseed = 2\n");
  CHECK(e.line() == 2);
  e = error_of("seed = -3\nsampler = random\nbatch_size = 30\nepochs = 1\nmode = full\n");
  CHECK(e.key() == "seed");
  e = error_of("seed = 1\nsampler = randum\nbatch_size = 30\nepochs = 1\nmode = full\n");
  CHECK(e.key() == "sampler");
  e = error_of("just some words\n");
  CHECK(e.line() == 1);
}

TEST_CASE("corpus keys and broadcasting") {
  const auto cfg = config_from_map(parse_config_text(std::string(kBase) +
                                                     "corpus.sizes = 100,200\n"
                                                     "corpus.style_strength = 0.5\n"
                                                     "corpus.lengths = 3-5,7-9\n"));
  REQUIRE(cfg.corpus_spec.sources.size() == 2);
  CHECK(cfg.corpus_spec.sources[1].count == 200);
  CHECK(cfg.corpus_spec.sources[0].style_strength == 0.5);
  CHECK(cfg.corpus_spec.sources[1].style_strength == 0.5);
  CHECK(cfg.corpus_spec.sources[1].min_len == 7);
  CHECK(error_of(std::string(kBase) + "corpus.sizes = 100,200\ncorpus.lengths = 1-2,3-4,5-6\n").key() ==
        "corpus.lengths");
}

TEST_CASE("snapshot reloads to the same configuration") {
  auto cfg = config_from_map(parse_config_text(std::string(kBase) + "mixup = true\noptim.lr = 0.01\n"));
  const auto again = config_from_map(parse_config_text(cfg.snapshot()));
  CHECK(again.snapshot() == cfg.snapshot());
  CHECK(again.corpus_spec == cfg.corpus_spec);
  CHECK(again.optimizer.base_lr == 0.01);
  CHECK(again.mixup);
}

TEST_CASE("overrides from the command line") {
  const auto path = std::filesystem::temp_directory_path() / "contra_cfg_test.conf";
  std::ofstream(path) << kBase;
  const auto cfg = load_config(path.string(), {{"epochs", "9"}, {"mode", "full"}});
  CHECK(cfg.epochs == 9);
  CHECK(cfg.mode.kind == ModeKind::kFull);
  try {
    (void)load_config(path.string(), {{"mode", "dga:7"}});
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "mode");
  }
  CHECK_THROWS_AS(load_config("/nonexistent/x.conf"), InvalidArgument);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint round-trip is exact") {
  EncoderDims d;
  d.embed_dim = 7;
  d.vocab = 30;
  auto params = init_params(d, SeedContext(3, "init"));
  params.freeze_text = true;
  params.dropout = 0.1;
  Checkpoint ck{params, OptimizerState::for_params(params)};
  ck.optimizer.step = 17;
  ck.optimizer.first_moment.image_out(1, 2) = 1.0 / 3.0;
  ck.optimizer.second_moment.temperature = 1e-300;

  const auto path = std::filesystem::temp_directory_path() / "contra_ckpt_test.txt";
  save_checkpoint(ck, path);
  const auto back = load_checkpoint(path);
  CHECK(back.params.blocks == ck.params.blocks);
  CHECK(back.params.dims == ck.params.dims);
  CHECK(back.params.freeze_text);
  CHECK(back.params.dropout == 0.1);
  CHECK(back.optimizer.first_moment == ck.optimizer.first_moment);
  CHECK(back.optimizer.second_moment == ck.optimizer.second_moment);
  CHECK(back.optimizer.step == 17);

  std::ifstream in(path);
  std::string content((std::istreambuf_iterator<char>(in)), {});
  content.replace(0, content.find('\n'), "contra-checkpoint 2");
  std::ofstream(path) << content;
  try {
    (void)load_checkpoint(path);
    FAIL("expected a version error");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
  std::filesystem::remove(path);
}
