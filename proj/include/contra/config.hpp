#pragma once

// Experiment configuration: a key=value text file, one key per line, '#'
// comments. The same keys are accepted as `--key value` CLI overrides.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "contra/encoders.hpp"
#include "contra/engine.hpp"
#include "contra/error.hpp"
#include "contra/synthdata.hpp"

namespace contra {

/// Raised for malformed configuration; carries the offending key and line (0 if from an override).
class ConfigError : public InvalidArgument {
 public:
  ConfigError(std::string key, std::size_t line, const std::string& message);
  const std::string& key() const noexcept { return key_; }
  std::size_t line() const noexcept { return line_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string key_;
  std::size_t line_;
  std::string detail_;
};

enum class SamplerKind { kRandom, kSequential, kDebiased, kDebiasedKMeans };
enum class ModeKind { kFull, kWorkers, kDga };

struct ExecutionMode {
  ModeKind kind = ModeKind::kFull;
  std::size_t workers = 1;
  GatherMode gather = GatherMode::kReserved;
  std::size_t sub_batch = 0;

  /// "full", "workers:<W>:<detached|reserved>" or "dga:<m>".
  static ExecutionMode parse(const std::string& text);
  std::string to_string() const;
};

std::string to_string(SamplerKind kind);
SamplerKind parse_sampler(const std::string& text);

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string corpus_path;  // empty: generate from corpus_spec and corpus_seed
  CorpusSpec corpus_spec;
  std::uint64_t corpus_seed = 7;

  SamplerKind sampler = SamplerKind::kRandom;
  std::vector<int> sequential_order;
  std::size_t kmeans_k = 100;
  std::size_t kmeans_iters = 50;
  std::size_t batch_size = 128;
  std::size_t epochs = 1;

  bool mixup = false;
  double mixup_alpha = kDefaultMixupAlpha;
  double token_drop = 0.0;
  double dropout = 0.0;
  bool corrupt_text = true;
  ExecutionMode mode;
  OptimizerHyper optimizer;

  std::size_t image_hidden = 64;
  std::size_t text_hidden = 64;
  std::size_t embed_dim = 512;

  std::size_t export_per_source = 200;
  std::string out_dir;

  /// Checks cross-field constraints that need no corpus (mode divisibility, ranges).
  void validate() const;
  /// Key=value text with every field, suitable for re-loading.
  std::string snapshot() const;
};

/// Keys that must appear in a config file.
const std::vector<std::string>& required_config_keys();

using ConfigMap = std::map<std::string, std::pair<std::string, std::size_t>>;  // key -> (value, line)

ConfigMap parse_config_text(const std::string& text);
/// Applies a parsed map on top of defaults; throws ConfigError naming the key.
ExperimentConfig config_from_map(const ConfigMap& map, bool require_keys = true);
ExperimentConfig load_config(const std::string& path,
                             const std::map<std::string, std::string>& overrides = {});

/// The three-source biased corpus used by the experiments: sources of
/// 3000/2000/1000 pairs with distinct image styles, style tokens and caption lengths.
CorpusSpec default_biased_corpus();

}  // namespace contra
