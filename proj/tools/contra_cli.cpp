// contra: experiment runner and verification harness.
//
//   contra gen-corpus [--config FILE] [--out DIR] [--key value ...]
//   contra train      --config FILE  [--out DIR] [--key value ...]
//   contra eval       --run DIR
//   contra verify     SUITE... | all
//   contra compare    RUN_DIR... [--csv FILE]
//
// Exit status: 0 success, 1 runtime or oracle failure, 2 configuration error.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "CLI11.hpp"

#include "contra/checkpoint.hpp"
#include "contra/config.hpp"
#include "contra/kernels.hpp"
#include "contra/oracles.hpp"
#include "contra/synthdata.hpp"
#include "contra/trainer.hpp"

#ifndef CONTRA_VERSION
#define CONTRA_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace contra;

namespace {

constexpr int kExitConfig = 2;
constexpr const char* kOutRootEnv = "CONTRA_OUT_ROOT";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Leftover "--key value" pairs become config overrides.
std::map<std::string, std::string> parse_overrides(const std::vector<std::string>& rest) {
  std::map<std::string, std::string> out;
  for (std::size_t i = 0; i < rest.size(); ++i) {
    const std::string& arg = rest[i];
    if (arg.rfind("--", 0) != 0 || arg.size() == 2) throw UsageError(fmt::format("unexpected argument '{}'", arg));
    std::string key = arg.substr(2), value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= rest.size()) throw UsageError(fmt::format("override --{} needs a value", key));
      value = rest[++i];
    }
    out[key] = value;
  }
  return out;
}

ExperimentConfig read_config(const std::string& path, const std::map<std::string, std::string>& overrides,
                             bool require_keys) {
  ConfigMap map;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("--config", 0, fmt::format("cannot open '{}'", path));
    std::stringstream buf;
    buf << in.rdbuf();
    map = parse_config_text(buf.str());
  }
  for (const auto& [k, v] : overrides) map[k] = {v, 0};
  return config_from_map(map, require_keys);
}

Corpus corpus_for(const ExperimentConfig& cfg) {
  if (!cfg.corpus_path.empty()) return load_corpus(cfg.corpus_path);
  return generate_corpus(cfg.corpus_spec, SeedContext(cfg.corpus_seed, "corpus"));
}

fs::path output_root() {
  const char* env = std::getenv(kOutRootEnv);
  return env && *env ? fs::path(env) : fs::path("runs");
}

fs::path default_run_dir(const ExperimentConfig& cfg) {
  std::string name = fmt::format("{}-{}-seed{}", to_string(cfg.sampler), cfg.mode.to_string(), cfg.seed);
  std::replace(name.begin(), name.end(), ':', '_');
  return output_root() / name;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(fmt::format("cannot write '{}'", path.string()));
  os << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot read '{}'", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int cmd_gen_corpus(const std::string& config, const std::string& out, const std::vector<std::string>& rest) {
  const ExperimentConfig cfg = read_config(config, parse_overrides(rest), false);
  fs::path dir = out.empty() ? (cfg.out_dir.empty() ? output_root() / "corpus" : fs::path(cfg.out_dir)) : fs::path(out);
  const Corpus corpus = generate_corpus(cfg.corpus_spec, SeedContext(cfg.corpus_seed, "corpus"));
  save_corpus(corpus, dir);
  fmt::print("wrote {} training and {} eval pairs over {} sources to {}\n", corpus.train.size(), corpus.eval.size(),
             corpus.spec.sources.size(), dir.string());
  return 0;
}

int cmd_train(const std::string& config, const std::string& out, const std::vector<std::string>& rest) {
  ExperimentConfig cfg = read_config(config, parse_overrides(rest), true);
  if (!out.empty()) cfg.out_dir = out;
  const fs::path dir = cfg.out_dir.empty() ? default_run_dir(cfg) : fs::path(cfg.out_dir);
  fs::create_directories(dir);

  // The snapshot leaves out_dir unset so a rerun from it picks its own directory.
  ExperimentConfig snap = cfg;
  snap.out_dir.clear();
  write_text(dir / "config.txt", snap.snapshot());
  write_text(dir / "version.txt", fmt::format("contra {}\nkernels {}\n", CONTRA_VERSION, isa_name(kernels::active().isa)));
  write_text(dir / "seeds.txt", fmt::format("seed = {}\ncorpus.seed = {}\n", cfg.seed, cfg.corpus_seed));

  const Corpus corpus = corpus_for(cfg);
  std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary);
  if (!metrics) throw Error(fmt::format("cannot write '{}'", (dir / "metrics.jsonl").string()));
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult result = train(corpus, cfg, [&](const StepMetrics& m) { metrics << m.to_json() << '\n'; });
  metrics.flush();

  save_checkpoint({result.params, result.optimizer}, dir / "checkpoint.txt");
  write_text(dir / "report.json", result.report.to_json() + "\n");
  const auto rows = export_rows(corpus, cfg.export_per_source);
  const auto [img, txt] = embed_rows(result.params, corpus, rows);
  std::vector<int> tags;
  for (std::size_t r : rows) tags.push_back(corpus.train[r].source);
  export_embeddings(img, txt, tags, dir / "embeddings.csv");

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  fmt::print("{} steps in {:.1f}s, final loss {:.4f}, held-out RSUM {:.1f}\n", result.total_steps, secs,
             result.metrics.empty() ? 0.0 : result.metrics.back().loss, result.report.rsum);
  fmt::print("run directory: {}\n", dir.string());
  return 0;
}

ExperimentConfig run_config(const fs::path& dir) {
  return config_from_map(parse_config_text(read_text(dir / "config.txt")), true);
}

int cmd_eval(const std::string& run) {
  const fs::path dir(run);
  const ExperimentConfig cfg = run_config(dir);
  const Checkpoint ck = load_checkpoint(dir / "checkpoint.txt");
  const RetrievalReport report = evaluate(ck.params, corpus_for(cfg));
  fmt::print("{}\n", report.to_json());
  return 0;
}

int cmd_verify(std::vector<std::string> suites) {
  if (suites.empty() || (suites.size() == 1 && suites[0] == "all")) suites = verify_suite_names();
  bool ok = true;
  for (const auto& name : suites) {
    const auto t0 = std::chrono::steady_clock::now();
    const VerifyOutcome outcome = run_verify_suite(name);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& line : outcome.lines) fmt::print("[{}] {}\n", name, line);
    fmt::print("[{}] {} ({:.1f}s)\n", name, outcome.passed ? "passed" : "FAILED", secs);
    ok = ok && outcome.passed;
  }
  return ok ? 0 : 1;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_compare(const std::vector<std::string>& runs, const std::string& csv) {
  std::string out = "run,sampler,mode,seed,source_id,logp_neg,rsum,i2t_r1,i2t_r5,i2t_r10,t2i_r1,t2i_r5,t2i_r10\n";
  std::map<std::string, std::vector<double>> rsum_by_group;
  for (const auto& run : runs) {
    const fs::path dir(run);
    const ExperimentConfig cfg = run_config(dir);
    const RetrievalReport r = RetrievalReport::from_json(read_text(dir / "report.json"));
    std::vector<StepMetrics> metrics;
    std::istringstream lines(read_text(dir / "metrics.jsonl"));
    for (std::string line; std::getline(lines, line);) {
      if (!line.empty()) metrics.push_back(StepMetrics::from_json(line));
    }
    const std::string sampler = to_string(cfg.sampler), mode = cfg.mode.to_string();
    for (const auto& [source, logp] : final_epoch_logp(metrics)) {
      out += fmt::format("{},{},{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", run,
                         sampler, mode, cfg.seed, source, logp, r.rsum, r.i2t_r1, r.i2t_r5, r.i2t_r10, r.t2i_r1,
                         r.t2i_r5, r.t2i_r10);
    }
    rsum_by_group[sampler + " " + mode].push_back(r.rsum);
  }
  if (csv.empty()) {
    fmt::print("{}", out);
  } else {
    write_text(csv, out);
    fmt::print("wrote {}\n", csv);
  }
  for (const auto& [group, values] : rsum_by_group) {
    fmt::print(stderr, "{}: median RSUM {:.2f} over {} run(s)\n", group, median(values), values.size());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive image-text training with debiased sampling and exact large-batch gradients"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("contra ") + CONTRA_VERSION);

  std::string config, out, run, csv;
  std::vector<std::string> suites, runs;

  auto* gen = app.add_subcommand("gen-corpus", "Generate the synthetic multi-source corpus");
  gen->add_option("--config", config, "Config file (key = value)");
  gen->add_option("--out", out, "Corpus directory");
  gen->allow_extras();

  auto* tr = app.add_subcommand("train", "Train and evaluate one configuration");
  tr->add_option("--config", config, "Config file (key = value)")->required();
  tr->add_option("--out", out, std::string("Run directory (default: $") + kOutRootEnv + "/<sampler>-<mode>-seed<N>)");
  tr->allow_extras();

  auto* ev = app.add_subcommand("eval", "Held-out retrieval report from a run's checkpoint");
  ev->add_option("--run", run, "Run directory")->required();

  auto* ver = app.add_subcommand("verify", "Run oracle suites: grad dga gather mixup sampler corrupt, or all");
  ver->add_option("suites", suites, "Suites to run")->check(CLI::IsMember([] {
    auto names = verify_suite_names();
    names.push_back("all");
    return names;
  }()));

  auto* cmp = app.add_subcommand("compare", "Tabulate RSUM and negative log-probabilities across runs");
  cmp->add_option("runs", runs, "Run directories")->required();
  cmp->add_option("--csv", csv, "Write the table here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_corpus(config, out, gen->remaining());
    if (*tr) return cmd_train(config, out, tr->remaining());
    if (*ev) return cmd_eval(run);
    if (*ver) return cmd_verify(suites);
    if (*cmp) return cmd_compare(runs, csv);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitConfig;
  } catch (const UsageError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 1;
}
