#include "contra/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include <fmt/format.h>

namespace contra {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

struct Field {
  std::string key;
  std::size_t line;
  std::string value;

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(key, line, fmt::format("value '{}' {}", value, what));
  }

  std::uint64_t as_u64() const {
    std::uint64_t v = 0;
    const auto* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, v);
    if (ec != std::errc() || ptr != end || value.empty()) fail("is not a non-negative integer");
    return v;
  }
  std::size_t as_size() const { return static_cast<std::size_t>(as_u64()); }
  std::size_t as_positive() const {
    const auto v = as_size();
    if (v == 0) fail("must be positive");
    return v;
  }
  double as_double() const {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      fail("is not a number");
    }
    if (used != value.size()) fail("is not a number");
    return v;
  }
  bool as_bool() const {
    if (value == "true" || value == "1" || value == "on") return true;
    if (value == "false" || value == "0" || value == "off") return false;
    fail("is not a boolean (true/false)");
  }
  std::vector<std::string> items() const {
    auto parts = split(value, ',');
    if (parts.empty()) fail("is an empty list");
    return parts;
  }
  template <class T>
  std::vector<T> list(T (Field::*convert)() const) const {
    std::vector<T> out;
    for (const auto& item : items()) out.push_back((Field{key, line, item}.*convert)());
    return out;
  }
  std::pair<std::size_t, std::size_t> range(const std::string& item) const {
    const auto dash = item.find('-');
    if (dash == std::string::npos) fail("needs ranges written as min-max");
    const Field lo{key, line, item.substr(0, dash)}, hi{key, line, item.substr(dash + 1)};
    return {lo.as_positive(), hi.as_positive()};
  }
};

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += fmt::format("{}{:.17g}", i ? "," : "", v[i]);
  return out;
}

// Applies a per-source list; a single value is broadcast.
template <class T, class Set>
void per_source(const Field& f, std::vector<T> values, std::vector<SourceSpec>& sources, Set set) {
  if (values.size() == 1) values.assign(sources.size(), values.front());
  if (values.size() != sources.size()) {
    f.fail(fmt::format("has {} entries but the corpus has {} sources", values.size(), sources.size()));
  }
  for (std::size_t i = 0; i < sources.size(); ++i) set(sources[i], values[i]);
}

}  // namespace

ConfigError::ConfigError(std::string key, std::size_t line, const std::string& message)
    : InvalidArgument(line ? fmt::format("config line {}: key '{}': {}", line, key, message)
                           : fmt::format("config key '{}': {}", key, message)),
      key_(std::move(key)),
      line_(line),
      detail_(message) {}

ExecutionMode ExecutionMode::parse(const std::string& text) {
  const auto parts = split(text, ':');
  auto number = [&](const std::string& s) -> std::size_t {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || v == 0) {
      throw InvalidArgument(fmt::format("mode '{}': '{}' is not a positive integer", text, s));
    }
    return v;
  };
  ExecutionMode m;
  if (parts.size() == 1 && parts[0] == "full") return m;
  if (parts.size() == 3 && parts[0] == "workers") {
    m.kind = ModeKind::kWorkers;
    m.workers = number(parts[1]);
    if (parts[2] == "detached") {
      m.gather = GatherMode::kDetached;
    } else if (parts[2] == "reserved") {
      m.gather = GatherMode::kReserved;
    } else {
      throw InvalidArgument(fmt::format("mode '{}': gather must be detached or reserved", text));
    }
    return m;
  }
  if (parts.size() == 2 && parts[0] == "dga") {
    m.kind = ModeKind::kDga;
    m.sub_batch = number(parts[1]);
    return m;
  }
  throw InvalidArgument(fmt::format("mode '{}' is not full, workers:W:detached|reserved or dga:m", text));
}

std::string ExecutionMode::to_string() const {
  switch (kind) {
    case ModeKind::kFull:
      return "full";
    case ModeKind::kWorkers:
      return fmt::format("workers:{}:{}", workers, contra::to_string(gather));
    case ModeKind::kDga:
      return fmt::format("dga:{}", sub_batch);
  }
  return "full";
}

std::string to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::kRandom:
      return "random";
    case SamplerKind::kSequential:
      return "sequential";
    case SamplerKind::kDebiased:
      return "debiased";
    case SamplerKind::kDebiasedKMeans:
      return "debiased-kmeans";
  }
  return "random";
}

SamplerKind parse_sampler(const std::string& text) {
  if (text == "random") return SamplerKind::kRandom;
  if (text == "sequential") return SamplerKind::kSequential;
  if (text == "debiased") return SamplerKind::kDebiased;
  if (text == "debiased-kmeans") return SamplerKind::kDebiasedKMeans;
  throw InvalidArgument(fmt::format("sampler '{}' is not random, sequential, debiased or debiased-kmeans", text));
}

CorpusSpec default_biased_corpus() {
  CorpusSpec spec;
  spec.latent_dim = 16;
  spec.patches = 8;
  spec.patch_dim = 16;
  spec.noise_scale = 0.3;
  spec.eval_count = 1000;
  const std::size_t counts[] = {3000, 2000, 1000};
  const std::size_t lengths[][2] = {{6, 9}, {14, 18}, {10, 12}};
  for (std::size_t i = 0; i < 3; ++i) {
    SourceSpec s;
    s.count = counts[i];
    s.style_strength = 1.5;
    s.style_token_rate = 0.3;
    s.min_len = lengths[i][0];
    s.max_len = lengths[i][1];
    spec.sources.push_back(s);
  }
  return spec;
}

const std::vector<std::string>& required_config_keys() {
  static const std::vector<std::string> keys = {"seed", "sampler", "batch_size", "epochs", "mode"};
  return keys;
}

void ExperimentConfig::validate() const {
  auto bad = [](const char* key, const std::string& msg) { throw ConfigError(key, 0, msg); };
  if (batch_size == 0) bad("batch_size", "must be positive");
  if (epochs == 0) bad("epochs", "must be positive");
  if (mode.kind == ModeKind::kWorkers && batch_size % mode.workers != 0) {
    bad("mode", fmt::format("{} workers do not divide batch_size {}", mode.workers, batch_size));
  }
  if (mode.kind == ModeKind::kDga && batch_size % mode.sub_batch != 0) {
    bad("mode", fmt::format("sub-batch {} does not divide batch_size {}", mode.sub_batch, batch_size));
  }
  if (!(mixup_alpha > 0.0)) bad("mixup.alpha", "must be positive");
  if (!(token_drop >= 0.0 && token_drop < 1.0)) bad("token_drop", "must lie in [0, 1)");
  if (!(dropout >= 0.0 && dropout < 1.0)) bad("dropout", "must lie in [0, 1)");
  if (!(optimizer.base_lr >= 0.0) || !(optimizer.min_lr >= 0.0)) bad("optim.lr", "must be non-negative");
  if (kmeans_k == 0) bad("sampler.kmeans_k", "must be positive");
  if (image_hidden == 0 || text_hidden == 0 || embed_dim == 0) bad("model", "dimensions must be positive");
}

std::string ExperimentConfig::snapshot() const {
  std::string out;
  auto put = [&](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
  put("seed", std::to_string(seed));
  if (!corpus_path.empty()) put("corpus.path", corpus_path);
  put("corpus.seed", std::to_string(corpus_seed));
  {
    const auto& src = corpus_spec.sources;
    std::vector<std::string> sizes, strengths, rates, lengths;
    for (const auto& s : src) {
      sizes.push_back(std::to_string(s.count));
      strengths.push_back(fmt::format("{:.17g}", s.style_strength));
      rates.push_back(fmt::format("{:.17g}", s.style_token_rate));
      lengths.push_back(fmt::format("{}-{}", s.min_len, s.max_len));
    }
    put("corpus.sizes", fmt::format("{}", fmt::join(sizes, ",")));
    put("corpus.style_strength", fmt::format("{}", fmt::join(strengths, ",")));
    put("corpus.style_token_rate", fmt::format("{}", fmt::join(rates, ",")));
    put("corpus.lengths", fmt::format("{}", fmt::join(lengths, ",")));
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (!src[i].style_offset.empty()) put(fmt::format("corpus.style_offset.{}", i), join(src[i].style_offset));
    }
  }
  put("corpus.latent_dim", std::to_string(corpus_spec.latent_dim));
  put("corpus.patches", std::to_string(corpus_spec.patches));
  put("corpus.patch_dim", std::to_string(corpus_spec.patch_dim));
  put("corpus.resolution", std::to_string(corpus_spec.content_resolution));
  put("corpus.noise", fmt::format("{:.17g}", corpus_spec.noise_scale));
  put("corpus.eval_count", std::to_string(corpus_spec.eval_count));
  if (corpus_spec.eval_min_len != 0) {
    put("corpus.eval_lengths", fmt::format("{}-{}", corpus_spec.eval_min_len, corpus_spec.eval_max_len));
  }
  put("sampler", to_string(sampler));
  if (!sequential_order.empty()) {
    put("sampler.order", fmt::format("{}", fmt::join(sequential_order, ",")));
  }
  put("sampler.kmeans_k", std::to_string(kmeans_k));
  put("sampler.kmeans_iters", std::to_string(kmeans_iters));
  put("batch_size", std::to_string(batch_size));
  put("epochs", std::to_string(epochs));
  put("mixup", mixup ? "true" : "false");
  put("mixup.alpha", fmt::format("{:.17g}", mixup_alpha));
  put("token_drop", fmt::format("{:.17g}", token_drop));
  put("dropout", fmt::format("{:.17g}", dropout));
  put("corrupt_text", corrupt_text ? "true" : "false");
  put("mode", mode.to_string());
  put("optim.lr", fmt::format("{:.17g}", optimizer.base_lr));
  put("optim.min_lr", fmt::format("{:.17g}", optimizer.min_lr));
  put("optim.weight_decay", fmt::format("{:.17g}", optimizer.weight_decay));
  put("optim.beta1", fmt::format("{:.17g}", optimizer.beta1));
  put("optim.beta2", fmt::format("{:.17g}", optimizer.beta2));
  put("optim.eps", fmt::format("{:.17g}", optimizer.eps));
  put("model.image_hidden", std::to_string(image_hidden));
  put("model.text_hidden", std::to_string(text_hidden));
  put("model.embed_dim", std::to_string(embed_dim));
  put("export.per_source", std::to_string(export_per_source));
  if (!out_dir.empty()) put("out_dir", out_dir);
  return out;
}

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap map;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(line, line_no, "expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("", line_no, "empty key");
    if (value.empty()) throw ConfigError(key, line_no, "empty value");
    if (auto it = map.find(key); it != map.end()) {
      throw ConfigError(key, line_no, fmt::format("duplicate key (first set on line {})", it->second.second));
    }
    map.emplace(std::move(key), std::make_pair(std::move(value), line_no));
  }
  return map;
}

ExperimentConfig config_from_map(const ConfigMap& map, bool require_keys) {
  if (require_keys) {
    for (const auto& key : required_config_keys()) {
      if (!map.count(key)) throw ConfigError(key, 0, "required key is missing");
    }
  }

  ExperimentConfig cfg;
  cfg.corpus_spec = default_biased_corpus();
  auto& spec = cfg.corpus_spec;

  // corpus.sizes decides the number of sources, so it is applied first.
  if (auto it = map.find("corpus.sizes"); it != map.end()) {
    const Field f{it->first, it->second.second, it->second.first};
    const auto sizes = f.list(&Field::as_positive);
    const SourceSpec templ = spec.sources.back();
    spec.sources.resize(sizes.size(), templ);
    for (std::size_t i = 0; i < sizes.size(); ++i) spec.sources[i].count = sizes[i];
  }

  using Handler = std::function<void(const Field&)>;
  const std::map<std::string, Handler> handlers = {
      {"seed", [&](const Field& f) { cfg.seed = f.as_u64(); }},
      {"corpus.path", [&](const Field& f) { cfg.corpus_path = f.value; }},
      {"corpus.seed", [&](const Field& f) { cfg.corpus_seed = f.as_u64(); }},
      {"corpus.sizes", [](const Field&) {}},
      {"corpus.style_strength",
       [&](const Field& f) {
         per_source(f, f.list(&Field::as_double), spec.sources,
                    [&](SourceSpec& s, double v) {
                      if (v < 0.0) f.fail("must be non-negative");
                      s.style_strength = v;
                    });
       }},
      {"corpus.style_token_rate",
       [&](const Field& f) {
         per_source(f, f.list(&Field::as_double), spec.sources, [&](SourceSpec& s, double v) {
           if (!(v >= 0.0 && v <= 1.0)) f.fail("must lie in [0, 1]");
           s.style_token_rate = v;
         });
       }},
      {"corpus.lengths",
       [&](const Field& f) {
         std::vector<std::pair<std::size_t, std::size_t>> ranges;
         for (const auto& item : f.items()) ranges.push_back(f.range(item));
         per_source(f, ranges, spec.sources, [&](SourceSpec& s, std::pair<std::size_t, std::size_t> r) {
           if (r.first > r.second) f.fail("has a range with min > max");
           s.min_len = r.first;
           s.max_len = r.second;
         });
       }},
      {"corpus.latent_dim", [&](const Field& f) { spec.latent_dim = f.as_positive(); }},
      {"corpus.patches", [&](const Field& f) { spec.patches = f.as_positive(); }},
      {"corpus.patch_dim", [&](const Field& f) { spec.patch_dim = f.as_positive(); }},
      {"corpus.resolution", [&](const Field& f) { spec.content_resolution = f.as_positive(); }},
      {"corpus.noise", [&](const Field& f) { spec.noise_scale = f.as_double(); }},
      {"corpus.eval_count", [&](const Field& f) { spec.eval_count = f.as_positive(); }},
      {"corpus.eval_lengths",
       [&](const Field& f) {
         const auto r = f.range(f.value);
         if (r.first > r.second) f.fail("has min > max");
         spec.eval_min_len = r.first;
         spec.eval_max_len = r.second;
       }},
      {"sampler",
       [&](const Field& f) {
         try {
           cfg.sampler = parse_sampler(f.value);
         } catch (const InvalidArgument& e) {
           f.fail("is not random, sequential, debiased or debiased-kmeans");
         }
       }},
      {"sampler.order",
       [&](const Field& f) {
         cfg.sequential_order.clear();
         for (auto v : f.list(&Field::as_size)) cfg.sequential_order.push_back(static_cast<int>(v));
       }},
      {"sampler.kmeans_k", [&](const Field& f) { cfg.kmeans_k = f.as_positive(); }},
      {"sampler.kmeans_iters", [&](const Field& f) { cfg.kmeans_iters = f.as_positive(); }},
      {"batch_size", [&](const Field& f) { cfg.batch_size = f.as_positive(); }},
      {"epochs", [&](const Field& f) { cfg.epochs = f.as_positive(); }},
      {"mixup", [&](const Field& f) { cfg.mixup = f.as_bool(); }},
      {"mixup.alpha", [&](const Field& f) { cfg.mixup_alpha = f.as_double(); }},
      {"token_drop", [&](const Field& f) { cfg.token_drop = f.as_double(); }},
      {"dropout", [&](const Field& f) { cfg.dropout = f.as_double(); }},
      {"corrupt_text", [&](const Field& f) { cfg.corrupt_text = f.as_bool(); }},
      {"mode",
       [&](const Field& f) {
         try {
           cfg.mode = ExecutionMode::parse(f.value);
         } catch (const InvalidArgument& e) {
           throw ConfigError(f.key, f.line, e.what());
         }
       }},
      {"optim.lr", [&](const Field& f) { cfg.optimizer.base_lr = f.as_double(); }},
      {"optim.min_lr", [&](const Field& f) { cfg.optimizer.min_lr = f.as_double(); }},
      {"optim.weight_decay", [&](const Field& f) { cfg.optimizer.weight_decay = f.as_double(); }},
      {"optim.beta1", [&](const Field& f) { cfg.optimizer.beta1 = f.as_double(); }},
      {"optim.beta2", [&](const Field& f) { cfg.optimizer.beta2 = f.as_double(); }},
      {"optim.eps", [&](const Field& f) { cfg.optimizer.eps = f.as_double(); }},
      {"model.image_hidden", [&](const Field& f) { cfg.image_hidden = f.as_positive(); }},
      {"model.text_hidden", [&](const Field& f) { cfg.text_hidden = f.as_positive(); }},
      {"model.embed_dim", [&](const Field& f) { cfg.embed_dim = f.as_positive(); }},
      {"export.per_source", [&](const Field& f) { cfg.export_per_source = f.as_size(); }},
      {"out_dir", [&](const Field& f) { cfg.out_dir = f.value; }},
  };

  const std::string offset_prefix = "corpus.style_offset.";
  for (const auto& [key, entry] : map) {
    const Field f{key, entry.second, entry.first};
    if (key.rfind(offset_prefix, 0) == 0) {
      const Field index{key, entry.second, key.substr(offset_prefix.size())};
      const auto i = index.as_size();
      if (i >= spec.sources.size()) f.fail(fmt::format("names source {} of {}", i, spec.sources.size()));
      spec.sources[i].style_offset = f.list(&Field::as_double);
      continue;
    }
    const auto h = handlers.find(key);
    if (h == handlers.end()) throw ConfigError(key, entry.second, "unknown key");
    h->second(f);
  }

  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    const auto it = map.find(e.key());
    if (it == map.end()) throw;
    throw ConfigError(e.key(), it->second.second, e.detail());
  }
  if (cfg.corpus_path.empty()) {
    try {
      (void)spec.resolved();
    } catch (const InvalidArgument& e) {
      throw ConfigError("corpus", 0, e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path, const std::map<std::string, std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument(fmt::format("cannot open config file '{}'", path));
  std::stringstream buffer;
  buffer << in.rdbuf();
  ConfigMap map = parse_config_text(buffer.str());
  for (const auto& [k, v] : overrides) map[k] = {v, 0};
  return config_from_map(map);
}

}  // namespace contra
