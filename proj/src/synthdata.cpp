#include "contra/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <fmt/core.h>
#include <fmt/format.h>

#include "contra/error.hpp"

namespace contra {
namespace {

constexpr double kBucketSpan = 2.5;  // magnitudes beyond this share the top bucket

std::vector<double> random_unit(std::size_t d, Rng& rng) {
  std::vector<double> v(d);
  double norm = 0.0;
  while (norm < 1e-8) {
    norm = 0.0;
    for (double& x : v) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
  }
  for (double& x : v) x /= norm;
  return v;
}

Sample draw_sample(const CorpusSpec& spec, const std::vector<Matrix>& projections,
                   const std::vector<double>& offset, double strength, std::size_t min_len,
                   std::size_t max_len, double style_rate, std::uint32_t style_first,
                   std::uint32_t style_count, Rng& rng) {
  Sample s;
  s.latent.resize(spec.latent_dim);
  for (double& z : s.latent) z = rng.normal();

  s.image.resize(spec.patches * spec.patch_dim);
  for (std::size_t p = 0; p < spec.patches; ++p) {
    const Matrix& a = projections[p];
    for (std::size_t f = 0; f < spec.patch_dim; ++f) {
      double v = 0.0;
      for (std::size_t c = 0; c < spec.latent_dim; ++c) v += a(f, c) * s.latent[c];
      v += strength * offset[f] + spec.noise_scale * rng.normal();
      s.image[p * spec.patch_dim + f] = v;
    }
  }

  const std::size_t len = min_len + static_cast<std::size_t>(rng.below(max_len - min_len + 1));
  s.tokens.reserve(len);
  for (std::size_t t = 0; t < len; ++t) {
    if (style_rate > 0.0 && rng.uniform() < style_rate) {
      s.tokens.push_back(style_first + static_cast<std::uint32_t>(rng.below(style_count)));
    } else {
      const std::size_t c = static_cast<std::size_t>(rng.below(spec.latent_dim));
      s.tokens.push_back(static_cast<std::uint32_t>(kFirstContentToken + c * spec.content_resolution +
                                                    content_bucket(s.latent[c], spec.content_resolution)));
    }
  }
  return s;
}

std::string join_values(std::span<const double> v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += fmt::format("{:.17g}", v[i]);
  }
  return out;
}

std::vector<double> parse_values(const std::string& text, const std::string& where) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size() && !text.empty()) {
    const std::size_t comma = text.find(',', pos);
    const std::string field = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (field.empty() || end != field.c_str() + field.size()) {
      throw InvalidArgument(fmt::format("{}: '{}' is not a number", where, field));
    }
    out.push_back(v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(fmt::format("cannot open {} for reading", p.string()));
  return in;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw Error(fmt::format("cannot open {} for writing", p.string()));
  return out;
}

}  // namespace

std::uint32_t CorpusSpec::content_end() const noexcept {
  return static_cast<std::uint32_t>(kFirstContentToken + latent_dim * content_resolution);
}

CorpusSpec CorpusSpec::resolved() const {
  CorpusSpec r = *this;
  if (r.sources.empty()) throw InvalidArgument("corpus needs at least one source");
  if (r.latent_dim == 0 || r.patches == 0 || r.patch_dim == 0) {
    throw InvalidArgument("corpus dimensions must be positive");
  }
  if (r.content_resolution < 2 || r.content_resolution % 2 != 0) {
    throw InvalidArgument(fmt::format("content resolution {} must be even and >= 2", r.content_resolution));
  }
  if (r.noise_scale < 0.0) throw InvalidArgument("noise scale must be non-negative");
  std::uint32_t next = r.content_end();
  std::size_t min_len = ~std::size_t{0}, max_len = 0;
  for (std::size_t i = 0; i < r.sources.size(); ++i) {
    auto& s = r.sources[i];
    if (s.count == 0) throw InvalidArgument(fmt::format("source {} has no samples", i));
    if (s.min_len == 0 || s.min_len > s.max_len) {
      throw InvalidArgument(fmt::format("source {} caption lengths [{}, {}] invalid", i, s.min_len, s.max_len));
    }
    if (!(s.style_token_rate >= 0.0 && s.style_token_rate <= 1.0)) {
      throw InvalidArgument(fmt::format("source {} style token rate {} outside [0, 1]", i, s.style_token_rate));
    }
    if (!s.style_offset.empty() && s.style_offset.size() != r.patch_dim) {
      throw InvalidArgument(fmt::format("source {} style offset has {} values, patch_dim is {}", i,
                                        s.style_offset.size(), r.patch_dim));
    }
    if (s.style_token_count == 0) throw InvalidArgument(fmt::format("source {} has no style tokens", i));
    if (s.style_token_first == 0) s.style_token_first = next;
    if (s.style_token_first < next) {
      throw InvalidArgument(fmt::format("source {} style tokens overlap content or another source", i));
    }
    next = s.style_token_first + s.style_token_count;
    min_len = std::min(min_len, s.min_len);
    max_len = std::max(max_len, s.max_len);
  }
  if (r.vocab == 0) r.vocab = next;
  if (r.vocab < next) {
    throw InvalidArgument(fmt::format("vocab {} too small for layout needing {}", r.vocab, next));
  }
  if (r.eval_min_len == 0) r.eval_min_len = min_len;
  if (r.eval_max_len == 0) r.eval_max_len = max_len;
  if (r.eval_min_len > r.eval_max_len) throw InvalidArgument("eval caption length range is empty");
  return r;
}

std::size_t content_bucket(double z, std::size_t resolution) noexcept {
  const std::size_t levels = resolution / 2;
  const auto level = std::min(
      static_cast<std::size_t>(std::abs(z) * static_cast<double>(levels) / kBucketSpan), levels - 1);
  return (z < 0.0 ? levels : 0) + level;
}

SourceCatalog Corpus::catalog() const {
  std::map<int, std::vector<std::size_t>> by_source;
  for (std::size_t i = 0; i < train.size(); ++i) by_source[train[i].source].push_back(i);
  SourceCatalog cat;
  for (auto& [id, idx] : by_source) cat.sources.push_back({id, std::move(idx)});
  return cat;
}

EncoderDims Corpus::encoder_dims(std::size_t image_hidden, std::size_t text_hidden,
                                 std::size_t embed_dim) const {
  EncoderDims d;
  d.patches = spec.patches;
  d.patch_dim = spec.patch_dim;
  d.vocab = spec.vocab;
  d.image_hidden = image_hidden;
  d.text_hidden = text_hidden;
  d.embed_dim = embed_dim;
  return d;
}

Corpus generate_corpus(const CorpusSpec& raw, const SeedContext& ctx) {
  Corpus corpus;
  corpus.spec = raw.resolved();
  const CorpusSpec& spec = corpus.spec;

  std::vector<Matrix> projections;
  {
    Rng rng(ctx.derive("projection"));
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));
    for (std::size_t p = 0; p < spec.patches; ++p) {
      Matrix a(spec.patch_dim, spec.latent_dim);
      for (double& v : a.flat()) v = scale * rng.normal();
      projections.push_back(std::move(a));
    }
  }

  std::uint64_t next_concept = 0;
  for (std::size_t si = 0; si < spec.sources.size(); ++si) {
    const SourceSpec& src = spec.sources[si];
    std::vector<double> offset = src.style_offset;
    if (offset.empty()) {
      Rng style_rng(ctx.derive("style", si));
      offset = random_unit(spec.patch_dim, style_rng);
    }
    Rng rng(ctx.derive("source", si));
    for (std::size_t i = 0; i < src.count; ++i) {
      Sample s = draw_sample(spec, projections, offset, src.style_strength, src.min_len, src.max_len,
                             src.style_token_rate, src.style_token_first, src.style_token_count, rng);
      s.source = static_cast<int>(si);
      s.concept_id = next_concept++;
      corpus.train.push_back(std::move(s));
    }
  }

  const std::vector<double> no_offset(spec.patch_dim, 0.0);
  Rng rng(ctx.derive("eval"));
  for (std::size_t i = 0; i < spec.eval_count; ++i) {
    Sample s = draw_sample(spec, projections, no_offset, 0.0, spec.eval_min_len, spec.eval_max_len, 0.0,
                           0, 1, rng);
    s.source = -1;
    s.concept_id = next_concept++;
    corpus.eval.push_back(std::move(s));
  }
  return corpus;
}

ImageBatch make_image_batch(const std::vector<Sample>& samples, std::span<const std::size_t> indices,
                            std::size_t patches, std::size_t patch_dim) {
  ImageBatch b;
  b.count = indices.size();
  b.patches = patches;
  b.features = Matrix(indices.size() * patches, patch_dim);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto& img = samples.at(indices[r]).image;
    if (img.size() != patches * patch_dim) throw ContractError("sample image has the wrong size");
    std::copy(img.begin(), img.end(), b.features.data() + r * patches * patch_dim);
  }
  return b;
}

TextBatch make_text_batch(const std::vector<Sample>& samples, std::span<const std::size_t> indices) {
  TextBatch b;
  b.sequences.reserve(indices.size());
  for (std::size_t i : indices) b.sequences.push_back(samples.at(i).tokens);
  return b;
}

std::vector<std::uint32_t> corrupt_text(const std::vector<std::uint32_t>& tokens,
                                        const CorruptionConfig& cfg, const SeedContext& ctx,
                                        CorruptionTrace* trace) {
  if (tokens.empty()) throw DegenerateInput("cannot corrupt an empty sequence");
  if (cfg.vocab < 2) throw InvalidArgument("corruption needs a vocabulary with at least one non-mask id");
  const double action_total = cfg.mask_prob + cfg.replace_prob + cfg.delete_prob;
  if (!(cfg.select_rate >= 0.0 && cfg.select_rate <= 1.0) || cfg.mask_prob < 0.0 || cfg.replace_prob < 0.0 ||
      cfg.delete_prob < 0.0 || std::abs(action_total - 1.0) > 1e-9) {
    throw InvalidArgument(fmt::format("corruption rates must be probabilities with mask+replace+delete = 1 (got {})",
                                      action_total));
  }
  Rng rng(ctx);
  CorruptionTrace local;
  std::vector<std::uint32_t> out;
  out.reserve(tokens.size());
  for (std::uint32_t tok : tokens) {
    ++local.seen;
    if (!(rng.uniform() < cfg.select_rate)) {
      out.push_back(tok);
      continue;
    }
    ++local.selected;
    const double action = rng.uniform();
    if (action < cfg.mask_prob) {
      ++local.masked;
      out.push_back(cfg.mask_id);
    } else if (action < cfg.mask_prob + cfg.replace_prob) {
      ++local.replaced;
      out.push_back(1 + static_cast<std::uint32_t>(rng.below(cfg.vocab - 1)));
    } else {
      ++local.deleted;
    }
  }
  if (out.empty()) {
    ++local.restored;
    out.push_back(tokens[static_cast<std::size_t>(rng.below(tokens.size()))]);
  }
  if (trace != nullptr) {
    trace->seen += local.seen;
    trace->selected += local.selected;
    trace->masked += local.masked;
    trace->replaced += local.replaced;
    trace->deleted += local.deleted;
    trace->restored += local.restored;
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const CorpusSpec& s = corpus.spec;
  {
    auto out = open_out(dir / "corpus.txt");
    out << "format=contra-corpus-v1\n";
    out << fmt::format("latent_dim={}\npatches={}\npatch_dim={}\nvocab={}\ncontent_resolution={}\n",
                       s.latent_dim, s.patches, s.patch_dim, s.vocab, s.content_resolution);
    out << fmt::format("noise_scale={:.17g}\neval_count={}\neval_min_len={}\neval_max_len={}\n",
                       s.noise_scale, s.eval_count, s.eval_min_len, s.eval_max_len);
    out << fmt::format("sources={}\n", s.sources.size());
    for (std::size_t i = 0; i < s.sources.size(); ++i) {
      const auto& src = s.sources[i];
      out << fmt::format("source.{}.count={}\n", i, src.count);
      out << fmt::format("source.{}.style_offset={}\n", i, join_values(src.style_offset));
      out << fmt::format("source.{}.style_strength={:.17g}\n", i, src.style_strength);
      out << fmt::format("source.{}.min_len={}\nsource.{}.max_len={}\n", i, src.min_len, i, src.max_len);
      out << fmt::format("source.{}.style_token_rate={:.17g}\n", i, src.style_token_rate);
      out << fmt::format("source.{}.style_token_first={}\nsource.{}.style_token_count={}\n", i,
                         src.style_token_first, i, src.style_token_count);
    }
    out << fmt::format("train_rows={}\neval_rows={}\n", corpus.train.size(), corpus.eval.size());
  }
  auto images = open_out(dir / "images.csv");
  auto tokens = open_out(dir / "tokens.txt");
  auto manifest = open_out(dir / "manifest.csv");
  auto latents = open_out(dir / "latents.csv");
  images << "split,index";
  for (std::size_t f = 0; f < s.patches * s.patch_dim; ++f) images << ",f" << f;
  images << '\n';
  manifest << "split,index,source_id,concept_id\n";
  latents << "split,index";
  for (std::size_t c = 0; c < s.latent_dim; ++c) latents << ",z" << c;
  latents << '\n';
  const auto emit = [&](const std::vector<Sample>& rows, const char* split) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Sample& smp = rows[i];
      images << split << ',' << i << ',' << join_values(smp.image) << '\n';
      latents << split << ',' << i << ',' << join_values(smp.latent) << '\n';
      manifest << fmt::format("{},{},{},{}\n", split, i, smp.source, smp.concept_id);
      for (std::size_t t = 0; t < smp.tokens.size(); ++t) tokens << (t ? " " : "") << smp.tokens[t];
      tokens << '\n';
    }
  };
  emit(corpus.train, "train");
  emit(corpus.eval, "eval");
  if (!images || !tokens || !manifest || !latents) {
    throw Error(fmt::format("write failure while saving corpus to {}", dir.string()));
  }
}

Corpus load_corpus(const std::filesystem::path& dir) {
  std::map<std::string, std::string> kv;
  {
    auto in = open_in(dir / "corpus.txt");
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  const auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw InvalidArgument(fmt::format("corpus.txt: missing key '{}'", key));
    return it->second;
  };
  const auto get_size = [&](const std::string& key) {
    return static_cast<std::size_t>(std::stoull(get(key)));
  };
  const auto get_double = [&](const std::string& key) { return parse_values(get(key), key).at(0); };
  if (get("format") != "contra-corpus-v1") throw InvalidArgument("corpus.txt: unknown format");

  Corpus c;
  CorpusSpec& s = c.spec;
  s.latent_dim = get_size("latent_dim");
  s.patches = get_size("patches");
  s.patch_dim = get_size("patch_dim");
  s.vocab = get_size("vocab");
  s.content_resolution = get_size("content_resolution");
  s.noise_scale = get_double("noise_scale");
  s.eval_count = get_size("eval_count");
  s.eval_min_len = get_size("eval_min_len");
  s.eval_max_len = get_size("eval_max_len");
  s.sources.resize(get_size("sources"));
  for (std::size_t i = 0; i < s.sources.size(); ++i) {
    auto& src = s.sources[i];
    const std::string p = fmt::format("source.{}.", i);
    src.count = get_size(p + "count");
    src.style_offset = parse_values(get(p + "style_offset"), p + "style_offset");
    src.style_strength = get_double(p + "style_strength");
    src.min_len = get_size(p + "min_len");
    src.max_len = get_size(p + "max_len");
    src.style_token_rate = get_double(p + "style_token_rate");
    src.style_token_first = static_cast<std::uint32_t>(get_size(p + "style_token_first"));
    src.style_token_count = static_cast<std::uint32_t>(get_size(p + "style_token_count"));
  }
  c.train.resize(get_size("train_rows"));
  c.eval.resize(get_size("eval_rows"));

  const auto row_ref = [&](const std::string& split, const std::string& index,
                           const std::string& where) -> Sample& {
    auto& rows = split == "train" ? c.train : c.eval;
    const std::size_t i = std::stoull(index);
    if ((split != "train" && split != "eval") || i >= rows.size()) {
      throw InvalidArgument(fmt::format("{}: bad row reference {},{}", where, split, index));
    }
    return rows[i];
  };

  std::string line;
  {
    auto in = open_in(dir / "images.csv");
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto f = split_csv(line);
      if (f.size() != 2 + s.patches * s.patch_dim) throw InvalidArgument("images.csv: wrong column count");
      Sample& smp = row_ref(f[0], f[1], "images.csv");
      smp.image.clear();
      for (std::size_t k = 2; k < f.size(); ++k) smp.image.push_back(parse_values(f[k], "images.csv").at(0));
    }
  }
  {
    auto in = open_in(dir / "latents.csv");
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto f = split_csv(line);
      if (f.size() != 2 + s.latent_dim) throw InvalidArgument("latents.csv: wrong column count");
      Sample& smp = row_ref(f[0], f[1], "latents.csv");
      smp.latent.clear();
      for (std::size_t k = 2; k < f.size(); ++k) smp.latent.push_back(parse_values(f[k], "latents.csv").at(0));
    }
  }
  {
    auto in = open_in(dir / "manifest.csv");
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto f = split_csv(line);
      if (f.size() != 4) throw InvalidArgument("manifest.csv: wrong column count");
      Sample& smp = row_ref(f[0], f[1], "manifest.csv");
      smp.source = std::stoi(f[2]);
      smp.concept_id = std::stoull(f[3]);
    }
  }
  {
    auto in = open_in(dir / "tokens.txt");
    std::size_t row = 0;
    while (std::getline(in, line)) {
      Sample& smp = row < c.train.size() ? c.train[row] : c.eval.at(row - c.train.size());
      std::istringstream ls(line);
      std::uint64_t tok = 0;
      while (ls >> tok) {
        if (tok >= s.vocab) throw InvalidArgument(fmt::format("tokens.txt line {}: id {} >= vocab", row + 1, tok));
        smp.tokens.push_back(static_cast<std::uint32_t>(tok));
      }
      ++row;
    }
    if (row != c.train.size() + c.eval.size()) throw InvalidArgument("tokens.txt: row count mismatch");
  }
  return c;
}

}  // namespace contra
