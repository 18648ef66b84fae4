#include "contra/eval.hpp"

#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/core.h>
#include "json.hpp"

#include "contra/error.hpp"
#include "contra/kernels.hpp"

namespace contra {
namespace {

Matrix unit_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double norm = std::sqrt(kernels::dot(row.data(), row.data(), row.size()));
    if (norm > 0.0) kernels::scale(1.0 / norm, row.data(), row.size());
  }
  return out;
}

double percent(std::size_t hits, std::size_t total) {
  return 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

std::string RetrievalReport::to_json() const {
  nlohmann::ordered_json j;
  j["i2t_r1"] = i2t_r1;
  j["i2t_r5"] = i2t_r5;
  j["i2t_r10"] = i2t_r10;
  j["t2i_r1"] = t2i_r1;
  j["t2i_r5"] = t2i_r5;
  j["t2i_r10"] = t2i_r10;
  j["rsum"] = rsum;
  j["queries"] = queries;
  return j.dump(2);
}

RetrievalReport RetrievalReport::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  RetrievalReport r;
  r.i2t_r1 = j.at("i2t_r1");
  r.i2t_r5 = j.at("i2t_r5");
  r.i2t_r10 = j.at("i2t_r10");
  r.t2i_r1 = j.at("t2i_r1");
  r.t2i_r5 = j.at("t2i_r5");
  r.t2i_r10 = j.at("t2i_r10");
  r.rsum = j.at("rsum");
  r.queries = j.at("queries");
  return r;
}

std::size_t rank_of(std::span<const double> scores, std::size_t target) {
  const double t = scores[target];
  std::size_t rank = 0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (scores[k] > t || (scores[k] == t && k < target)) ++rank;
  }
  return rank;
}

RetrievalReport retrieval_report(const Matrix& img, const Matrix& txt,
                                 const std::vector<std::size_t>& text_of_image) {
  const std::size_t n = img.rows();
  if (txt.rows() != n || img.cols() != txt.cols()) {
    throw InvalidArgument(fmt::format("retrieval needs matching sets: {}x{} images, {}x{} texts", img.rows(),
                                      img.cols(), txt.rows(), txt.cols()));
  }
  if (n == 0) throw InvalidArgument("retrieval over an empty set");
  std::vector<std::size_t> gt = text_of_image;
  if (gt.empty()) {
    gt.resize(n);
    for (std::size_t j = 0; j < n; ++j) gt[j] = j;
  }
  if (gt.size() != n) throw InvalidArgument("ground-truth pairing has the wrong length");
  std::vector<std::size_t> image_of_text(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    if (gt[j] >= n || image_of_text[gt[j]] != n) throw InvalidArgument("ground-truth pairing is not a bijection");
    image_of_text[gt[j]] = j;
  }

  const Matrix sim = matmul_nt(unit_rows(img), unit_rows(txt));
  const Matrix sim_t = sim.transposed();
  std::size_t i2t[3] = {0, 0, 0}, t2i[3] = {0, 0, 0};
  constexpr std::size_t ks[3] = {1, 5, 10};
  for (std::size_t q = 0; q < n; ++q) {
    const std::size_t ri = rank_of(sim.row(q), gt[q]);
    const std::size_t rt = rank_of(sim_t.row(q), image_of_text[q]);
    for (int i = 0; i < 3; ++i) {
      i2t[i] += ri < ks[i];
      t2i[i] += rt < ks[i];
    }
  }
  RetrievalReport r;
  r.queries = n;
  r.i2t_r1 = percent(i2t[0], n);
  r.i2t_r5 = percent(i2t[1], n);
  r.i2t_r10 = percent(i2t[2], n);
  r.t2i_r1 = percent(t2i[0], n);
  r.t2i_r5 = percent(t2i[1], n);
  r.t2i_r10 = percent(t2i[2], n);
  r.rsum = r.i2t_r1 + r.i2t_r5 + r.i2t_r10 + r.t2i_r1 + r.t2i_r5 + r.t2i_r10;
  return r;
}

void write_embeddings(const EmbeddingTable& t, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot open {}: {}", path.string(), std::strerror(errno)));
  out << "modality,source_id";
  for (std::size_t c = 0; c < t.values.cols(); ++c) out << ",e" << c;
  out << '\n';
  for (std::size_t r = 0; r < t.values.rows(); ++r) {
    out << t.modality[r] << ',' << t.source[r];
    for (double v : t.values.row(r)) out << ',' << fmt::format("{:.17g}", v);
    out << '\n';
  }
  if (!out) throw Error(fmt::format("write to {} failed: {}", path.string(), std::strerror(errno)));
}

void export_embeddings(const Matrix& img, const Matrix& txt, const std::vector<int>& source_tags,
                       const std::filesystem::path& path) {
  if (img.rows() != source_tags.size() || txt.rows() != source_tags.size() || img.cols() != txt.cols()) {
    throw InvalidArgument("export_embeddings: inconsistent lengths");
  }
  EmbeddingTable t;
  t.values = Matrix(img.rows() + txt.rows(), img.cols());
  t.values.set_row_block(0, img);
  t.values.set_row_block(img.rows(), txt);
  for (int pass = 0; pass < 2; ++pass) {
    for (int s : source_tags) {
      t.modality.emplace_back(pass == 0 ? "image" : "text");
      t.source.push_back(s);
    }
  }
  write_embeddings(t, path);
}

EmbeddingTable read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot open {}: {}", path.string(), std::strerror(errno)));
  std::string line;
  if (!std::getline(in, line) || line.rfind("modality,source_id", 0) != 0) {
    throw InvalidArgument(fmt::format("{}: missing embedding CSV header", path.string()));
  }
  std::size_t cols = 0;
  for (char c : line) cols += c == ',';
  cols -= 1;
  EmbeddingTable t;
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string field;
    std::getline(ls, field, ',');
    t.modality.push_back(field);
    std::getline(ls, field, ',');
    t.source.push_back(std::stoi(field));
    std::size_t got = 0;
    while (std::getline(ls, field, ',')) {
      values.push_back(std::strtod(field.c_str(), nullptr));
      ++got;
    }
    if (got != cols) throw InvalidArgument(fmt::format("{}: row {} has {} values, expected {}", path.string(), rows + 1, got, cols));
    ++rows;
  }
  t.values = Matrix(rows, cols, std::move(values));
  return t;
}

}  // namespace contra
