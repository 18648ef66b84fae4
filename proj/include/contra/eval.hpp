#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "contra/matrix.hpp"

namespace contra {

/// Recall percentages at K = 1, 5, 10 for both directions.
struct RetrievalReport {
  double i2t_r1 = 0.0, i2t_r5 = 0.0, i2t_r10 = 0.0;
  double t2i_r1 = 0.0, t2i_r5 = 0.0, t2i_r10 = 0.0;
  double rsum = 0.0;
  std::size_t queries = 0;

  std::string to_json() const;
  static RetrievalReport from_json(const std::string& text);
};

/// Rank of `target` among `scores` (0 = best): entries with a higher score,
/// plus equal scores at a lower index, come first.
std::size_t rank_of(std::span<const double> scores, std::size_t target);

/// Cosine-similarity retrieval. text_of_image[j] is the caption index matching
/// image j; it must be a bijection. Empty means identity pairing.
RetrievalReport retrieval_report(const Matrix& img, const Matrix& txt,
                                 const std::vector<std::size_t>& text_of_image = {});

struct EmbeddingTable {
  std::vector<std::string> modality;  // "image" or "text"
  std::vector<int> source;
  Matrix values;
};

/// CSV: header "modality,source_id,e0,...,e{d-1}", image rows then text rows,
/// values printed with 17 significant digits.
void export_embeddings(const Matrix& img, const Matrix& txt, const std::vector<int>& source_tags,
                       const std::filesystem::path& path);
EmbeddingTable read_embeddings(const std::filesystem::path& path);
void write_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);

}  // namespace contra
