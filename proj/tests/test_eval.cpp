#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "contra/error.hpp"
#include "contra/eval.hpp"
#include "contra/numerics.hpp"
#include "contra/oracles.hpp"
#include "contra/rng.hpp"

using namespace contra;

namespace {

Matrix random_unit(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(SeedContext(seed, "emb"));
  Matrix m(n, d);
  for (double& v : m.flat()) v = rng.normal();
  return l2_normalize_rows(m).rows;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("perfect alignment scores 600") {
  const Matrix e = random_unit(50, 8, 1);
  const auto r = retrieval_report(e, e);
  CHECK(r.rsum == doctest::Approx(600.0));
  CHECK(r.queries == 50);
}

TEST_CASE("hand-built five-pair table") {
  // Image j is closest to caption (j + 1) mod 5 and second closest to its own.
  Matrix img(5, 5), txt(5, 5);
  for (std::size_t j = 0; j < 5; ++j) {
    txt(j, j) = 1.0;
    img(j, (j + 1) % 5) = 0.8;
    img(j, j) = 0.6;
  }
  const auto r = retrieval_report(img, txt);
  CHECK(r.i2t_r1 == 0.0);
  CHECK(r.i2t_r5 == 100.0);
  CHECK(r.i2t_r10 == 100.0);
  // Caption k is scored 0.8 by image k-1 and 0.6 by its own image.
  CHECK(r.t2i_r1 == 0.0);
  CHECK(r.rsum == doctest::Approx(400.0));
}

TEST_CASE("ties go to the lower index") {
  const std::vector<double> s{0.5, 0.9, 0.9, 0.1};
  CHECK(rank_of(s, 1) == 0);
  CHECK(rank_of(s, 2) == 1);
  CHECK(rank_of(s, 0) == 2);
}

TEST_CASE("random embeddings sit near chance") {
  const auto img = random_unit(1000, 16, 2), txt = random_unit(1000, 16, 3);
  const auto r = retrieval_report(img, txt);
  CHECK(r.i2t_r1 < 0.6);
  CHECK(r.t2i_r10 < 3.0);
  const auto brute = brute_force_retrieval(img, txt);
  CHECK(brute.rsum == r.rsum);
  CHECK(brute.i2t_r5 == r.i2t_r5);
}

TEST_CASE("matches a brute-force sort on structured data") {
  const auto img = random_unit(200, 6, 4);
  Matrix txt = img;
  Rng rng(SeedContext(5, "noise"));
  for (double& v : txt.flat()) v += 0.6 * rng.normal();
  txt = l2_normalize_rows(txt).rows;
  const auto a = retrieval_report(img, txt), b = brute_force_retrieval(img, txt);
  CHECK(a.i2t_r1 == b.i2t_r1);
  CHECK(a.t2i_r10 == b.t2i_r10);
  CHECK(a.rsum > 0.0);
}

TEST_CASE("custom pairing and its validation") {
  const auto e = random_unit(4, 3, 6);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  Matrix txt(4, 3);
  for (std::size_t j = 0; j < 4; ++j) txt.set_row_block(perm[j], e.row_block(j, 1));
  CHECK(retrieval_report(e, txt, perm).rsum == doctest::Approx(600.0));
  CHECK_THROWS_AS(retrieval_report(e, txt, {0, 0, 1, 2}), InvalidArgument);
}

TEST_CASE("report JSON round-trip") {
  const auto r = retrieval_report(random_unit(30, 4, 7), random_unit(30, 4, 8));
  const auto back = RetrievalReport::from_json(r.to_json());
  CHECK(back.rsum == r.rsum);
  CHECK(back.t2i_r5 == r.t2i_r5);
  CHECK(back.queries == r.queries);
}

TEST_CASE("embedding export") {
  const auto dir = std::filesystem::temp_directory_path() / "contra_export_test";
  std::filesystem::create_directories(dir);
  const auto img = random_unit(3, 4, 9), txt = random_unit(3, 4, 10);
  export_embeddings(img, txt, {0, 1, 1}, dir / "a.csv");
  const std::string text = slurp(dir / "a.csv");
  CHECK(text.rfind("modality,source_id,e0,e1,e2,e3\n", 0) == 0);
  CHECK(text.find("\nimage,1,") != std::string::npos);
  CHECK(text.find("\ntext,0,") != std::string::npos);

  const auto table = read_embeddings(dir / "a.csv");
  CHECK(table.values.rows() == 6);
  CHECK(table.values.row_block(0, 3) == img);
  CHECK(table.values.row_block(3, 3) == txt);
  CHECK(table.source == std::vector<int>{0, 1, 1, 0, 1, 1});
  write_embeddings(table, dir / "b.csv");
  CHECK(slurp(dir / "b.csv") == text);

  std::ofstream(dir / "bad.csv") << "modality,source_id,e0\nimage,0\n";
  CHECK_THROWS(read_embeddings(dir / "bad.csv"));
  std::filesystem::remove_all(dir);
}
