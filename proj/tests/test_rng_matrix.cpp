#include "doctest.h"

#include <cmath>
#include <set>

#include "contra/error.hpp"
#include "contra/matrix.hpp"
#include "contra/rng.hpp"

using namespace contra;

TEST_CASE("seed contexts are pure functions of seed and stream") {
  const SeedContext a(5, "x"), b(5, "x"), c(6, "x"), d(5, "y");
  CHECK(a.key() == b.key());
  CHECK(a.key() != c.key());
  CHECK(a.key() != d.key());
  CHECK(a.draw(3, 4) == b.draw(3, 4));
  CHECK(a.draw(3, 4) != a.draw(4, 3));
  CHECK(a.derive("k", 2).stream() == "x/k#2");
  CHECK(a.derive("k").stream() == "x/k");
}

TEST_CASE("sequential generator moments") {
  Rng rng(SeedContext(1, "moments"));
  const int n = 200000;
  double s = 0.0, s2 = 0.0, u = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
    u += rng.uniform();
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);
  CHECK(std::abs(u / n - 0.5) < 0.005);
}

TEST_CASE("bounded integers cover the range without leaving it") {
  Rng rng(SeedContext(2, "below"));
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto v = rng.below(7);
    CHECK(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
}

TEST_CASE("beta draws stay in the unit interval and match the mean") {
  Rng rng(SeedContext(3, "beta"));
  for (double alpha : {0.1, 1.0, 4.0}) {
    double sum = 0.0, extreme = 0.0;
    const int n = 40000;
    for (int i = 0; i < n; ++i) {
      const double x = rng.beta(alpha, alpha);
      REQUIRE(x >= 0.0);
      REQUIRE(x <= 1.0);
      sum += x;
      extreme += (x < 0.05 || x > 0.95);
    }
    CHECK(std::abs(sum / n - 0.5) < 0.01);
    if (alpha == 0.1) CHECK(extreme / n > 0.6);  // U-shaped
    if (alpha == 4.0) CHECK(extreme / n < 0.01);
  }
}

TEST_CASE("shuffle is a permutation") {
  Rng rng(SeedContext(4, "shuffle"));
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  rng.shuffle(v);
  std::set<int> s(v.begin(), v.end());
  CHECK(s.size() == 50);
  CHECK(v != [] {
    std::vector<int> id(50);
    for (int i = 0; i < 50; ++i) id[i] = i;
    return id;
  }());
}

TEST_CASE("matrix products agree with naive loops") {
  Rng rng(SeedContext(5, "mm"));
  Matrix a(4, 3), b(3, 5), c(5, 3);
  for (double& v : a.flat()) v = rng.normal();
  for (double& v : b.flat()) v = rng.normal();
  for (double& v : c.flat()) v = rng.normal();
  const Matrix ab = matmul(a, b);
  const Matrix act = matmul_nt(a, c);
  Matrix atb(3, 3);
  matmul_tn_acc(a, Matrix(4, 3, 1.0), atb);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      double x = 0.0, y = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        x += a(i, k) * b(k, j);
        y += a(i, k) * c(j, k);
      }
      CHECK(ab(i, j) == doctest::Approx(x).epsilon(1e-13));
      CHECK(act(i, j) == doctest::Approx(y).epsilon(1e-13));
    }
  }
  for (std::size_t i = 0; i < 3; ++i) {
    double col = 0.0;
    for (std::size_t r = 0; r < 4; ++r) col += a(r, i);
    for (std::size_t j = 0; j < 3; ++j) CHECK(atb(i, j) == doctest::Approx(col).epsilon(1e-13));
  }
  CHECK_THROWS(matmul(a, a));
}

TEST_CASE("row blocks and gathers") {
  const Matrix m{{1, 2}, {3, 4}, {5, 6}};
  CHECK(m.row_block(1, 2) == Matrix{{3, 4}, {5, 6}});
  const std::vector<std::size_t> idx{2, 0};
  CHECK(m.gather_rows(idx) == Matrix{{5, 6}, {1, 2}});
  CHECK(m.transposed() == Matrix{{1, 3, 5}, {2, 4, 6}});
  Matrix z(3, 2);
  z.set_row_block(1, Matrix{{7, 8}});
  CHECK(z(1, 1) == 8.0);
  CHECK(max_abs_diff(m, m) == 0.0);
  CHECK(frobenius_norm(Matrix{{3, 4}}) == 5.0);
  CHECK_THROWS(m.row_block(2, 2));
}
