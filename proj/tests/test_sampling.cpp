#include "doctest.h"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "contra/error.hpp"
#include "contra/sampling.hpp"

using namespace contra;

namespace {

SourceCatalog catalog_of(std::vector<std::size_t> sizes) {
  SourceCatalog cat;
  std::size_t next = 0;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    SourceCatalog::Source src;
    src.id = static_cast<int>(s);
    for (std::size_t i = 0; i < sizes[s]; ++i) src.indices.push_back(next++);
    cat.sources.push_back(src);
  }
  return cat;
}

std::map<int, std::size_t> batches_per_source(const EpochPlan& plan) {
  std::map<int, std::size_t> out;
  for (const auto& b : plan.batches) ++out[b.source.value()];
  return out;
}

}  // namespace

TEST_CASE("random epoch") {
  const auto cat = catalog_of({1000, 1000, 1000});
  const auto plan = build_random_epoch(cat, 256, SeedContext(1, "plan"));
  CHECK(plan.batches.size() == 11);
  CHECK(plan.samples() == 2816);
  bool mixed = false;
  for (const auto& b : plan.batches) mixed |= !b.source.has_value();
  CHECK(mixed);
  const auto again = build_random_epoch(cat, 256, SeedContext(1, "plan"));
  CHECK(again.batches.size() == plan.batches.size());
  for (std::size_t i = 0; i < plan.batches.size(); ++i) CHECK(again.batches[i].indices == plan.batches[i].indices);

  const auto single = build_random_epoch(catalog_of({300}), 64, SeedContext(2, "plan"));
  const auto deb = build_debiased_epoch(catalog_of({300}), 64, SeedContext(2, "plan"));
  CHECK(single.batches.size() == deb.batches.size());
  for (const auto& b : single.batches) CHECK(b.source == 0);
}

TEST_CASE("sequential epoch follows the order") {
  const auto cat = catalog_of({1000, 500});
  const auto plan = build_sequential_epoch(cat, {1, 0}, 256, SeedContext(1, "plan"));
  REQUIRE(plan.batches.size() == 4);
  CHECK(plan.batches[0].source == 1);
  for (std::size_t i = 1; i < 4; ++i) CHECK(plan.batches[i].source == 0);
  CHECK_THROWS_AS(build_sequential_epoch(cat, {0}, 256, SeedContext(1, "plan")), InvalidArgument);
  CHECK_THROWS_AS(build_sequential_epoch(cat, {0, 0}, 256, SeedContext(1, "plan")), InvalidArgument);
}

TEST_CASE("debiased epoch keeps every batch within one source") {
  const auto cat = catalog_of({530, 300, 170});
  std::vector<int> first_order;
  bool order_varies = false;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto plan = build_debiased_epoch(cat, 32, SeedContext(seed, "plan"));
    const auto per = batches_per_source(plan);
    CHECK(per.at(0) == 530 / 32);
    CHECK(per.at(1) == 300 / 32);
    CHECK(per.at(2) == 170 / 32);

    std::vector<int> order;
    std::map<int, std::multiset<std::size_t>> used;
    for (const auto& b : plan.batches) {
      REQUIRE(b.source.has_value());
      CHECK(b.indices.size() == 32);
      order.push_back(*b.source);
      for (std::size_t i : b.indices) {
        CHECK(cat.source_of()[i] == *b.source);
        used[*b.source].insert(i);
      }
    }
    for (const auto& src : cat.sources) {
      std::set<std::size_t> distinct(used[src.id].begin(), used[src.id].end());
      CHECK(distinct.size() == used[src.id].size());
    }
    if (first_order.empty()) first_order = order;
    order_varies |= order != first_order;
  }
  CHECK(order_varies);
}

TEST_CASE("catalog validation") {
  auto cat = catalog_of({3, 2});
  CHECK(cat.total() == 5);
  CHECK(cat.source_of() == std::vector<int>{0, 0, 0, 1, 1});
  cat.sources[1].indices[0] = 1;
  CHECK_THROWS_AS(cat.validate(), ContractError);
  CHECK_THROWS_AS(build_random_epoch(catalog_of({3}), 0, SeedContext(1, "p")), InvalidArgument);
}

TEST_CASE("plan audit file round-trips") {
  const auto plan = build_random_epoch(catalog_of({70, 40}), 16, SeedContext(4, "plan"));
  std::stringstream ss;
  write_epoch_plan(ss, plan);
  const auto back = read_epoch_plan(ss);
  REQUIRE(back.batches.size() == plan.batches.size());
  for (std::size_t i = 0; i < plan.batches.size(); ++i) {
    CHECK(back.batches[i].indices == plan.batches[i].indices);
    CHECK(back.batches[i].source == plan.batches[i].source);
  }
  std::stringstream bad("# epoch-plan v1\n0 mixed 1 x\n");
  CHECK_THROWS(read_epoch_plan(bad));
}

TEST_CASE("k-means") {
  Rng rng(SeedContext(5, "blobs"));
  const std::size_t n = 200;
  Matrix pts(n, 3);
  std::vector<int> blob(n);
  for (std::size_t r = 0; r < n; ++r) {
    blob[r] = r % 2 == 0 ? 0 : 1;
    const double centre = blob[r] == 0 ? -5.0 : 5.0;
    for (double& v : pts.row(r)) v = centre + 0.3 * rng.normal();
  }
  const auto km = cluster_into_virtual_sources(pts, 2, 20, SeedContext(1, "km"));
  for (std::size_t r = 0; r < n; ++r) {
    CHECK((km.assignment[r] == km.assignment[0]) == (blob[r] == blob[0]));
    // Brute-force nearest centroid.
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c = 0; c < km.centroids.rows(); ++c) {
      double d = 0.0;
      for (std::size_t j = 0; j < 3; ++j) d += (pts(r, j) - km.centroids(c, j)) * (pts(r, j) - km.centroids(c, j));
      if (d < best_d) best_d = d, best = c;
    }
    CHECK(best == km.assignment[r]);
  }
  for (std::size_t t = 1; t < km.objective.size(); ++t) CHECK(km.objective[t] <= km.objective[t - 1]);
  km.catalog.validate();

  const auto one = cluster_into_virtual_sources(pts, 1, 5, SeedContext(1, "km"));
  REQUIRE(one.catalog.sources.size() == 1);
  CHECK(one.catalog.sources[0].indices.size() == n);

  Rng r2(SeedContext(6, "noise"));
  Matrix cloud(300, 4);
  for (double& v : cloud.flat()) v = r2.normal();
  const auto many = cluster_into_virtual_sources(cloud, 12, 30, SeedContext(2, "km"));
  for (std::size_t t = 1; t < many.objective.size(); ++t) CHECK(many.objective[t] <= many.objective[t - 1] + 1e-9);
  CHECK_THROWS_AS(cluster_into_virtual_sources(cloud, 0, 5, SeedContext(2, "km")), InvalidArgument);
}
