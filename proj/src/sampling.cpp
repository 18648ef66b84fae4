#include "contra/sampling.hpp"

#include <algorithm>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <fmt/core.h>

#include "contra/error.hpp"
#include "contra/kernels.hpp"

namespace contra {
namespace {

void check_batch_size(std::size_t batch_size) {
  if (batch_size == 0) throw InvalidArgument("batch size must be positive");
}

// Shuffles one source and cuts it into full batches; the remainder is dropped.
void append_source_batches(const SourceCatalog::Source& src, std::size_t batch_size,
                           const SeedContext& ctx, std::vector<EpochPlan::Batch>& out) {
  std::vector<std::size_t> idx = src.indices;
  Rng rng(ctx.derive("source", static_cast<std::uint64_t>(src.id)));
  rng.shuffle(idx);
  for (std::size_t start = 0; start + batch_size <= idx.size(); start += batch_size) {
    out.push_back({{idx.begin() + static_cast<std::ptrdiff_t>(start),
                    idx.begin() + static_cast<std::ptrdiff_t>(start + batch_size)},
                   src.id});
  }
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

std::size_t SourceCatalog::total() const noexcept {
  std::size_t n = 0;
  for (const auto& s : sources) n += s.indices.size();
  return n;
}

const SourceCatalog::Source* SourceCatalog::find(int id) const noexcept {
  for (const auto& s : sources)
    if (s.id == id) return &s;
  return nullptr;
}

std::vector<int> SourceCatalog::source_of() const {
  const std::size_t n = total();
  std::vector<int> owner(n);
  std::vector<bool> seen(n, false);
  for (const auto& s : sources) {
    for (std::size_t i : s.indices) {
      if (i >= n) throw ContractError(fmt::format("source {} lists index {} beyond corpus size {}", s.id, i, n));
      if (seen[i]) throw ContractError(fmt::format("index {} appears in more than one source", i));
      seen[i] = true;
      owner[i] = s.id;
    }
  }
  return owner;
}

void SourceCatalog::validate() const {
  std::set<int> ids;
  for (const auto& s : sources) {
    if (!ids.insert(s.id).second) throw ContractError(fmt::format("duplicate source id {}", s.id));
  }
  (void)source_of();
}

std::size_t EpochPlan::samples() const noexcept {
  std::size_t n = 0;
  for (const auto& b : batches) n += b.indices.size();
  return n;
}

EpochPlan build_random_epoch(const SourceCatalog& cat, std::size_t batch_size, const SeedContext& ctx) {
  check_batch_size(batch_size);
  std::vector<std::size_t> all;
  all.reserve(cat.total());
  for (const auto& s : cat.sources) all.insert(all.end(), s.indices.begin(), s.indices.end());
  if (batch_size > all.size()) {
    throw InvalidArgument(fmt::format("batch size {} exceeds corpus size {}", batch_size, all.size()));
  }
  std::sort(all.begin(), all.end());
  Rng rng(ctx.derive("random"));
  rng.shuffle(all);
  std::unordered_map<std::size_t, int> owner;
  for (const auto& s : cat.sources)
    for (std::size_t i : s.indices) owner.emplace(i, s.id);
  EpochPlan plan;
  for (std::size_t start = 0; start + batch_size <= all.size(); start += batch_size) {
    EpochPlan::Batch b{{all.begin() + static_cast<std::ptrdiff_t>(start),
                        all.begin() + static_cast<std::ptrdiff_t>(start + batch_size)},
                       std::nullopt};
    // A batch that happens to come from one source is annotated as such.
    const int first = owner.at(b.indices.front());
    if (std::all_of(b.indices.begin(), b.indices.end(), [&](std::size_t i) { return owner.at(i) == first; })) {
      b.source = first;
    }
    plan.batches.push_back(std::move(b));
  }
  return plan;
}

EpochPlan build_sequential_epoch(const SourceCatalog& cat, const std::vector<int>& order,
                                 std::size_t batch_size, const SeedContext& ctx) {
  check_batch_size(batch_size);
  std::vector<int> expected;
  for (const auto& s : cat.sources) expected.push_back(s.id);
  std::vector<int> given = order;
  std::sort(expected.begin(), expected.end());
  std::sort(given.begin(), given.end());
  if (expected != given) {
    throw InvalidArgument("sequential order must list every source id exactly once");
  }
  EpochPlan plan;
  const SeedContext seq = ctx.derive("sequential");
  for (int id : order) append_source_batches(*cat.find(id), batch_size, seq, plan.batches);
  return plan;
}

EpochPlan build_debiased_epoch(const SourceCatalog& cat, std::size_t batch_size, const SeedContext& ctx) {
  check_batch_size(batch_size);
  std::size_t largest = 0;
  for (const auto& s : cat.sources) largest = std::max(largest, s.indices.size());
  if (largest < batch_size) {
    throw InvalidArgument(fmt::format(
        "no source reaches batch size {} (largest source has {} samples)", batch_size, largest));
  }
  EpochPlan plan;
  const SeedContext deb = ctx.derive("debiased");
  for (const auto& s : cat.sources) append_source_batches(s, batch_size, deb, plan.batches);
  Rng rng(deb.derive("batch-order"));
  rng.shuffle(plan.batches);
  return plan;
}

void write_epoch_plan(std::ostream& os, const EpochPlan& plan) {
  os << "# epoch-plan v1\n";
  for (std::size_t b = 0; b < plan.batches.size(); ++b) {
    const auto& batch = plan.batches[b];
    os << b << ' ' << (batch.source ? std::to_string(*batch.source) : std::string("mixed"));
    for (std::size_t i : batch.indices) os << ' ' << i;
    os << '\n';
  }
}

EpochPlan read_epoch_plan(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "# epoch-plan v1") {
    throw InvalidArgument("epoch plan: missing '# epoch-plan v1' header");
  }
  EpochPlan plan;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::size_t index = 0;
    std::string source;
    if (!(ls >> index >> source) || index != plan.batches.size()) {
      throw InvalidArgument(fmt::format("epoch plan line {}: malformed batch header", line_no));
    }
    EpochPlan::Batch batch;
    if (source != "mixed") {
      try {
        batch.source = std::stoi(source);
      } catch (const std::exception&) {
        throw InvalidArgument(fmt::format("epoch plan line {}: bad source '{}'", line_no, source));
      }
    }
    std::size_t idx = 0;
    while (ls >> idx) batch.indices.push_back(idx);
    if (!ls.eof()) throw InvalidArgument(fmt::format("epoch plan line {}: bad index", line_no));
    plan.batches.push_back(std::move(batch));
  }
  return plan;
}

KMeansResult cluster_into_virtual_sources(const Matrix& x, std::size_t k, std::size_t iters,
                                          const SeedContext& ctx) {
  const std::size_t n = x.rows();
  if (k == 0 || k > n) throw InvalidArgument(fmt::format("k = {} must be in [1, {}]", k, n));
  if (iters == 0) throw InvalidArgument("k-means needs at least one iteration");

  KMeansResult res;
  res.centroids = Matrix(k, x.cols());
  // Farthest-first seeding.
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  Rng rng(ctx.derive("kmeans-init"));
  std::size_t pick = static_cast<std::size_t>(rng.below(n));
  for (std::size_t c = 0; c < k; ++c) {
    std::copy(x.row(pick).begin(), x.row(pick).end(), res.centroids.row(c).begin());
    double far = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(x.row(i), res.centroids.row(c)));
      if (nearest[i] > far) {
        far = nearest[i];
        pick = i;
      }
    }
  }

  res.assignment.assign(n, 0);
  std::vector<double> dist(n);
  for (std::size_t it = 0; it < iters; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(x.row(i), res.centroids.row(c));
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      changed = changed || res.assignment[i] != best || it == 0;
      res.assignment[i] = best;
    }

    Matrix sums(k, x.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      kernels::axpy(1.0, x.row(i).data(), sums.row(res.assignment[i]).data(), x.cols());
      ++counts[res.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < x.cols(); ++j) {
        res.centroids(c, j) = sums(c, j) / static_cast<double>(counts[c]);
      }
    }
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = squared_distance(x.row(i), res.centroids.row(res.assignment[i]));
      sse += dist[i];
    }
    res.objective.push_back(sse);

    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
      std::copy(x.row(far).begin(), x.row(far).end(), res.centroids.row(c).begin());
      dist[far] = 0.0;
      ++res.reseeded;
      changed = true;
    }
    if (!changed) break;
  }

  for (std::size_t c = 0; c < k; ++c) {
    SourceCatalog::Source s{static_cast<int>(c), {}};
    for (std::size_t i = 0; i < n; ++i)
      if (res.assignment[i] == c) s.indices.push_back(i);
    if (!s.indices.empty()) res.catalog.sources.push_back(std::move(s));
  }
  return res;
}

}  // namespace contra
