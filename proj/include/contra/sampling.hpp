#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "contra/matrix.hpp"
#include "contra/rng.hpp"

namespace contra {

struct SourceCatalog {
  struct Source {
    int id = 0;
    std::vector<std::size_t> indices;
  };
  std::vector<Source> sources;

  std::size_t total() const noexcept;
  const Source* find(int id) const noexcept;
  /// Sample index -> source id; throws ContractError if indices overlap or
  /// leave holes in [0, total()).
  std::vector<int> source_of() const;
  /// Disjointness and coverage check.
  void validate() const;
};

struct EpochPlan {
  struct Batch {
    std::vector<std::size_t> indices;
    std::optional<int> source;  // nullopt: mixed
  };
  std::vector<Batch> batches;

  std::size_t samples() const noexcept;
};

EpochPlan build_random_epoch(const SourceCatalog& cat, std::size_t batch_size, const SeedContext& ctx);

/// order must be a permutation of the catalog's source ids.
EpochPlan build_sequential_epoch(const SourceCatalog& cat, const std::vector<int>& order,
                                 std::size_t batch_size, const SeedContext& ctx);

EpochPlan build_debiased_epoch(const SourceCatalog& cat, std::size_t batch_size, const SeedContext& ctx);

// Audit format, one batch per line after a header:
//   # epoch-plan v1
//   <batch-index> <source-id|mixed> <i0> <i1> ...
void write_epoch_plan(std::ostream& os, const EpochPlan& plan);
EpochPlan read_epoch_plan(std::istream& is);

struct KMeansResult {
  SourceCatalog catalog;                 // one virtual source per non-empty cluster
  std::vector<std::size_t> assignment;   // row -> cluster
  Matrix centroids;                      // k x d
  std::vector<double> objective;         // within-cluster SSE after each iteration
  std::size_t reseeded = 0;              // empty clusters repaired
};

/// Lloyd's k-means with seeded farthest-first initialization. The first centre
/// is a uniformly drawn row; each next centre is the row farthest from the
/// chosen ones (lowest index on ties). An empty cluster has its centre moved
/// to the row farthest from its assigned centre.
KMeansResult cluster_into_virtual_sources(const Matrix& embeddings, std::size_t k, std::size_t iters,
                                          const SeedContext& ctx);

}  // namespace contra
