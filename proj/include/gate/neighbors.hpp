#pragma once

#include <span>
#include <utility>
#include <vector>

#include "gate/ratings.hpp"

namespace gate {

// Per-item sorted neighbor id lists.
struct NeighborGraph {
  std::vector<std::vector<Id>> neighbors;

  std::size_t num_items() const { return neighbors.size(); }
  std::span<const Id> of(Id item) const { return neighbors.at(item); }
  std::size_t num_isolated() const;
  bool operator==(const NeighborGraph&) const = default;
};

// Symmetrized, deduplicated graph without self-loops. Out-of-range ids throw DataError.
NeighborGraph build_neighbors_from_adjacency(std::span<const std::pair<Id, Id>> edges, std::size_t n);

enum class SimilarityMetric { kCosine, kJaccard };

struct SimilarityOptions {
  double threshold = 0.2;
  std::size_t max_neighbors = 50;
  SimilarityMetric metric = SimilarityMetric::kCosine;
  // Add reverse edges after capping; lists may then exceed max_neighbors.
  bool symmetrize = true;
};

// Item-item similarity between rating columns of `train`. Pairs at or above the threshold
// become neighbors; each item keeps its `max_neighbors` most similar (ties by lower id).
NeighborGraph build_neighbors_from_similarity(const SparseBinaryRatings& train,
                                              const SimilarityOptions& opts = {});

double item_similarity(const SparseBinaryRatings& r, Id a, Id b, SimilarityMetric metric);

}  // namespace gate
