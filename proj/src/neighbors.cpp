#include "gate/neighbors.hpp"

#include <algorithm>
#include <cmath>

#include "gate/error.hpp"

namespace gate {

namespace {

void sort_unique(std::vector<Id>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

double similarity_from_counts(std::size_t common, std::size_t na, std::size_t nb,
                              SimilarityMetric metric) {
  if (common == 0) return 0.0;
  if (metric == SimilarityMetric::kCosine) {
    return static_cast<double>(common) / std::sqrt(static_cast<double>(na) * static_cast<double>(nb));
  }
  return static_cast<double>(common) / static_cast<double>(na + nb - common);
}

}  // namespace

std::size_t NeighborGraph::num_isolated() const {
  return static_cast<std::size_t>(
      std::count_if(neighbors.begin(), neighbors.end(), [](const auto& v) { return v.empty(); }));
}

NeighborGraph build_neighbors_from_adjacency(std::span<const std::pair<Id, Id>> edges, std::size_t n) {
  NeighborGraph g;
  g.neighbors.resize(n);
  for (const auto& [a, b] : edges) {
    if (a >= n || b >= n) {
      throw DataError("relation (" + std::to_string(a) + ", " + std::to_string(b) +
                      ") references an item outside [0, " + std::to_string(n) + ")");
    }
    if (a == b) continue;
    g.neighbors[a].push_back(b);
    g.neighbors[b].push_back(a);
  }
  for (auto& v : g.neighbors) sort_unique(v);
  return g;
}

double item_similarity(const SparseBinaryRatings& r, Id a, Id b, SimilarityMetric metric) {
  const auto ua = r.users_of(a);
  const auto ub = r.users_of(b);
  std::size_t common = 0;
  for (std::size_t i = 0, j = 0; i < ua.size() && j < ub.size();) {
    if (ua[i] < ub[j]) {
      ++i;
    } else if (ub[j] < ua[i]) {
      ++j;
    } else {
      ++common, ++i, ++j;
    }
  }
  return similarity_from_counts(common, ua.size(), ub.size(), metric);
}

NeighborGraph build_neighbors_from_similarity(const SparseBinaryRatings& train,
                                              const SimilarityOptions& opts) {
  const std::size_t n = train.num_items();
  NeighborGraph g;
  g.neighbors.resize(n);

  // Co-occurrence counts via the user lists; only items sharing a rater are visited.
  std::vector<std::size_t> common(n, 0);
  std::vector<Id> touched;
  for (Id i = 0; i < n; ++i) {
    touched.clear();
    for (Id u : train.users_of(i)) {
      for (Id j : train.items_of(u)) {
        if (j == i) continue;
        if (common[j]++ == 0) touched.push_back(j);
      }
    }
    std::vector<std::pair<double, Id>> scored;
    for (Id j : touched) {
      const double s = similarity_from_counts(common[j], train.users_of(i).size(),
                                              train.users_of(j).size(), opts.metric);
      if (s >= opts.threshold) scored.emplace_back(s, j);
      common[j] = 0;
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    if (scored.size() > opts.max_neighbors) scored.resize(opts.max_neighbors);
    for (const auto& [_, j] : scored) g.neighbors[i].push_back(j);
  }

  if (opts.symmetrize) {
    auto forward = g.neighbors;
    for (Id i = 0; i < n; ++i)
      for (Id j : forward[i]) g.neighbors[j].push_back(i);
  }
  for (auto& v : g.neighbors) sort_unique(v);
  return g;
}

}  // namespace gate
