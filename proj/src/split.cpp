#include "gate/split.hpp"

#include <algorithm>
#include <cmath>

#include "gate/error.hpp"
#include "gate/rng.hpp"

namespace gate {

std::size_t DataSplit::num_test_pairs() const {
  std::size_t n = 0;
  for (const auto& t : test) n += t.size();
  return n;
}

std::size_t holdout_count(std::size_t rated, double test_frac) {
  return static_cast<std::size_t>(std::llround(test_frac * static_cast<double>(rated)));
}

DataSplit split_per_user(const SparseBinaryRatings& all, double test_frac, std::uint64_t seed,
                         std::size_t fold_index, bool allow_small_users) {
  if (!(test_frac > 0.0 && test_frac < 1.0)) throw ConfigError("test fraction must lie in (0, 1)");
  DataSplit split;
  split.seed = seed;
  split.fold_index = fold_index;
  split.test.resize(all.num_users());

  Rng rng(mix_seed(seed, fold_index));
  std::vector<Interaction> train_pairs;
  train_pairs.reserve(all.nnz());
  for (Id u = 0; u < all.num_users(); ++u) {
    const auto rated = all.items_of(u);
    if (rated.size() < 2 && !allow_small_users) {
      throw DataError("user " + std::to_string(u) + " has " + std::to_string(rated.size()) +
                      " ratings; at least 2 are needed to split");
    }
    std::vector<Id> items(rated.begin(), rated.end());
    const std::size_t k = rated.size() < 2 ? 0 : holdout_count(rated.size(), test_frac);
    // Partial Fisher-Yates: the first k positions become the test sample.
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + rng.below(items.size() - i);
      std::swap(items[i], items[j]);
    }
    split.test[u].assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(split.test[u].begin(), split.test[u].end());
    for (std::size_t i = k; i < items.size(); ++i) train_pairs.push_back({u, items[i]});
  }
  split.train = SparseBinaryRatings(all.num_users(), all.num_items(), train_pairs);
  return split;
}

}  // namespace gate
