#pragma once

#include <cstdint>
#include <vector>

#include "gate/ratings.hpp"

namespace gate {

inline constexpr std::size_t kNumFolds = 5;

struct DataSplit {
  SparseBinaryRatings train;
  std::vector<std::vector<Id>> test;  // per user, sorted
  std::uint64_t seed = 0;
  std::size_t fold_index = 0;

  std::size_t num_test_pairs() const;
};

// Number of held-out items for a user with `rated` items.
std::size_t holdout_count(std::size_t rated, double test_frac);

// Per user, samples round(test_frac * |rated|) items uniformly into the test set. The
// sample depends only on (seed, fold_index) and the input. Users with fewer than two
// ratings are rejected unless `allow_small_users`, in which case they keep all items in
// train.
DataSplit split_per_user(const SparseBinaryRatings& all, double test_frac, std::uint64_t seed,
                         std::size_t fold_index = 0, bool allow_small_users = false);

}  // namespace gate
