#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gate {

using Id = std::uint32_t;

struct RawRating {
  std::string user;
  std::string item;
  double score = 1.0;
  bool has_score = false;
};

struct RawPair {
  std::string user;
  std::string item;
  bool operator==(const RawPair&) const = default;
};

struct Interaction {
  Id user = 0;
  Id item = 0;
  auto operator<=>(const Interaction&) const = default;
};

// Reads `user<TAB>item[<TAB>rating]` lines. Blank lines and lines starting with '#' are
// skipped. Parse failures throw DataError citing the line number.
std::vector<RawRating> read_ratings_tsv(const std::filesystem::path& path);

// Keeps pairs with score >= threshold. With `prebinarized`, every row is kept.
std::vector<RawPair> binarize_ratings(std::span<const RawRating> raw, double threshold = 4.0,
                                      bool prebinarized = false);

struct FilterThresholds {
  std::size_t min_user_ratings = 10;
  std::size_t min_item_ratings = 5;
};

struct FilteredInteractions {
  std::vector<Interaction> pairs;      // sorted by (user, item), deduplicated
  std::vector<std::string> user_names;  // dense id -> original id
  std::vector<std::string> item_names;
};

// Repeatedly drops under-threshold users and items until neither set changes, then
// assigns dense ids in order of first appearance. Throws DataError on an empty result.
FilteredInteractions filter_sparse(std::span<const RawPair> pairs, const FilterThresholds& th = {});

// m x n binary matrix with both row (user) and column (item) access.
class SparseBinaryRatings {
 public:
  SparseBinaryRatings() = default;
  SparseBinaryRatings(std::size_t num_users, std::size_t num_items,
                      std::span<const Interaction> pairs);

  std::size_t num_users() const { return by_user_.size(); }
  std::size_t num_items() const { return by_item_.size(); }
  std::size_t nnz() const { return nnz_; }

  std::span<const Id> items_of(Id user) const { return by_user_.at(user); }
  std::span<const Id> users_of(Id item) const { return by_item_.at(item); }
  bool contains(Id user, Id item) const;

  std::vector<Interaction> pairs() const;
  // Dense {0,1} rating column r_i of length num_users().
  std::vector<double> item_column(Id item) const;

  bool operator==(const SparseBinaryRatings&) const = default;

 private:
  std::vector<std::vector<Id>> by_user_;
  std::vector<std::vector<Id>> by_item_;
  std::size_t nnz_ = 0;
};

}  // namespace gate
