#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gate/neighbors.hpp"
#include "gate/ratings.hpp"
#include "gate/split.hpp"
#include "gate/text.hpp"

namespace gate {

inline constexpr int kBundleVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

struct PreprocessOptions {
  double rating_threshold = 4.0;
  bool prebinarized = false;
  FilterThresholds filter;
  VocabOptions vocab;
  SimilarityOptions similarity;
  double test_frac = 0.2;
  std::uint64_t seed = 1;
  std::size_t num_folds = kNumFolds;
};

struct RawInputs {
  std::vector<RawRating> ratings;
  std::map<std::string, std::string> documents;
  std::optional<std::vector<std::pair<std::string, std::string>>> relations;
};

struct FoldData {
  DataSplit split;
  NeighborGraph graph;
};

// Output of the preprocessing protocol: filtered ratings, corpus, and per-fold splits
// with their neighbor graphs (similarity graphs are built from each fold's train pairs).
struct Bundle {
  std::map<std::string, std::string> manifest;
  std::vector<std::string> user_names;
  std::vector<std::string> item_names;
  ItemCorpus corpus;
  SparseBinaryRatings ratings;
  std::vector<FoldData> folds;

  std::size_t num_users() const { return ratings.num_users(); }
  std::size_t num_items() const { return ratings.num_items(); }
  const FoldData& fold(std::size_t k) const;
};

RawInputs read_raw_inputs(const std::filesystem::path& ratings, const std::filesystem::path& documents,
                          const std::optional<std::filesystem::path>& relations);

// binarize -> filter -> vocabulary -> splits -> neighbor graphs.
Bundle preprocess(const RawInputs& raw, const PreprocessOptions& opts);

// Output is byte-for-byte deterministic given the bundle contents.
void write_bundle(const std::filesystem::path& dir, const Bundle& bundle);
Bundle read_bundle(const std::filesystem::path& dir);

// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fingerprint(std::string_view bytes);
// Shortest round-trip decimal rendering.
std::string format_double(double v);

}  // namespace gate
