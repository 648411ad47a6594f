#pragma once

#include <cstdint>
#include <vector>

#include "gate/model.hpp"
#include "gate/split.hpp"

namespace gate::testing {

// Planted-block data: users and items are assigned to blocks, ratings are dense inside a
// block and sparse across, documents draw most tokens from their block's topic words, and
// the neighbor graph links items of the same block.
struct PlantedOptions {
  std::size_t users = 20;
  std::size_t items = 12;
  std::size_t blocks = 2;
  double p_in = 0.6;
  double p_out = 0.0;
  std::size_t min_per_user = 2;  // in-block ratings forced up to this many
  std::size_t doc_len = 8;
  double doc_signal = 1.0;       // chance a token comes from the item's own block topic
  std::size_t words_per_block = 4;
  std::size_t noise_words = 4;
  std::size_t neighbors = 3;     // same-block neighbors drawn per item before symmetrizing
  double neighbor_noise = 0.0;   // chance a drawn neighbor is from a random block
  std::uint64_t seed = 1;
};

struct Planted {
  SparseBinaryRatings ratings;
  ItemCorpus corpus;
  NeighborGraph graph;
  std::vector<std::size_t> user_block;
  std::vector<std::size_t> item_block;
};

Planted make_planted(const PlantedOptions& opts);

// Small model settings matching `data` for fast tests.
ModelHyper toy_hyper(const Planted& data, Ablation ablation = Ablation::kFull);

}  // namespace gate::testing
