#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "gate/model.hpp"

namespace gate {

inline constexpr double kColorFloor = 0.05;

struct WordWeight {
  std::string token;
  double weight = 0.0;  // accumulated attention after min-max normalization
  bool colored = false;
};

struct NeighborScore {
  Id item = 0;
  std::string name;
  double score = 0.0;
};

struct ItemRendering {
  Id item = 0;
  std::string name;
  std::string message;  // set for textless items
  std::vector<WordWeight> words;
  std::vector<NeighborScore> neighbors;  // descending score, ties by item id
};

// Min-max normalization to [0, 1]; a constant vector maps to 0.5 everywhere.
std::vector<double> normalize_weights(std::span<const double> w);

// Column sums of the attention matrix over its rows (the d_a axis).
std::vector<double> accumulate_attention(const Matrix& attention);

// `data.ratings` should be the training ratings the model was fitted on.
ItemRendering render_item(const ModelHyper& hp, const ParameterSet& params, const ModelData& data,
                          std::span<const std::string> item_names, Id item);

// Single self-contained page: inline styles, no scripts.
std::string render_html(std::span<const ItemRendering> items, const std::map<std::string, std::string>& manifest);
std::string render_terminal(std::span<const ItemRendering> items);

}  // namespace gate
