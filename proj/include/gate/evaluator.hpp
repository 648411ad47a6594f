#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gate/model.hpp"
#include "gate/params.hpp"
#include "gate/ratings.hpp"

namespace gate {

inline const std::vector<std::size_t> kDefaultKs = {5, 10, 15, 20};

// Per-user item scores (rows of R_hat^T) plus the per-user train items that must never be
// recommended. Either holds a dense m x n score matrix, or the per-item decoder hidden
// features from which a user's row is produced on demand (r_hat_ui = a4(W4_u . f_i + b4_u)).
class ScoreSink {
 public:
  static ScoreSink dense(Matrix user_by_item, const SparseBinaryRatings& exclude);
  static ScoreSink factored(Matrix item_features, Matrix w4, Vector b4, OutputActivation act,
                            const SparseBinaryRatings& exclude);

  std::size_t num_users() const { return excluded_.size(); }
  std::size_t num_items() const { return num_items_; }
  void user_scores(Id user, std::span<double> out) const;
  std::vector<double> user_scores(Id user) const;
  std::span<const Id> excluded(Id user) const { return excluded_.at(user); }

 private:
  ScoreSink() = default;
  bool factored_ = false;
  std::size_t num_items_ = 0;
  Matrix dense_;
  Matrix features_;
  Matrix w4_;
  Vector b4_;
  OutputActivation act_ = OutputActivation::kTanh;
  std::vector<std::vector<Id>> excluded_;
};

// Runs the full forward pass for every item (same configuration as training) against
// `train` ratings; train items are the exclusion set.
ScoreSink score_all(const ModelHyper& hp, const ParameterSet& params, const SparseBinaryRatings& train,
                    const ItemCorpus* corpus, const NeighborGraph* graph);

// Top-k non-excluded items ordered by (score desc, item id asc), via partial selection.
std::vector<Id> top_k(std::span<const double> scores, std::span<const Id> excluded, std::size_t k);

double user_recall(std::span<const Id> ranked, std::span<const Id> test, std::size_t k);
double user_ndcg(std::span<const Id> ranked, std::span<const Id> test, std::size_t k);

struct RankingMetrics {
  std::vector<std::size_t> ks;
  std::vector<double> recall;  // aligned with ks
  std::vector<double> ndcg;
  std::size_t num_users = 0;   // users with a non-empty test set

  double recall_at(std::size_t k) const;
  double ndcg_at(std::size_t k) const;
};

// Averages over users whose test list is non-empty. Throws DataError if there are none.
RankingMetrics evaluate_ranking(const ScoreSink& sink, const std::vector<std::vector<Id>>& test,
                                std::span<const std::size_t> ks = kDefaultKs);
double recall_at_k(const ScoreSink& sink, const std::vector<std::vector<Id>>& test, std::size_t k);
double ndcg_at_k(const ScoreSink& sink, const std::vector<std::vector<Id>>& test, std::size_t k);

struct MetricReport {
  std::vector<std::size_t> ks;
  std::vector<RankingMetrics> folds;
  RankingMetrics mean;
  std::map<std::string, std::string> info;  // fingerprints, config snapshot
  std::vector<std::string> warnings;

  std::string to_json() const;
};

// Arithmetic mean per metric per k. A fold count other than five adds a warning.
MetricReport aggregate_folds(const std::vector<RankingMetrics>& folds);
void write_report(const std::filesystem::path& path, const MetricReport& report);

}  // namespace gate
