#include "gate/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "gate/error.hpp"
#include "gate/threads.hpp"

namespace gate {

namespace {

std::vector<std::vector<Id>> exclusion_lists(const SparseBinaryRatings& r) {
  std::vector<std::vector<Id>> out(r.num_users());
  for (Id u = 0; u < r.num_users(); ++u) {
    const auto items = r.items_of(u);
    out[u].assign(items.begin(), items.end());
  }
  return out;
}

}  // namespace

ScoreSink ScoreSink::dense(Matrix user_by_item, const SparseBinaryRatings& exclude) {
  if (user_by_item.rows() != exclude.num_users() || user_by_item.cols() != exclude.num_items()) {
    throw ShapeError("score matrix " + user_by_item.shape_string() + " does not match ratings");
  }
  ScoreSink s;
  s.num_items_ = user_by_item.cols();
  s.dense_ = std::move(user_by_item);
  s.excluded_ = exclusion_lists(exclude);
  return s;
}

ScoreSink ScoreSink::factored(Matrix item_features, Matrix w4, Vector b4, OutputActivation act,
                              const SparseBinaryRatings& exclude) {
  if (item_features.cols() != w4.cols() || w4.rows() != b4.size() || w4.rows() != exclude.num_users() ||
      item_features.rows() != exclude.num_items()) {
    throw ShapeError("factored score sink: inconsistent shapes");
  }
  ScoreSink s;
  s.factored_ = true;
  s.num_items_ = item_features.rows();
  s.features_ = std::move(item_features);
  s.w4_ = std::move(w4);
  s.b4_ = std::move(b4);
  s.act_ = act;
  s.excluded_ = exclusion_lists(exclude);
  return s;
}

void ScoreSink::user_scores(Id user, std::span<double> out) const {
  if (user >= num_users()) throw std::out_of_range("user id out of range");
  if (!factored_) {
    const auto row = dense_.row(user);
    std::copy(row.begin(), row.end(), out.begin());
    return;
  }
  gemv(features_, w4_.row(user), out);
  for (double& x : out) {
    x += b4_[user];
    x = act_ == OutputActivation::kTanh ? std::tanh(x) : sigmoid(x);
  }
}

std::vector<double> ScoreSink::user_scores(Id user) const {
  std::vector<double> out(num_items_);
  user_scores(user, out);
  return out;
}

ScoreSink score_all(const ModelHyper& hp, const ParameterSet& params, const SparseBinaryRatings& train,
                    const ItemCorpus* corpus, const NeighborGraph* graph) {
  check_parameters(hp, params);
  ModelData data{&train, corpus, graph};
  std::vector<Id> all(hp.num_items);
  std::iota(all.begin(), all.end(), Id{0});
  const auto trace = forward(hp, params, data, all);
  Matrix features(hp.num_items, hp.h1);
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto& d = trace.outputs[i].decoded;
    auto row = features.row(i);
    std::copy(d.z3g.begin(), d.z3g.end(), row.begin());
    if (hp.uses_neighbors()) axpy(1.0, d.z3n, row);
  }
  const auto b4 = params.value(slot::b4).data();
  return ScoreSink::factored(std::move(features), params.value(slot::W4), Vector(b4.begin(), b4.end()),
                             hp.output, train);
}

std::vector<Id> top_k(std::span<const double> scores, std::span<const Id> excluded, std::size_t k) {
  std::vector<Id> cand;
  cand.reserve(scores.size());
  for (Id i = 0, e = 0; i < scores.size(); ++i) {
    while (e < excluded.size() && excluded[e] < i) ++e;
    if (e < excluded.size() && excluded[e] == i) continue;
    cand.push_back(i);
  }
  auto better = [&](Id a, Id b) { return scores[a] != scores[b] ? scores[a] > scores[b] : a < b; };
  const std::size_t kk = std::min(k, cand.size());
  std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(kk), cand.end(), better);
  cand.resize(kk);
  std::sort(cand.begin(), cand.end(), better);
  return cand;
}

double user_recall(std::span<const Id> ranked, std::span<const Id> test, std::size_t k) {
  if (test.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t p = 0; p < std::min(k, ranked.size()); ++p)
    if (std::binary_search(test.begin(), test.end(), ranked[p])) ++hits;
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

double user_ndcg(std::span<const Id> ranked, std::span<const Id> test, std::size_t k) {
  if (test.empty()) return 0.0;
  double dcg = 0.0, idcg = 0.0;
  for (std::size_t p = 0; p < std::min(k, ranked.size()); ++p)
    if (std::binary_search(test.begin(), test.end(), ranked[p])) dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  for (std::size_t p = 0; p < std::min(k, test.size()); ++p) idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  return dcg / idcg;
}

double RankingMetrics::recall_at(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i)
    if (ks[i] == k) return recall[i];
  throw std::out_of_range("no recall@" + std::to_string(k) + " in metrics");
}

double RankingMetrics::ndcg_at(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i)
    if (ks[i] == k) return ndcg[i];
  throw std::out_of_range("no ndcg@" + std::to_string(k) + " in metrics");
}

RankingMetrics evaluate_ranking(const ScoreSink& sink, const std::vector<std::vector<Id>>& test,
                                std::span<const std::size_t> ks) {
  if (ks.empty() || std::find(ks.begin(), ks.end(), 0) != ks.end()) throw ConfigError("k values must be >= 1");
  if (test.size() != sink.num_users()) throw ShapeError("test sets do not match the number of users");
  const std::size_t kmax = *std::max_element(ks.begin(), ks.end());

  // Per-user values are written to their own slots and summed in user order afterwards.
  std::vector<std::vector<double>> rec(test.size()), nd(test.size());
  parallel_for(test.size(), [&](std::size_t u) {
    if (test[u].empty()) return;
    std::vector<Id> t = test[u];
    std::sort(t.begin(), t.end());
    const auto scores = sink.user_scores(static_cast<Id>(u));
    const auto ranked = top_k(scores, sink.excluded(static_cast<Id>(u)), kmax);
    for (std::size_t k : ks) {
      rec[u].push_back(user_recall(ranked, t, k));
      nd[u].push_back(user_ndcg(ranked, t, k));
    }
  });

  RankingMetrics m;
  m.ks.assign(ks.begin(), ks.end());
  m.recall.assign(ks.size(), 0.0);
  m.ndcg.assign(ks.size(), 0.0);
  for (std::size_t u = 0; u < test.size(); ++u) {
    if (rec[u].empty()) continue;
    ++m.num_users;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      m.recall[i] += rec[u][i];
      m.ndcg[i] += nd[u][i];
    }
  }
  if (m.num_users == 0) throw DataError("no users with held-out items to evaluate");
  for (std::size_t i = 0; i < ks.size(); ++i) {
    m.recall[i] /= static_cast<double>(m.num_users);
    m.ndcg[i] /= static_cast<double>(m.num_users);
  }
  return m;
}

double recall_at_k(const ScoreSink& sink, const std::vector<std::vector<Id>>& test, std::size_t k) {
  const std::size_t ks[] = {k};
  return evaluate_ranking(sink, test, ks).recall[0];
}

double ndcg_at_k(const ScoreSink& sink, const std::vector<std::vector<Id>>& test, std::size_t k) {
  const std::size_t ks[] = {k};
  return evaluate_ranking(sink, test, ks).ndcg[0];
}

MetricReport aggregate_folds(const std::vector<RankingMetrics>& folds) {
  if (folds.empty()) throw std::invalid_argument("aggregate_folds: no folds");
  MetricReport r;
  r.ks = folds.front().ks;
  for (const auto& f : folds)
    if (f.ks != r.ks) throw ConfigError("aggregate_folds: folds use different k lists");
  if (folds.size() != 5) {
    r.warnings.push_back("expected 5 folds, averaging " + std::to_string(folds.size()));
  }
  r.folds = folds;
  r.mean.ks = r.ks;
  r.mean.recall.assign(r.ks.size(), 0.0);
  r.mean.ndcg.assign(r.ks.size(), 0.0);
  for (const auto& f : folds) {
    for (std::size_t i = 0; i < r.ks.size(); ++i) {
      r.mean.recall[i] += f.recall[i];
      r.mean.ndcg[i] += f.ndcg[i];
    }
    r.mean.num_users += f.num_users;
  }
  const double n = static_cast<double>(folds.size());
  for (std::size_t i = 0; i < r.ks.size(); ++i) {
    r.mean.recall[i] /= n;
    r.mean.ndcg[i] /= n;
  }
  r.mean.num_users /= folds.size();
  return r;
}

namespace {

nlohmann::ordered_json metrics_json(const RankingMetrics& m) {
  nlohmann::ordered_json j;
  j["users"] = m.num_users;
  for (std::size_t i = 0; i < m.ks.size(); ++i) {
    const auto k = std::to_string(m.ks[i]);
    j["recall@" + k] = m.recall[i];
    j["ndcg@" + k] = m.ndcg[i];
  }
  return j;
}

}  // namespace

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "gate-metric-report";
  j["version"] = 1;
  j["ks"] = ks;
  j["info"] = info;
  auto& fj = j["folds"] = nlohmann::ordered_json::array();
  for (const auto& f : folds) fj.push_back(metrics_json(f));
  j["mean"] = metrics_json(mean);
  j["warnings"] = warnings;
  return j.dump(2) + "\n";
}

void write_report(const std::filesystem::path& path, const MetricReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write report: " + path.string());
  out << report.to_json();
}

}  // namespace gate
