#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gate/error.hpp"
#include "gate/evaluator.hpp"
#include "gate/rng.hpp"
#include "synthetic.hpp"

using namespace gate;

namespace {

// Full sort oracle: every candidate ranked by (score desc, id asc).
std::vector<Id> full_sort_top(const std::vector<double>& s, const std::vector<Id>& excl, std::size_t k) {
  std::vector<Id> ids;
  for (Id i = 0; i < s.size(); ++i)
    if (std::find(excl.begin(), excl.end(), i) == excl.end()) ids.push_back(i);
  std::stable_sort(ids.begin(), ids.end(), [&](Id a, Id b) { return s[a] > s[b]; });
  if (ids.size() > k) ids.resize(k);
  return ids;
}

double oracle_recall(const std::vector<Id>& top, const std::vector<Id>& test) {
  double hits = 0;
  for (Id i : top) hits += std::count(test.begin(), test.end(), i);
  return hits / test.size();
}

double oracle_ndcg(const std::vector<Id>& top, const std::vector<Id>& test, std::size_t k) {
  double dcg = 0, idcg = 0;
  for (std::size_t p = 0; p < top.size(); ++p)
    if (std::count(test.begin(), test.end(), top[p])) dcg += 1 / std::log2(p + 2.0);
  for (std::size_t p = 0; p < std::min(k, test.size()); ++p) idcg += 1 / std::log2(p + 2.0);
  return dcg / idcg;
}

SparseBinaryRatings exclusion(std::size_t m, std::size_t n, const std::vector<std::vector<Id>>& per_user) {
  std::vector<Interaction> p;
  for (Id u = 0; u < per_user.size(); ++u)
    for (Id i : per_user[u]) p.push_back({u, i});
  return SparseBinaryRatings(m, n, p);
}

}  // namespace

TEST_CASE("recall worked example") {
  Matrix s = Matrix::from_rows({{.9, .8, .7, .6, .5}});
  const auto sink = ScoreSink::dense(s, exclusion(1, 5, {{0}}));
  const std::vector<std::vector<Id>> test = {{2, 4}};
  const auto top = top_k(sink.user_scores(0), sink.excluded(0), 2);
  CHECK(top == std::vector<Id>{1, 2});
  CHECK(recall_at_k(sink, test, 2) == 0.5);
}

TEST_CASE("ndcg closed forms") {
  Matrix s = Matrix::from_rows({{.9, .8, .7, .6}});
  const auto sink = ScoreSink::dense(s, exclusion(1, 4, {{}}));
  CHECK(ndcg_at_k(sink, {{1}}, 2) == doctest::Approx(1 / std::log2(3.0)).epsilon(1e-15));
  CHECK(ndcg_at_k(sink, {{0, 1}}, 3) == 1.0);
  CHECK(recall_at_k(sink, {{0, 1}}, 2) == 1.0);
  CHECK(ndcg_at_k(sink, {{3}}, 2) == 0.0);
  CHECK(recall_at_k(sink, {{3}}, 2) == 0.0);
}

TEST_CASE("ties break by ascending item id") {
  const std::vector<double> s = {0.5, 0.7, 0.5, 0.7, 0.5};
  const std::vector<Id> none;
  CHECK(top_k(s, none, 4) == std::vector<Id>{1, 3, 0, 2});
  const std::vector<Id> ex = {3};
  CHECK(top_k(s, ex, 10) == std::vector<Id>{1, 0, 2, 4});
}

TEST_CASE("fast path equals full sort oracle exactly") {
  Rng rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(49), m = 1 + rng.below(6);
    Matrix s(m, n);
    for (double& x : s.data()) x = trial % 3 == 0 ? double(rng.below(4)) : rng.uniform();  // ties on some trials
    std::vector<std::vector<Id>> excl(m), test(m);
    for (Id u = 0; u < m; ++u)
      for (Id i = 0; i < n; ++i) {
        const double c = rng.uniform();
        if (c < 0.2) excl[u].push_back(i);
        else if (c < 0.4) test[u].push_back(i);
      }
    if (test[0].empty()) test[0].push_back(excl[0].empty() || excl[0][0] != 0 ? 0 : Id(n - 1));
    std::erase_if(excl[0], [&](Id i) { return std::count(test[0].begin(), test[0].end(), i) > 0; });
    const auto sink = ScoreSink::dense(s, exclusion(m, n, excl));
    const std::size_t ks[] = {1, 5, 10, 20};
    const auto met = evaluate_ranking(sink, test, ks);
    for (std::size_t ki = 0; ki < 4; ++ki) {
      double r = 0, g = 0;
      std::size_t users = 0;
      for (Id u = 0; u < m; ++u) {
        if (test[u].empty()) continue;
        ++users;
        std::vector<double> row(s.row(u).begin(), s.row(u).end());
        const auto top = full_sort_top(row, excl[u], ks[ki]);
        CHECK(top == top_k(row, sink.excluded(u), ks[ki]));
        for (Id i : top) CHECK(std::count(excl[u].begin(), excl[u].end(), i) == 0);
        r += oracle_recall(top, test[u]);
        g += oracle_ndcg(top, test[u], ks[ki]);
      }
      CHECK(met.num_users == users);
      CHECK(met.recall[ki] == doctest::Approx(r / users).epsilon(1e-15));
      CHECK(met.ndcg[ki] == doctest::Approx(g / users).epsilon(1e-15));
      CHECK(met.recall[ki] >= 0);
      CHECK(met.recall[ki] <= 1);
      CHECK(met.ndcg[ki] <= 1);
      if (ki) CHECK(met.recall[ki] >= met.recall[ki - 1]);
    }
  }
}

TEST_CASE("no testable users is an error") {
  const auto sink = ScoreSink::dense(Matrix(2, 3), exclusion(2, 3, {{}, {}}));
  CHECK_THROWS_AS(recall_at_k(sink, {{}, {}}, 2), DataError);
  CHECK_THROWS_AS(recall_at_k(sink, {{1}, {}}, 0), ConfigError);
}

TEST_CASE("fold aggregation") {
  auto fold = [](double v) {
    RankingMetrics m;
    m.ks = {10};
    m.recall = {v};
    m.ndcg = {v / 2};
    m.num_users = 4;
    return m;
  };
  const auto r = aggregate_folds({fold(0.1), fold(0.2), fold(0.3), fold(0.2), fold(0.2)});
  CHECK(r.mean.recall_at(10) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(r.warnings.empty());
  CHECK(r.folds.size() == 5);
  const auto rev = aggregate_folds({fold(0.2), fold(0.2), fold(0.3), fold(0.2), fold(0.1)});
  CHECK(rev.mean.recall_at(10) == doctest::Approx(r.mean.recall_at(10)).epsilon(1e-15));
  const auto same = aggregate_folds({fold(0.4), fold(0.4)});
  CHECK(same.mean.recall_at(10) == 0.4);
  CHECK(same.warnings.size() == 1);
  auto other = fold(0.1);
  other.ks = {5};
  CHECK_THROWS_AS(aggregate_folds({fold(0.1), other}), ConfigError);
  const auto json = r.to_json();
  CHECK(json.find("\"recall@10\"") != std::string::npos);
}

TEST_CASE("score sink entries equal single-item forward outputs") {
  gate::testing::PlantedOptions o;
  o.users = 3;
  o.items = 4;
  o.blocks = 2;
  o.min_per_user = 1;
  o.neighbors = 1;
  const auto d = gate::testing::make_planted(o);
  auto hp = gate::testing::toy_hyper(d);
  const auto p = init_parameters(hp, 3);
  const auto sink = score_all(hp, p, d.ratings, &d.corpus, &d.graph);
  const ModelData data{&d.ratings, &d.corpus, &d.graph};
  for (Id i = 0; i < 4; ++i) {
    const Id one[] = {i};
    const auto tr = forward(hp, p, data, one);
    for (Id u = 0; u < 3; ++u) CHECK(sink.user_scores(u)[i] == doctest::Approx(tr.outputs[0].decoded.r_hat[u]).epsilon(1e-13));
  }
  const auto again = score_all(hp, p, d.ratings, &d.corpus, &d.graph);
  for (Id u = 0; u < 3; ++u) CHECK(again.user_scores(u) == sink.user_scores(u));
  for (Id u = 0; u < 3; ++u) {
    const auto ex = sink.excluded(u);
    CHECK(std::vector<Id>(ex.begin(), ex.end()) == std::vector<Id>(d.ratings.items_of(u).begin(), d.ratings.items_of(u).end()));
  }
}

TEST_CASE("constant scores give the id-order baseline") {
  const std::size_t n = 40;
  const auto sink = ScoreSink::dense(Matrix(1, n, 0.3), exclusion(1, n, {{}}));
  std::vector<std::vector<Id>> test = {{0, 1, 2, 3, 30, 31, 32, 33, 34, 35}};
  CHECK(recall_at_k(sink, test, 10) == 0.4);
}
