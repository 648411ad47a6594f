#include <doctest.h>

#include <numeric>

#include "gate/visualize.hpp"
#include "synthetic.hpp"

using namespace gate;

TEST_CASE("weight normalization") {
  CHECK(normalize_weights(std::vector<double>{2.0}) == std::vector<double>{0.5});
  CHECK(normalize_weights(std::vector<double>{3, 3, 3}) == std::vector<double>{0.5, 0.5, 0.5});
  CHECK(normalize_weights(std::vector<double>{1, 3, 2}) == std::vector<double>{0, 1, 0.5});
  CHECK(normalize_weights(std::vector<double>{}).empty());
}

TEST_CASE("accumulated attention sums rows") {
  const auto a = Matrix::from_rows({{0.2, 0.8}, {0.6, 0.4}});
  const auto s = accumulate_attention(a);
  CHECK(s[0] == doctest::Approx(0.8));
  CHECK(s[1] == doctest::Approx(1.2));
}

namespace {

struct Viz {
  testing::Planted d;
  ModelHyper hp;
  ParameterSet p;
  std::vector<std::string> names;
};

Viz setup() {
  testing::PlantedOptions o;
  o.users = 8;
  o.items = 6;
  o.neighbors = 2;
  Viz v;
  v.d = testing::make_planted(o);
  v.hp = testing::toy_hyper(v.d);
  v.p = init_parameters(v.hp, 3);
  for (int i = 0; i < 6; ++i) v.names.push_back("item" + std::to_string(i));
  return v;
}

}  // namespace

TEST_CASE("rendering weights and neighbor scores") {
  const auto v = setup();
  const ModelData data{&v.d.ratings, &v.d.corpus, &v.d.graph};
  for (Id i = 0; i < 6; ++i) {
    const auto r = render_item(v.hp, v.p, data, v.names, i);
    CHECK(r.words.size() == v.d.corpus.doc(i).size());
    for (const auto& w : r.words) {
      CHECK(w.weight >= 0);
      CHECK(w.weight <= 1);
      CHECK(w.colored == (w.weight >= kColorFloor));
    }
    CHECK(r.neighbors.size() == v.d.graph.of(i).size());
    double s = 0;
    for (std::size_t k = 0; k < r.neighbors.size(); ++k) {
      s += r.neighbors[k].score;
      if (k) CHECK(r.neighbors[k - 1].score >= r.neighbors[k].score);
    }
    if (!r.neighbors.empty()) CHECK(std::abs(s - 1) <= 1e-6);
  }
}

TEST_CASE("single neighbor and textless item") {
  auto v = setup();
  std::vector<std::pair<Id, Id>> edges = {{0, 1}};
  v.d.graph = build_neighbors_from_adjacency(edges, 6);
  std::vector<std::optional<std::string>> texts(6, std::string("alpha beta"));
  texts[0] = std::nullopt;
  texts[2] = std::string("solo");
  v.d.corpus = build_vocab(texts);
  v.hp.vocab_size = v.d.corpus.vocab_size();
  v.p = init_parameters(v.hp, 4);
  const ModelData data{&v.d.ratings, &v.d.corpus, &v.d.graph};
  const auto r0 = render_item(v.hp, v.p, data, v.names, 0);
  CHECK_FALSE(r0.message.empty());
  CHECK(r0.words.empty());
  REQUIRE(r0.neighbors.size() == 1);
  CHECK(r0.neighbors[0].score == 1.0);
  CHECK(r0.neighbors[0].name == "item1");
  const auto r2 = render_item(v.hp, v.p, data, v.names, 2);
  REQUIRE(r2.words.size() == 1);
  CHECK(r2.words[0].weight == 0.5);
}

TEST_CASE("html is deterministic and self-contained") {
  const auto v = setup();
  const ModelData data{&v.d.ratings, &v.d.corpus, &v.d.graph};
  std::vector<ItemRendering> items = {render_item(v.hp, v.p, data, v.names, 1),
                                      render_item(v.hp, v.p, data, v.names, 4)};
  items[0].name = "<b>&";
  const std::map<std::string, std::string> manifest = {{"seed", "1"}};
  const auto a = render_html(items, manifest), b = render_html(items, manifest);
  CHECK(a == b);
  CHECK(a.find("<script") == std::string::npos);
  CHECK(a.find("&lt;b&gt;&amp;") != std::string::npos);
  CHECK(render_terminal(items).find("== item") != std::string::npos);
}
