#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "gate/checkpoint.hpp"
#include "gate/error.hpp"
#include "gate/trainer.hpp"
#include "synthetic.hpp"

using namespace gate;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  testing::Planted data;
  DataSplit split;
  TrainConfig cfg;
};

Fixture small(Ablation ab = Ablation::kFull) {
  testing::PlantedOptions o;
  o.users = 16;
  o.items = 10;
  o.min_per_user = 3;
  Fixture f;
  f.data = testing::make_planted(o);
  f.split = split_per_user(f.data.ratings, 0.2, 1, 0, true);
  f.cfg.model = testing::toy_hyper(f.data, ab);
  f.cfg.epochs = 4;
  f.cfg.batch_size = 4;
  f.cfg.seed = 7;
  return f;
}

}  // namespace

TEST_CASE("config defaults and validation") {
  TrainConfig c;
  CHECK(c.model.h1 == 100);
  CHECK(c.model.h == 50);
  CHECK(c.model.d_a == 20);
  CHECK(c.model.max_len == 300);
  CHECK(c.model.lambda == 0.001);
  CHECK(c.model.rho == 5.0);
  CHECK(c.adam.learning_rate == 0.01);
  CHECK(c.batch_size == 1024);
  c.model.num_users = 10;
  c.model.num_items = 10;
  c.model.vocab_size = 10;
  CHECK_NOTHROW(validate_config(c));
  auto bad = c;
  bad.model.rho = 1.0;
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
  bad = c;
  bad.model.d_a = 0;
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
  bad = c;
  bad.batch_size = 0;
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
  bad = c;
  bad.epochs = 0;
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
  bad = c;
  bad.early_stop_patience = 2;
  CHECK(validate_config(bad).validation);
}

TEST_CASE("config key/value round trip") {
  TrainConfig c;
  c.model.rho = 15;
  c.model.ablation = Ablation::kAeWordGate;
  c.adam.learning_rate = 0.003;
  c.seed = 99;
  const auto back = config_from_map(config_to_map(c));
  CHECK(config_to_map(back) == config_to_map(c));
  CHECK_THROWS_AS(config_from_map({{"rhoo", "3"}}), ConfigError);
  CHECK_THROWS_AS(config_from_map({{"epochs", "-1"}}), ConfigError);
  CHECK(model_from_map(config_to_map(c)).rho == 15);
}

TEST_CASE("every item is visited once per epoch") {
  auto f = small();
  TrainHooks hooks;
  std::map<std::size_t, std::multiset<Id>> seen;
  std::map<std::size_t, std::vector<std::size_t>> sizes;
  hooks.on_batch = [&](std::size_t e, std::span<const Id> b) {
    seen[e].insert(b.begin(), b.end());
    sizes[e].push_back(b.size());
  };
  train(f.split, f.data.corpus, f.data.graph, f.cfg, hooks);
  CHECK(seen.size() == 4);
  for (const auto& [e, items] : seen) {
    CHECK(items.size() == 10);
    CHECK(std::set<Id>(items.begin(), items.end()).size() == 10);
    CHECK(sizes[e] == std::vector<std::size_t>{4, 4, 2});
  }
}

TEST_CASE("training is deterministic") {
  auto f = small();
  const auto a = train(f.split, f.data.corpus, f.data.graph, f.cfg);
  const auto b = train(f.split, f.data.corpus, f.data.graph, f.cfg);
  CHECK(a.params == b.params);
  CHECK(a.log.to_jsonl(false) == b.log.to_jsonl(false));
  f.cfg.seed = 8;
  const auto c = train(f.split, f.data.corpus, f.data.graph, f.cfg);
  CHECK_FALSE(a.params == c.params);
}

TEST_CASE("resume from checkpoint equals uninterrupted training") {
  auto f = small();
  const auto dir = fs::temp_directory_path() / "gate_test_resume";
  fs::remove_all(dir);
  f.cfg.checkpoint_dir = dir;
  f.cfg.eval_every = 2;
  const auto full = train(f.split, f.data.corpus, f.data.graph, f.cfg);
  CHECK(fs::exists(dir / "epoch_2.ckpt"));
  CHECK(fs::exists(dir / "epoch_4.ckpt"));
  CHECK(fs::exists(dir / "best.ckpt"));
  const auto mid = load_checkpoint(dir / "epoch_2.ckpt");
  CHECK(mid.metadata.at("epoch") == "2");
  CHECK(mid.params.step() == 2 * 3);
  TrainHooks hooks;
  hooks.resume = &mid;
  auto cfg2 = f.cfg;
  cfg2.checkpoint_dir = dir / "resumed";
  const auto resumed = train(f.split, f.data.corpus, f.data.graph, cfg2, hooks);
  CHECK(resumed.params == full.params);
  CHECK(resumed.log.to_jsonl(false) == full.log.to_jsonl(false));
  fs::remove_all(dir);
}

TEST_CASE("ablation checkpoints omit unused slots") {
  auto f = small(Ablation::kAeOnly);
  const auto r = train(f.split, f.data.corpus, f.data.graph, f.cfg);
  for (const char* s : {slot::E, slot::Wa1, slot::Wg1, slot::Wn}) CHECK_FALSE(r.params.contains(s));
  CHECK(r.params.contains(slot::W1));
}

TEST_CASE("validation selects the best epoch") {
  auto f = small();
  f.cfg.validation = true;
  f.cfg.validation_frac = 0.3;
  f.cfg.eval_every = 1;
  f.cfg.epochs = 6;
  const auto r = train(f.split, f.data.corpus, f.data.graph, f.cfg);
  CHECK(r.log.records.size() == 6);
  double best = -1;
  std::size_t best_epoch = 0;
  for (const auto& rec : r.log.records) {
    REQUIRE(rec.val_ndcg);
    CHECK(*rec.val_ndcg >= 0);
    CHECK(*rec.val_ndcg <= 1);
    if (*rec.val_ndcg > best) best = *rec.val_ndcg, best_epoch = rec.epoch;
  }
  CHECK(r.log.best_epoch == best_epoch);
}

TEST_CASE("early stopping halts after patience runs out") {
  auto f = small();
  f.cfg.early_stop_patience = 1;
  f.cfg.validation_frac = 0.3;
  f.cfg.eval_every = 1;
  f.cfg.epochs = 200;
  f.cfg.adam.learning_rate = 0.05;
  const auto r = train(f.split, f.data.corpus, f.data.graph, f.cfg);
  CHECK(r.log.records.size() < 200);
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  auto f = small();
  f.cfg.model.rho = 1e300;
  try {
    train(f.split, f.data.corpus, f.data.graph, f.cfg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epoch 1") != std::string::npos);
    CHECK(msg.find("batch") != std::string::npos);
  }
}

TEST_CASE("mismatched inputs are rejected") {
  auto f = small();
  f.cfg.model.num_users += 1;
  CHECK_THROWS_AS(train(f.split, f.data.corpus, f.data.graph, f.cfg), ConfigError);
}

TEST_CASE("log records are finite with increasing epochs") {
  auto f = small();
  const auto r = train(f.split, f.data.corpus, f.data.graph, f.cfg);
  for (std::size_t k = 0; k < r.log.records.size(); ++k) {
    CHECK(r.log.records[k].epoch == k + 1);
    CHECK(std::isfinite(r.log.records[k].mean_loss));
  }
  CHECK(r.log.to_jsonl(false).find("wall_seconds") == std::string::npos);
  CHECK(r.log.to_jsonl(true).find("wall_seconds") != std::string::npos);
}
