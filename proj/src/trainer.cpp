#include "gate/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "gate/bundle.hpp"
#include "gate/error.hpp"
#include "gate/evaluator.hpp"
#include "gate/rng.hpp"

namespace gate {

TrainConfig validate_config(TrainConfig cfg) {
  cfg.model.validate();
  cfg.adam.validate();
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (cfg.epochs == 0) throw ConfigError("epochs must be >= 1");
  if (cfg.early_stop_patience > 0) cfg.validation = true;
  if (cfg.validation) {
    if (!(cfg.validation_frac > 0.0 && cfg.validation_frac < 1.0)) {
      throw ConfigError("validation_frac must be in (0, 1)");
    }
    if (cfg.validation_k == 0) throw ConfigError("validation_k must be >= 1");
  }
  return cfg;
}

// ---- config <-> key/value ---------------------------------------------------------

std::map<std::string, std::string> config_to_map(const TrainConfig& c) {
  const auto& m = c.model;
  return {
      {"m", std::to_string(m.num_users)},
      {"n", std::to_string(m.num_items)},
      {"v", std::to_string(m.vocab_size)},
      {"h1", std::to_string(m.h1)},
      {"h", std::to_string(m.h)},
      {"d_a", std::to_string(m.d_a)},
      {"max_len", std::to_string(m.max_len)},
      {"rho", format_double(m.rho)},
      {"lambda", format_double(m.lambda)},
      {"attention", to_string(m.attention)},
      {"ablation", to_string(m.ablation)},
      {"neighbor_grad", to_string(m.neighbor_grad)},
      {"output", to_string(m.output)},
      {"lr", format_double(c.adam.learning_rate)},
      {"beta1", format_double(c.adam.beta1)},
      {"beta2", format_double(c.adam.beta2)},
      {"epsilon", format_double(c.adam.epsilon)},
      {"epochs", std::to_string(c.epochs)},
      {"batch_size", std::to_string(c.batch_size)},
      {"seed", std::to_string(c.seed)},
      {"eval_every", std::to_string(c.eval_every)},
      {"early_stop_patience", std::to_string(c.early_stop_patience)},
      {"validation", c.validation ? "true" : "false"},
      {"validation_frac", format_double(c.validation_frac)},
      {"validation_k", std::to_string(c.validation_k)},
  };
}

namespace {

std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    if (!s.empty() && s[0] == '-') throw std::invalid_argument("negative");
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != s.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
  return v;
}

double parse_real(const std::string& key, const std::string& s) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != s.size()) throw ConfigError(key + ": expected a number, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + s + "'");
}

}  // namespace

TrainConfig config_from_map(const std::map<std::string, std::string>& kv, TrainConfig c) {
  auto& m = c.model;
  for (const auto& [k, s] : kv) {
    if (k == "m") m.num_users = parse_u64(k, s);
    else if (k == "n") m.num_items = parse_u64(k, s);
    else if (k == "v") m.vocab_size = parse_u64(k, s);
    else if (k == "h1") m.h1 = parse_u64(k, s);
    else if (k == "h") m.h = parse_u64(k, s);
    else if (k == "d_a") m.d_a = parse_u64(k, s);
    else if (k == "max_len") m.max_len = parse_u64(k, s);
    else if (k == "rho") m.rho = parse_real(k, s);
    else if (k == "lambda") m.lambda = parse_real(k, s);
    else if (k == "attention") m.attention = parse_attention_mode(s);
    else if (k == "ablation") m.ablation = parse_ablation(s);
    else if (k == "neighbor_grad") m.neighbor_grad = parse_neighbor_grad(s);
    else if (k == "output") m.output = parse_output_activation(s);
    else if (k == "lr") c.adam.learning_rate = parse_real(k, s);
    else if (k == "beta1") c.adam.beta1 = parse_real(k, s);
    else if (k == "beta2") c.adam.beta2 = parse_real(k, s);
    else if (k == "epsilon") c.adam.epsilon = parse_real(k, s);
    else if (k == "epochs") c.epochs = parse_u64(k, s);
    else if (k == "batch_size") c.batch_size = parse_u64(k, s);
    else if (k == "seed") c.seed = parse_u64(k, s);
    else if (k == "eval_every") c.eval_every = parse_u64(k, s);
    else if (k == "early_stop_patience") c.early_stop_patience = parse_u64(k, s);
    else if (k == "validation") c.validation = parse_bool(k, s);
    else if (k == "validation_frac") c.validation_frac = parse_real(k, s);
    else if (k == "validation_k") c.validation_k = parse_u64(k, s);
    else throw ConfigError("unknown config key '" + k + "'");
  }
  return c;
}

ModelHyper model_from_map(const std::map<std::string, std::string>& kv) {
  static const char* keys[] = {"m", "n", "v", "h1", "h", "d_a", "max_len", "rho", "lambda",
                               "attention", "ablation", "neighbor_grad", "output"};
  std::map<std::string, std::string> sub;
  for (const char* k : keys) {
    auto it = kv.find(k);
    if (it == kv.end()) throw ConfigError(std::string("checkpoint metadata lacks '") + k + "'");
    sub.emplace(k, it->second);
  }
  return config_from_map(sub).model;
}

// ---- log --------------------------------------------------------------------------

namespace {

nlohmann::ordered_json record_json(const EpochRecord& r, bool timing) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["mean_loss"] = r.mean_loss;
  if (timing) j["wall_seconds"] = r.wall_seconds;
  if (r.val_recall) j["val_recall"] = *r.val_recall;
  if (r.val_ndcg) j["val_ndcg"] = *r.val_ndcg;
  return j;
}

EpochRecord record_from_json(const nlohmann::json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.mean_loss = j.at("mean_loss").get<double>();
  if (j.contains("wall_seconds")) r.wall_seconds = j["wall_seconds"].get<double>();
  if (j.contains("val_recall")) r.val_recall = j["val_recall"].get<double>();
  if (j.contains("val_ndcg")) r.val_ndcg = j["val_ndcg"].get<double>();
  return r;
}

}  // namespace

std::string TrainLog::to_jsonl(bool timing) const {
  std::string out;
  for (const auto& r : records) out += record_json(r, timing).dump() + "\n";
  return out;
}

std::string TrainLog::summary_json(bool timing) const {
  nlohmann::ordered_json j;
  j["epochs"] = records.size();
  j["best_epoch"] = best_epoch;
  j["isolated_items"] = isolated_items;
  if (!records.empty()) j["final"] = record_json(records.back(), timing);
  double total = 0.0;
  for (const auto& r : records) total += r.wall_seconds;
  if (timing) j["wall_seconds"] = total;
  return j.dump(2) + "\n";
}

// ---- training ---------------------------------------------------------------------

namespace {

struct ValidationState {
  bool enabled = false;
  SparseBinaryRatings fit;
  std::vector<std::vector<Id>> held_out;
};

void check_inputs(const ModelHyper& hp, const DataSplit& split, const ItemCorpus& corpus, const NeighborGraph& graph) {
  if (split.train.num_users() != hp.num_users || split.train.num_items() != hp.num_items) {
    throw ConfigError("split is " + std::to_string(split.train.num_users()) + "x" +
                      std::to_string(split.train.num_items()) + " but config says m=" +
                      std::to_string(hp.num_users) + " n=" + std::to_string(hp.num_items));
  }
  if (hp.uses_content() && (corpus.num_items() != hp.num_items || corpus.vocab_size() != hp.vocab_size)) {
    throw ConfigError("corpus does not match config (items " + std::to_string(corpus.num_items()) + ", vocab " +
                      std::to_string(corpus.vocab_size()) + ")");
  }
  if (hp.uses_neighbors() && graph.num_items() != hp.num_items) {
    throw ConfigError("neighbor graph has " + std::to_string(graph.num_items()) + " items, expected " +
                      std::to_string(hp.num_items));
  }
}

std::map<std::string, std::string> checkpoint_metadata(const TrainConfig& cfg, std::size_t epoch, const TrainLog& log,
                                                       double best_score, std::size_t bad_evals) {
  auto meta = config_to_map(cfg);
  meta["epoch"] = std::to_string(epoch);
  meta["best_epoch"] = std::to_string(log.best_epoch);
  meta["best_score"] = format_double(best_score);
  meta["bad_evals"] = std::to_string(bad_evals);
  meta["train_log"] = log.to_jsonl(true);
  meta["tool_version"] = kToolVersion;
  return meta;
}

}  // namespace

TrainResult train(const DataSplit& split, const ItemCorpus& corpus, const NeighborGraph& graph, TrainConfig cfg,
                  const TrainHooks& hooks) {
  cfg = validate_config(std::move(cfg));
  const ModelHyper& hp = cfg.model;
  check_inputs(hp, split, corpus, graph);

  ValidationState val;
  val.enabled = cfg.validation;
  if (val.enabled) {
    auto vs = split_per_user(split.train, cfg.validation_frac, mix_seed(cfg.seed, 0x7a11da7e), 0, true);
    if (vs.num_test_pairs() == 0) throw ConfigError("validation split is empty; raise validation_frac");
    val.fit = std::move(vs.train);
    val.held_out = std::move(vs.test);
  }
  const SparseBinaryRatings& fit = val.enabled ? val.fit : split.train;
  const ModelData data{&fit, &corpus, &graph};

  TrainResult result;
  TrainLog& log = result.log;
  if (hp.uses_neighbors()) log.isolated_items = graph.num_isolated();

  ParameterSet params;
  std::size_t start_epoch = 0;
  double best_score = -1.0;
  std::size_t bad_evals = 0;
  std::optional<ParameterSet> best_params;
  if (hooks.resume) {
    params = hooks.resume->params;
    check_parameters(hp, params);
    const auto& meta = hooks.resume->metadata;
    auto get = [&](const char* k) -> const std::string& {
      auto it = meta.find(k);
      if (it == meta.end()) throw DataError(std::string("checkpoint metadata lacks '") + k + "'");
      return it->second;
    };
    start_epoch = std::stoull(get("epoch"));
    log.best_epoch = std::stoull(get("best_epoch"));
    best_score = std::stod(get("best_score"));
    bad_evals = std::stoull(get("bad_evals"));
    std::size_t pos = 0;
    const auto& text = get("train_log");
    while (pos < text.size()) {
      const auto nl = text.find('\n', pos);
      log.records.push_back(record_from_json(nlohmann::json::parse(text.substr(pos, nl - pos))));
      pos = nl == std::string::npos ? text.size() : nl + 1;
    }
    if (val.enabled && log.best_epoch > 0 && !cfg.checkpoint_dir.empty() &&
        std::filesystem::exists(cfg.checkpoint_dir / "best.ckpt")) {
      best_params = load_checkpoint(cfg.checkpoint_dir / "best.ckpt").params;
    }
  } else {
    params = init_parameters(hp, cfg.seed);
  }
  if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);

  std::vector<Id> order(hp.num_items);
  for (std::size_t epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), Id{0});
    Rng rng(mix_seed(cfg.seed, 0xe90c0000ULL + epoch));
    rng.shuffle(std::span<Id>(order));

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size, ++batches) {
      const std::span<const Id> batch(order.data() + lo, std::min(cfg.batch_size, order.size() - lo));
      const auto where = "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches + 1);
      if (hooks.on_batch) hooks.on_batch(epoch, batch);
      const auto trace = forward(hp, params, data, batch);
      double loss = 0.0;
      try {
        loss = batch_objective(hp, params, data, trace);
      } catch (const NumericError& e) {
        std::string culprit;
        for (const auto& [name, s] : params.slots())
          if (!all_finite(s.value.data())) culprit = ", slot " + name;
        throw NumericError("non-finite loss at " + where + culprit);
      }
      const auto grads = backward(hp, params, data, trace);
      for (const auto& [name, g] : grads)
        if (!all_finite(g.data())) throw NumericError("non-finite gradient at " + where + ", slot " + name);
      adam_step(params, grads, cfg.adam);
      loss_sum += loss;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = loss_sum / static_cast<double>(batches);
    if (!std::isfinite(rec.mean_loss)) throw NumericError("non-finite mean loss at epoch " + std::to_string(epoch));

    const bool eval_point = (cfg.eval_every > 0 && epoch % cfg.eval_every == 0) || epoch == cfg.epochs;
    bool improved = false;
    bool stop = false;
    if (eval_point && val.enabled) {
      const auto sink = score_all(hp, params, fit, &corpus, &graph);
      const std::size_t ks[] = {cfg.validation_k};
      const auto mtr = evaluate_ranking(sink, val.held_out, ks);
      rec.val_recall = mtr.recall[0];
      rec.val_ndcg = mtr.ndcg[0];
      if (*rec.val_ndcg > best_score) {
        best_score = *rec.val_ndcg;
        log.best_epoch = epoch;
        best_params = params;
        bad_evals = 0;
        improved = true;
      } else if (cfg.early_stop_patience > 0 && ++bad_evals >= cfg.early_stop_patience) {
        stop = true;
      }
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.records.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);

    if (eval_point && !cfg.checkpoint_dir.empty()) {
      const auto meta = checkpoint_metadata(cfg, epoch, log, best_score, bad_evals);
      save_checkpoint(cfg.checkpoint_dir / ("epoch_" + std::to_string(epoch) + ".ckpt"), {params, meta});
      if (improved || !val.enabled) save_checkpoint(cfg.checkpoint_dir / "best.ckpt", {params, meta});
    }
    if (stop) break;
  }

  if (!val.enabled) log.best_epoch = log.records.empty() ? 0 : log.records.back().epoch;
  result.params = (val.enabled && best_params) ? std::move(*best_params) : std::move(params);
  return result;
}

}  // namespace gate
