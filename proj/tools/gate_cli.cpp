// gate: preprocess / train / evaluate / visualize-attention.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "gate/bundle.hpp"
#include "gate/checkpoint.hpp"
#include "gate/error.hpp"
#include "gate/evaluator.hpp"
#include "gate/trainer.hpp"
#include "gate/visualize.hpp"

namespace fs = std::filesystem;
using namespace gate;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kNumeric = 4 };

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ','))
    if (!part.empty()) out.push_back(part);
  return out;
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
}

std::string render_kv(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

// Timestamps would break byte-identical reruns, so one is recorded only when
// SOURCE_DATE_EPOCH is set.
void add_run_info(std::map<std::string, std::string>& m) {
  m["tool_version"] = kToolVersion;
  if (const char* t = std::getenv("SOURCE_DATE_EPOCH")) m["timestamp"] = t;
}

// ---- preprocess -------------------------------------------------------------------

struct PreprocessArgs {
  std::string data_dir, out_dir, ratings, documents, relations;
  PreprocessOptions opts;
  std::string metric = "cosine";
  bool no_symmetrize = false;
};

int run_preprocess(const PreprocessArgs& a) {
  if (a.out_dir.empty()) throw ConfigError("--out-dir is required");
  auto resolve = [&](const std::string& explicit_path, const char* name) -> fs::path {
    if (!explicit_path.empty()) return explicit_path;
    if (a.data_dir.empty()) throw ConfigError(std::string("need --data-dir or --") + name);
    return fs::path(a.data_dir) / (std::string(name) + ".tsv");
  };
  const auto ratings = resolve(a.ratings, "ratings");
  const auto documents = resolve(a.documents, "documents");
  std::optional<fs::path> relations;
  if (!a.relations.empty()) relations = a.relations;
  else if (!a.data_dir.empty() && fs::exists(fs::path(a.data_dir) / "relations.tsv"))
    relations = fs::path(a.data_dir) / "relations.tsv";

  auto opts = a.opts;
  if (a.metric == "cosine") opts.similarity.metric = SimilarityMetric::kCosine;
  else if (a.metric == "jaccard") opts.similarity.metric = SimilarityMetric::kJaccard;
  else throw ConfigError("--similarity must be cosine or jaccard");
  opts.similarity.symmetrize = !a.no_symmetrize;
  if (opts.num_folds == 0) throw ConfigError("--folds must be >= 1");

  const auto raw = read_raw_inputs(ratings, documents, relations);
  auto bundle = preprocess(raw, opts);
  add_run_info(bundle.manifest);
  write_bundle(a.out_dir, bundle);
  std::cout << "bundle: " << bundle.num_users() << " users, " << bundle.num_items() << " items, "
            << bundle.ratings.nnz() << " ratings, " << bundle.corpus.num_words() << " words, "
            << bundle.folds.size() << " folds -> " << a.out_dir << "\n";
  return kOk;
}

// ---- model flags shared by train / evaluate / visualize ---------------------------

struct ModelArgs {
  std::string data_dir, out_dir;
  std::size_t fold = 0;
  TrainConfig cfg;
  std::string ablation = "full", attention = "multi_dim", neighbor_grad = "flow", output = "tanh";
  bool no_neighbors = false;
  std::string resume;
};

void add_run_flags(CLI::App* sub, ModelArgs& a) {
  sub->add_option("--data-dir", a.data_dir, "Preprocessed bundle directory");
  sub->add_option("--out-dir", a.out_dir, "Run directory");
  sub->add_option("--fold", a.fold, "Fold index");
}

void add_model_flags(CLI::App* sub, ModelArgs& a) {
  add_run_flags(sub, a);
  sub->add_option("--seed", a.cfg.seed, "Training seed");
  sub->add_option("--rho", a.cfg.model.rho, "Confidence weight on positives (> 1)");
  sub->add_option("--d-a", a.cfg.model.d_a, "Attention rows");
  sub->add_option("--h1", a.cfg.model.h1, "First hidden width");
  sub->add_option("--hidden", a.cfg.model.h, "Bottleneck / embedding width (h)");
  sub->add_option("--lambda", a.cfg.model.lambda, "L2 weight");
  sub->add_option("--lr", a.cfg.adam.learning_rate, "Adam learning rate");
  sub->add_option("--ablation", a.ablation, "ae_only | ae_word_gate | full");
  sub->add_option("--attention", a.attention, "vanilla | multi_dim");
  sub->add_flag("--no-neighbors", a.no_neighbors, "Drop the neighbor module (full -> ae_word_gate)");
  sub->add_option("--neighbor-grad", a.neighbor_grad, "flow | stop");
  sub->add_option("--output", a.output, "tanh | sigmoid");
}

ModelHyper resolve_model(const ModelArgs& a, const Bundle& b) {
  ModelHyper hp = a.cfg.model;
  hp.ablation = parse_ablation(a.ablation);
  if (a.no_neighbors && hp.ablation == Ablation::kFull) hp.ablation = Ablation::kAeWordGate;
  hp.attention = parse_attention_mode(a.attention);
  hp.neighbor_grad = parse_neighbor_grad(a.neighbor_grad);
  hp.output = parse_output_activation(a.output);
  hp.num_users = b.num_users();
  hp.num_items = b.num_items();
  hp.vocab_size = b.corpus.vocab_size();
  hp.max_len = b.corpus.max_len();
  return hp;
}

Bundle load_bundle(const ModelArgs& a) {
  if (a.data_dir.empty()) throw ConfigError("--data-dir is required");
  return read_bundle(a.data_dir);
}

const FoldData& pick_fold(const Bundle& b, std::size_t fold) {
  if (fold >= b.folds.size()) {
    throw ConfigError("--fold " + std::to_string(fold) + " out of range; bundle has " + std::to_string(b.folds.size()));
  }
  return b.fold(fold);
}

fs::path fold_dir(const ModelArgs& a, std::size_t fold) {
  if (a.out_dir.empty()) throw ConfigError("--out-dir is required");
  return fs::path(a.out_dir) / ("fold_" + std::to_string(fold));
}

// ---- train ------------------------------------------------------------------------

int run_train(const ModelArgs& a) {
  const auto bundle = load_bundle(a);
  const auto& fd = pick_fold(bundle, a.fold);
  TrainConfig cfg = a.cfg;
  cfg.model = resolve_model(a, bundle);
  const auto dir = fold_dir(a, a.fold);
  cfg.checkpoint_dir = dir;
  cfg = validate_config(cfg);

  auto manifest = config_to_map(cfg);
  manifest["fold"] = std::to_string(a.fold);
  manifest["dataset_fingerprint"] = bundle.manifest.at("dataset_fingerprint");
  manifest["bundle"] = a.data_dir;
  add_run_info(manifest);
  fs::create_directories(dir);
  write_text(dir / "manifest.txt", render_kv(manifest));

  std::optional<Checkpoint> resume;
  TrainHooks hooks;
  if (!a.resume.empty()) {
    resume = load_checkpoint(a.resume);
    hooks.resume = &*resume;
  }
  // Wall times go to their own file so the loss log stays byte-identical across reruns.
  const auto mode = a.resume.empty() ? std::ios::binary : std::ios::binary | std::ios::app;
  std::ofstream log_out(dir / "train_log.jsonl", mode);
  std::ofstream time_out(dir / "timing.jsonl", mode);
  hooks.on_epoch = [&](const EpochRecord& r) {
    TrainLog one;
    one.records.push_back(r);
    log_out << one.to_jsonl(false) << std::flush;
    time_out << "{\"epoch\":" << r.epoch << ",\"wall_seconds\":" << r.wall_seconds << "}\n" << std::flush;
    std::cerr << "epoch " << r.epoch << " loss " << r.mean_loss;
    if (r.val_ndcg) std::cerr << " val_ndcg@" << cfg.validation_k << " " << *r.val_ndcg;
    std::cerr << " (" << r.wall_seconds << "s)\n";
  };
  if (cfg.model.uses_neighbors() && fd.graph.num_isolated() > 0) {
    std::cerr << "note: " << fd.graph.num_isolated() << " items have no neighbors (z_n = 0)\n";
  }
  const auto result = train(fd.split, bundle.corpus, fd.graph, cfg, hooks);
  write_text(dir / "train_summary.json", result.log.summary_json(false));
  Checkpoint final_ckpt{result.params, manifest};
  final_ckpt.metadata["epoch"] = std::to_string(result.log.best_epoch);
  save_checkpoint(dir / "model.ckpt", final_ckpt);
  std::cout << "trained fold " << a.fold << " -> " << (dir / "model.ckpt").string() << "\n";
  return kOk;
}

// ---- evaluate ---------------------------------------------------------------------

struct EvalArgs {
  ModelArgs model;
  std::string checkpoint;
  std::string k_list = "5,10,15,20";
  std::vector<std::size_t> folds;
  bool all_folds = false;
};

Checkpoint load_model(const std::string& explicit_path, const fs::path& default_path) {
  const fs::path p = explicit_path.empty() ? default_path : fs::path(explicit_path);
  if (!fs::exists(p)) throw DataError("checkpoint not found: " + p.string());
  return load_checkpoint(p);
}

void check_against_bundle(const ModelHyper& hp, const Checkpoint& ck, const Bundle& b) {
  if (hp.num_users != b.num_users() || hp.num_items != b.num_items() ||
      (hp.uses_content() && hp.vocab_size != b.corpus.vocab_size())) {
    throw ConfigError("checkpoint was trained on different data dimensions than this bundle");
  }
  auto it = ck.metadata.find("dataset_fingerprint");
  if (it != ck.metadata.end() && it->second != b.manifest.at("dataset_fingerprint")) {
    throw ConfigError("checkpoint dataset fingerprint " + it->second + " does not match bundle");
  }
  check_parameters(hp, ck.params);
}

int run_evaluate(const EvalArgs& a) {
  const auto bundle = load_bundle(a.model);
  std::vector<std::size_t> ks;
  for (const auto& s : split_list(a.k_list)) {
    try {
      ks.push_back(std::stoul(s));
    } catch (const std::exception&) {
      throw ConfigError("--k-list: bad value '" + s + "'");
    }
  }
  std::vector<std::size_t> folds = a.folds;
  if (folds.empty()) {
    if (!a.checkpoint.empty()) {
      folds.push_back(a.model.fold);
    } else {
      for (std::size_t k = 0; k < bundle.folds.size(); ++k)
        if (fs::exists(fold_dir(a.model, k) / "model.ckpt")) folds.push_back(k);
      if (folds.empty()) throw DataError("no trained folds under " + a.model.out_dir);
    }
  }

  std::vector<RankingMetrics> per_fold;
  std::map<std::string, std::string> info;
  for (std::size_t k : folds) {
    const auto& fd = pick_fold(bundle, k);
    const auto ck = load_model(a.checkpoint, a.model.out_dir.empty() ? fs::path() : fold_dir(a.model, k) / "model.ckpt");
    const auto hp = model_from_map(ck.metadata);
    check_against_bundle(hp, ck, bundle);
    const auto sink = score_all(hp, ck.params, fd.split.train, &bundle.corpus, &fd.graph);
    per_fold.push_back(evaluate_ranking(sink, fd.split.test, ks));
    if (info.empty()) {
      std::map<std::string, std::string> cfg = ck.metadata;
      cfg.erase("train_log");
      info["config_fingerprint"] = fingerprint(render_kv(cfg));
      for (const auto& [key, v] : config_to_map(TrainConfig{hp})) info["model." + key] = v;
    }
    std::cerr << "fold " << k << ": recall@" << ks.front() << " " << per_fold.back().recall[0] << "\n";
  }
  auto report = aggregate_folds(per_fold);
  report.info = info;
  report.info["dataset_fingerprint"] = bundle.manifest.at("dataset_fingerprint");
  std::string fl;
  for (std::size_t k : folds) fl += (fl.empty() ? "" : ",") + std::to_string(k);
  report.info["folds"] = fl;
  add_run_info(report.info);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";

  const fs::path out = a.model.out_dir.empty() ? fs::path("report.json") : fs::path(a.model.out_dir) / "report.json";
  write_report(out, report);
  std::printf("%-6s %10s %10s\n", "k", "recall", "ndcg");
  for (std::size_t i = 0; i < ks.size(); ++i)
    std::printf("%-6zu %10.4f %10.4f\n", ks[i], report.mean.recall[i], report.mean.ndcg[i]);
  std::cout << "report -> " << out.string() << "\n";
  return kOk;
}

// ---- visualize-attention ----------------------------------------------------------

struct VizArgs {
  ModelArgs model;
  std::string checkpoint;
  std::string items;
};

int run_visualize(const VizArgs& a) {
  const auto bundle = load_bundle(a.model);
  const auto& fd = pick_fold(bundle, a.model.fold);
  const auto ck = load_model(a.checkpoint, a.model.out_dir.empty() ? fs::path() : fold_dir(a.model, a.model.fold) / "model.ckpt");
  const auto hp = model_from_map(ck.metadata);
  check_against_bundle(hp, ck, bundle);

  std::unordered_map<std::string, Id> by_name;
  for (Id i = 0; i < bundle.item_names.size(); ++i) by_name.emplace(bundle.item_names[i], i);
  const auto names = split_list(a.items);
  if (names.empty()) throw ConfigError("--items needs at least one item id");

  const ModelData data{&fd.split.train, &bundle.corpus, &fd.graph};
  std::vector<ItemRendering> rendered;
  for (const auto& n : names) {
    auto it = by_name.find(n);
    if (it == by_name.end()) throw DataError("unknown item id '" + n + "'");
    rendered.push_back(render_item(hp, ck.params, data, bundle.item_names, it->second));
    if (!rendered.back().message.empty()) std::cerr << "item " << n << ": " << rendered.back().message << "\n";
  }

  std::map<std::string, std::string> manifest;
  manifest["dataset_fingerprint"] = bundle.manifest.at("dataset_fingerprint");
  manifest["fold"] = std::to_string(a.model.fold);
  manifest["items"] = a.items;
  for (const auto& [k, v] : config_to_map(TrainConfig{hp})) manifest["model." + k] = v;
  add_run_info(manifest);

  const fs::path out = a.model.out_dir.empty() ? fs::path("attention.html") : fs::path(a.model.out_dir) / "attention.html";
  write_text(out, render_html(rendered, manifest));
  std::cout << render_terminal(rendered) << "html -> " << out.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GATE recommender: preprocess, train, evaluate, visualize-attention"};
  app.set_config("--config", "", "key=value config file; [section] per subcommand");
  app.require_subcommand(1);
  app.fallthrough();  // lets --config follow the subcommand name

  PreprocessArgs pre;
  auto* p = app.add_subcommand("preprocess", "Raw ratings + documents -> bundle with five splits");
  p->add_option("--data-dir", pre.data_dir, "Directory with ratings.tsv, documents.tsv[, relations.tsv]");
  p->add_option("--out-dir", pre.out_dir, "Bundle output directory");
  p->add_option("--ratings", pre.ratings, "user<TAB>item[<TAB>rating] file");
  p->add_option("--documents", pre.documents, "item<TAB>text file");
  p->add_option("--relations", pre.relations, "item<TAB>item relation file");
  p->add_option("--seed", pre.opts.seed, "Split seed");
  p->add_option("--folds", pre.opts.num_folds, "Number of splits");
  p->add_option("--test-frac", pre.opts.test_frac, "Held-out fraction per user");
  p->add_option("--rating-threshold", pre.opts.rating_threshold, "Ratings >= this count as positive");
  p->add_flag("--prebinarized", pre.opts.prebinarized, "Every listed pair is positive");
  p->add_option("--min-user-ratings", pre.opts.filter.min_user_ratings);
  p->add_option("--min-item-ratings", pre.opts.filter.min_item_ratings);
  p->add_option("--max-vocab", pre.opts.vocab.max_vocab);
  p->add_option("--min-df", pre.opts.vocab.min_df);
  p->add_option("--max-len", pre.opts.vocab.max_len);
  p->add_option("--similarity", pre.metric, "cosine | jaccard");
  p->add_option("--similarity-threshold", pre.opts.similarity.threshold);
  p->add_option("--max-neighbors", pre.opts.similarity.max_neighbors);
  p->add_flag("--no-symmetrize", pre.no_symmetrize, "Keep capped neighbor lists one-directional");

  ModelArgs tr;
  auto* t = app.add_subcommand("train", "Train on one fold");
  add_model_flags(t, tr);
  t->add_option("--epochs", tr.cfg.epochs);
  t->add_option("--batch-size", tr.cfg.batch_size);
  t->add_option("--eval-every", tr.cfg.eval_every, "Epochs between evaluations/checkpoints (0: end only)");
  t->add_option("--patience", tr.cfg.early_stop_patience, "Early-stop patience in evaluations (enables validation)");
  t->add_flag("--validation", tr.cfg.validation, "Hold out part of train for model selection");
  t->add_option("--validation-frac", tr.cfg.validation_frac);
  t->add_option("--resume", tr.resume, "Checkpoint to continue from");

  EvalArgs ev;
  auto* e = app.add_subcommand("evaluate", "Recall/NDCG over trained folds");
  add_run_flags(e, ev.model);
  e->add_option("--checkpoint", ev.checkpoint, "Explicit checkpoint (single fold)");
  e->add_option("--k-list", ev.k_list, "Comma-separated cutoffs");
  e->add_option("--folds", ev.folds, "Folds to evaluate (default: all trained)")->delimiter(',');

  VizArgs vz;
  auto* v = app.add_subcommand("visualize-attention", "Word and neighbor attention for items");
  add_run_flags(v, vz.model);
  v->add_option("--checkpoint", vz.checkpoint);
  v->add_option("--items", vz.items, "Comma-separated item ids")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*p) return run_preprocess(pre);
    if (*t) return run_train(tr);
    if (*e) return run_evaluate(ev);
    if (*v) return run_visualize(vz);
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kConfig;
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kData;
  } catch (const NumericError& err) {
    std::cerr << "numeric abort: " << err.what() << "\n";
    return kNumeric;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kOther;
  }
  return kOther;
}
