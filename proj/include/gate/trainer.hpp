#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gate/checkpoint.hpp"
#include "gate/model.hpp"
#include "gate/neighbors.hpp"
#include "gate/params.hpp"
#include "gate/split.hpp"
#include "gate/text.hpp"

namespace gate {

struct TrainConfig {
  ModelHyper model;
  AdamConfig adam;
  std::size_t epochs = 50;
  std::size_t batch_size = 1024;
  std::uint64_t seed = 1;
  std::size_t eval_every = 0;           // 0: evaluate only after the last epoch
  std::size_t early_stop_patience = 0;  // evaluations without improvement; 0 disables
  bool validation = false;              // forced on when early_stop_patience > 0
  double validation_frac = 0.1;
  std::size_t validation_k = 10;
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
};

// Rejects rho <= 1, zero widths, zero batch size or epochs, and bad Adam settings.
// Data sizes (m, n, v) must already be filled in.
TrainConfig validate_config(TrainConfig cfg);

// Flat key/value view used by checkpoint metadata and run manifests.
std::map<std::string, std::string> config_to_map(const TrainConfig& cfg);
// Applies the known keys of `kv` on top of `base`. Unknown keys throw ConfigError.
TrainConfig config_from_map(const std::map<std::string, std::string>& kv, TrainConfig base = {});
// Model settings only (the keys a checkpoint needs to be rebuilt).
ModelHyper model_from_map(const std::map<std::string, std::string>& kv);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double wall_seconds = 0.0;
  std::optional<double> val_recall;
  std::optional<double> val_ndcg;
};

struct TrainLog {
  std::vector<EpochRecord> records;
  std::size_t best_epoch = 0;
  std::size_t isolated_items = 0;  // items trained with an empty neighbor set

  // One JSON object per line. Wall time is omitted when `timing` is false, which is
  // what determinism comparisons use.
  std::string to_jsonl(bool timing = true) const;
  std::string summary_json(bool timing = true) const;
};

struct TrainResult {
  ParameterSet params;
  TrainLog log;
};

struct TrainHooks {
  // Continue from a checkpoint written by `train`; its metadata carries the last epoch.
  const Checkpoint* resume = nullptr;
  // Per-epoch record sink (the CLI streams these to a file).
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(std::size_t epoch, std::span<const Id> batch)> on_batch;
};

// Items are shuffled per epoch with a seed derived from (cfg.seed, epoch) and processed in
// batches; each batch pulls in its neighbor closure for the forward pass.
TrainResult train(const DataSplit& split, const ItemCorpus& corpus, const NeighborGraph& graph,
                  TrainConfig cfg, const TrainHooks& hooks = {});

}  // namespace gate
