#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "advamc/attacks.hpp"
#include "advamc/dataset.hpp"
#include "advamc/models.hpp"

namespace advamc {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::optional<AttackConfig> attack;  // present => adversarial training
  std::size_t early_stop_patience = 5;  // 0 disables early stopping

  /// Throws ConfigError when epochs or batch_size is 0 or lr <= 0.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const json& j);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_clean_accuracy = 0.0;
  std::optional<double> val_robust_accuracy;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_score = 0.0;
  bool stopped_early = false;

  /// epoch,train_loss,val_clean_accuracy,val_robust_accuracy
  std::string to_csv() const;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

struct TrainResult {
  Checkpoint checkpoint;
  TrainHistory history;
};

/// Partition of the training split into batches for one epoch. The order is
/// a shuffle keyed by (seed, epoch); the last batch may be short.
std::vector<std::vector<std::size_t>> shuffle_batches(const LabeledDataset& ds, std::size_t batch_size,
                                                      std::size_t epoch, std::uint64_t seed);

/// Adam on the mean cross-entropy of clean batches. Returns the epoch with
/// the best validation accuracy. Throws DataError on an empty train or
/// validation split.
TrainResult train_standard(const Model<float>& init, const LabeledDataset& ds, const TrainConfig& cfg,
                   const EpochCallback& on_epoch = {});

/// Every batch is replaced by its adversarial version, crafted against the
/// current parameters in eval mode, before the optimizer step. Selection is
/// by validation accuracy under the training attack. Throws ConfigError
/// without cfg.attack.
TrainResult train_adversarial(const Model<float>& init, const LabeledDataset& ds, const TrainConfig& cfg,
                   const EpochCallback& on_epoch = {});

/// Dispatches on cfg.attack.
TrainResult train(const Model<float>& init, const LabeledDataset& ds, const TrainConfig& cfg,
                   const EpochCallback& on_epoch = {});

/// Fraction of `idx` classified correctly, optionally under `attack`.
double accuracy_on(const Model<float>& model, const LabeledDataset& ds, std::span<const std::size_t> idx,
                   const std::optional<AttackConfig>& attack = std::nullopt, std::size_t chunk = 256);

}  // namespace advamc
