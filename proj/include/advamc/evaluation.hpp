#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advamc/attacks.hpp"
#include "advamc/dataset.hpp"
#include "advamc/models.hpp"

namespace advamc {

enum class Framework { robustness, security };
const char* framework_name(Framework f);
Framework framework_from_name(const std::string& s);

struct EvalConfig {
  Framework framework = Framework::robustness;
  std::optional<AttackConfig> attack;  // nullopt = Natural
  double channel_snr_db = 20.0;        // security only
  std::optional<double> snr_filter_db;
  std::uint64_t channel_seed = 0;

  /// Throws ConfigError for a non-finite security channel SNR.
  void validate() const;
};

json to_json(const EvalConfig& cfg);
EvalConfig eval_config_from_json(const json& j);

/// Rows are true classes, columns predictions.
struct ConfusionMatrix {
  std::size_t n_classes = 0;
  std::vector<std::size_t> counts;  // row-major n x n
  std::vector<double> normalized;   // rows sum to 1; empty rows stay 0
  std::size_t total = 0;
  bool empty = true;  // no signal survived the filter

  std::size_t count(std::size_t truth, std::size_t pred) const { return counts[truth * n_classes + pred]; }
  double rate(std::size_t truth, std::size_t pred) const { return normalized[truth * n_classes + pred]; }
  /// Row-normalized matrix with a header row of class names.
  std::string to_csv(std::span<const std::string> class_names) const;
};

/// Signals whose tag is below `snr_filter_db` are skipped; untagged signals
/// always count. Throws LabelError for labels or predictions >= n_classes
/// and ShapeError on length mismatch.
ConfusionMatrix confusion_matrix(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                                 std::size_t n_classes, std::span<const std::optional<double>> snr_tags = {},
                                 std::optional<double> snr_filter_db = std::nullopt);

/// Fraction of clean-correct signals that are misclassified under attack
/// (0 when no signal is clean-correct). Throws ShapeError on length mismatch.
double fooling_rate(std::span<const std::size_t> clean_preds, std::span<const std::size_t> adv_preds,
                    std::span<const std::size_t> labels);

struct EvalReport {
  Framework framework = Framework::robustness;
  std::size_t n_signals = 0;
  double clean_accuracy = 0.0;
  double adv_accuracy = 0.0;
  double fooling_rate = 0.0;       // flip rate among clean-correct
  double error_rate = 0.0;         // 1 - adv_accuracy
  ConfusionMatrix confusion;       // of the adversarial predictions
  std::vector<std::size_t> clean_predictions;
  std::vector<std::size_t> adv_predictions;
  json metadata = json::object();
};

/// Summary without the per-signal prediction vectors.
json to_json(const EvalReport& r, std::span<const std::string> class_names = {});

/// x + delta straight into the model. Without an attack the adversarial
/// figures equal the clean ones.
EvalReport eval_robustness(const Model<float>& model, const LabeledDataset& ds, std::span<const std::size_t> idx,
                           const std::optional<AttackConfig>& attack,
                           std::optional<double> snr_filter_db = std::nullopt);

/// x + delta, then AWGN at channel_snr_db referenced to the clean signal's
/// power. Noise for signal k is drawn from the stream keyed
/// (channel_seed, k), independent of the attack stream.
EvalReport eval_security(const Model<float>& model, const LabeledDataset& ds, std::span<const std::size_t> idx,
                         const std::optional<AttackConfig>& attack, double channel_snr_db,
                         std::uint64_t channel_seed = 0, std::optional<double> snr_filter_db = std::nullopt);

EvalReport evaluate(const Model<float>& model, const LabeledDataset& ds, std::span<const std::size_t> idx,
                    const EvalConfig& cfg);

/// Accuracy table: one row per training regime, one column per test SPR
/// (nullopt = Natural), one table per framework.
struct SprGrid {
  std::vector<std::string> regimes;
  std::vector<std::optional<double>> test_sprs;
  std::vector<Framework> frameworks;
  std::vector<double> accuracy;  // [framework][regime][spr]

  double at(std::size_t f, std::size_t r, std::size_t s) const {
    return accuracy[(f * regimes.size() + r) * test_sprs.size() + s];
  }
  /// framework,train_regime,Natural,25dB,...
  std::string to_csv() const;
  json to_json() const;
};

/// Natural, 25, 20, 15 dB.
std::vector<std::optional<double>> default_test_sprs();

struct GridOptions {
  std::vector<std::optional<double>> test_sprs = default_test_sprs();
  std::vector<Framework> frameworks{Framework::robustness, Framework::security};
  std::size_t iterations = 20;
  double step_fraction = 0.125;
  double channel_snr_db = 20.0;
  std::uint64_t seed = 0;
};

SprGrid spr_grid(const std::vector<std::pair<std::string, const Model<float>*>>& models, const LabeledDataset& ds,
                 std::span<const std::size_t> idx, const GridOptions& opt);

/// Loads each named checkpoint first; a missing file throws ConfigError
/// naming its regime key.
SprGrid spr_grid(const std::map<std::string, std::filesystem::path>& checkpoints, const LabeledDataset& ds,
                 std::span<const std::size_t> idx, const GridOptions& opt);

}  // namespace advamc
