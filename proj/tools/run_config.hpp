#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "advamc/dataset.hpp"
#include "advamc/evaluation.hpp"
#include "advamc/models.hpp"
#include "advamc/training.hpp"

namespace advamc::cli {

using json = nlohmann::json;

struct DataSection {
  DatasetSpec spec;
  double train_frac = 0.70;
  double val_frac_of_train = 0.05;
  std::uint64_t split_seed = 0;
  std::string file = "dataset.amcd";
};

struct ModelSection {
  std::string architecture = "vt_cnn";
  double width_scale = 0.125;
  double dropout = 0.0;
  std::size_t n_stacks = 3;
  std::size_t filters = 32;
  std::uint64_t init_seed = 0;
};

/// Where evaluation signals come from: a split of the saved dataset, or a
/// separately generated set drawn from the same spec.
struct EvalSet {
  std::string split = "test";
  std::optional<std::size_t> signals_per_class;
  std::uint64_t seed = 0;
};

struct EvalSection {
  EvalConfig config;
  std::string checkpoint = "natural";
  std::string report = "eval";
  EvalSet set;
};

struct GridSection {
  std::map<std::string, std::string> checkpoints;  // empty = every training regime
  GridOptions options;
  EvalSet set;
};

struct ConstellationSection {
  std::string standard = "natural";
  std::string robust = "spr20";
  std::string target = "BPSK";
  double spr_db = 20.0;
  std::size_t n_signals = 200;
  std::size_t n_plots = 4;
  EvalSet set;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out = "out";
  std::size_t threads = 0;
  DataSection data;
  ModelSection model;
  std::vector<std::pair<std::string, TrainConfig>> regimes;
  EvalSection eval;
  GridSection grid;
  ConstellationSection constellation;
  json snapshot;  // effective configuration after presets and overrides

  std::filesystem::path dataset_path() const { return out / data.file; }
  /// A regime name maps to <out>/<name>.ckpt; anything else is a path.
  std::filesystem::path checkpoint_path(const std::string& ref) const;
  Model<float> build_model(std::size_t n_classes, std::size_t input_len) const;
};

/// Full configuration document of a named preset ("crml-tiny", "crml2018").
json preset(const std::string& name);

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::size_t> threads;
};

/// Recursive merge: objects merge key by key, every other value replaces.
json merge(json base, const json& patch);

/// Validates `doc` (unknown keys, types, ranges) and builds the run
/// configuration. Errors are ConfigError naming the offending key.
RunConfig parse_run_config(const json& doc, const Overrides& ov = {});

/// Preset (default crml-tiny) merged with the optional config file.
RunConfig load_run_config(const std::optional<std::filesystem::path>& file, const std::string& preset_name,
                          const Overrides& ov);

}  // namespace advamc::cli
