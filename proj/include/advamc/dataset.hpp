#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "advamc/autodiff/tensor.hpp"
#include "advamc/dsp.hpp"

namespace advamc {

struct DatasetSpec {
  std::vector<std::string> schemes;
  std::size_t signals_per_class = 1;
  std::size_t samples_per_signal = 1024;
  std::size_t samples_per_symbol = 8;
  double snr_db = 20.0;
  std::uint64_t seed = 0;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

/// 8 schemes x 500 signals x 256 samples, sps 8, 20 dB.
DatasetSpec crml_tiny_spec(std::uint64_t seed = 1);
/// All 16 schemes x 10000 signals x 1024 samples, sps 8, 20 dB.
DatasetSpec crml2018_spec(std::uint64_t seed = 1);

/// Throws ConfigError if the spec is internally inconsistent and
/// UnsupportedScheme for unknown scheme names.
void validate(const DatasetSpec& spec);

enum class Split : std::uint8_t { none = 0, train = 1, val = 2, test = 3 };
const char* split_name(Split s);

struct LabeledDataset {
  std::vector<IqSignal> signals;
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;
  std::vector<Split> split_tags;
  DatasetSpec spec;

  std::size_t size() const noexcept { return signals.size(); }
  std::size_t n_classes() const noexcept { return class_names.size(); }
  /// Indices tagged `s`, ascending.
  std::vector<std::size_t> indices(Split s) const;
  /// Copy restricted to `idx`, preserving order, tags and spec.
  LabeledDataset subset(std::span<const std::size_t> idx) const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

/// Random symbols, NRZ modulation and AWGN at spec.snr_db for every class.
/// Signal j of class c draws from the stream keyed (seed, c, j), so the
/// result is independent of thread count. Tags start as Split::none.
LabeledDataset generate(const DatasetSpec& spec);

/// Stratified per-class split: round(train_frac * n_c) signals go to
/// training, round(val_frac_of_train * n_train) of those to validation,
/// the rest to test.
LabeledDataset split(LabeledDataset ds, double train_frac = 0.70, double val_frac_of_train = 0.05,
                     std::uint64_t seed = 0);

std::vector<std::uint8_t> serialize(const LabeledDataset& ds);
LabeledDataset deserialize(std::span<const std::uint8_t> bytes);
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset load_dataset(const std::filesystem::path& path);

/// Packs signals into a [B,2,N] float tensor (I plane then Q plane).
ad::TensorPtr<float> to_batch(std::span<const IqSignal> signals);
ad::TensorPtr<float> to_batch(const std::vector<IqSignal>& signals, std::span<const std::size_t> idx);

/// Row b of a [B,2,N] tensor as an IqSignal (metadata not carried).
IqSignal from_batch_row(const ad::Tensor<float>& batch, std::size_t b, std::size_t samples_per_symbol = 1);

/// Mean per-signal SNR in dB, measured against the noiseless waveform
/// rebuilt from the stored symbols.
double empirical_snr_db(const LabeledDataset& ds, std::size_t max_signals);

}  // namespace advamc
