#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "advamc/attacks.hpp"
#include "advamc/dataset.hpp"
#include "advamc/dsp.hpp"
#include "advamc/models.hpp"

namespace advamc {

/// Known-channel prior for the maximum-likelihood classifier: NRZ symbols
/// drawn uniformly from one of the candidates, plus AWGN with per-component
/// variance noise_variance.
struct MlModelPrior {
  std::vector<Constellation> candidates;
  double noise_variance = 0.0;
  std::size_t samples_per_symbol = 1;

  /// Throws ConfigError for sigma^2 <= 0, sps == 0, no candidates or an
  /// empty candidate.
  void validate() const;
};

/// Prior matching generate(spec) for the listed schemes (unit power,
/// sigma^2 = 1 / (2 * 10^(snr/10))).
MlModelPrior ml_prior(std::span<const std::string> schemes, double snr_db, std::size_t samples_per_symbol);

struct MlDecision {
  std::size_t predicted = 0;
  std::vector<double> log_likelihoods;  // up to a class-independent constant
};

/// Throws ShapeError unless N is a multiple of the prior's sps.
MlDecision ml_classify(const IqSignal& signal, const MlModelPrior& prior);

/// Closest state, ties to the lowest index.
std::size_t nearest_state(const Constellation& c, cdouble point);

enum class BudgetMode { global_scale, per_symbol_clamp };

/// Shifts every symbol estimate toward its nearest target state, broadcast
/// over the symbol's samples. global_scale multiplies all shifts by
/// min(1, eps / max component); per_symbol_clamp clamps each component.
/// Throws ConfigError for an empty target.
Perturbation oracle_targeted_perturbation(const IqSignal& signal, const Constellation& target, double epsilon,
                                          BudgetMode mode = BudgetMode::global_scale);

/// Cosine similarity of the flattened I/Q samples. Throws ShapeError on
/// length mismatch, ZeroPerturbation if either is all zero.
double alignment(const IqSignal& a, const IqSignal& b);
double alignment(std::span<const float> a, std::span<const float> b);

/// Cosine similarity of the per-symbol mean shifts.
double symbol_shift_alignment(const IqSignal& a, const IqSignal& b);

/// Mean Euclidean distance from each point to its nearest state.
double mean_distance_to_states(std::span<const cdouble> points, const Constellation& c);

struct ConstellationPlot {
  std::vector<cdouble> original;
  std::vector<cdouble> perturbed;
  std::vector<cdouble> target_states;
  std::string title;
  std::string target_name;
};

/// Throws ShapeError when the two signals differ in length or sps.
ConstellationPlot constellation_plot(const IqSignal& signal, const IqSignal& perturbed, const Constellation& target,
                                     std::string title = "");

/// symbol_idx,orig_i,orig_q,pert_i,pert_q
std::string to_csv(const ConstellationPlot& plot);
/// Self-contained scatter, axes fixed to [-1.6, 1.6].
std::string to_svg(const ConstellationPlot& plot);

/// Builds the plot and writes <stem>.csv and <stem>.svg.
ConstellationPlot constellation_export(const IqSignal& signal, const IqSignal& perturbed, const Constellation& target,
                                       const std::filesystem::path& stem, std::string title = "");

struct AlignmentSample {
  std::size_t index = 0;
  std::size_t label = 0;
  double alignment_standard = 0.0;
  double alignment_robust = 0.0;
  double symbol_alignment_standard = 0.0;
  double symbol_alignment_robust = 0.0;
  /// Drop in mean distance to the target states caused by each perturbation.
  double shift_standard = 0.0;
  double shift_robust = 0.0;
  double shift_oracle = 0.0;
};

struct AlignmentReport {
  std::size_t target_class = 0;
  std::string target_name;
  double spr_db = 20.0;
  std::vector<AlignmentSample> samples;
  double mean_alignment_standard = 0.0;
  double mean_alignment_robust = 0.0;
  double mean_shift_standard = 0.0;
  double mean_shift_robust = 0.0;
  std::vector<std::string> class_names;

  json to_json() const;
  /// One row per sample.
  std::string to_csv() const;
};

/// Targeted FGSM toward `target_class` on both models at spr_db, compared
/// with the oracle perturbation of the same budget. Signals already of the
/// target class are skipped.
AlignmentReport alignment_study(const Model<float>& standard, const Model<float>& robust, const LabeledDataset& ds,
                                std::span<const std::size_t> idx, std::size_t target_class, double spr_db);

}  // namespace advamc
