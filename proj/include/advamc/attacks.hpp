#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advamc/dsp.hpp"
#include "advamc/models.hpp"

namespace advamc {

enum class AttackKind { fgsm, pga };
enum class GradientMode { sign, raw };

struct AttackConfig {
  AttackKind kind = AttackKind::pga;
  double spr_db = 20.0;
  std::size_t iterations = 20;   // K
  double step_fraction = 0.125;  // beta, relative to epsilon
  bool random_start = false;
  std::optional<std::size_t> target;
  GradientMode gradient_mode = GradientMode::sign;
  std::uint64_t seed = 0;  // random-start stream

  /// PGA-20, beta 0.125: the evaluation attack.
  static AttackConfig pga_eval(double spr_db);
  /// PGA-7, beta 0.36: the inner maximization used for adversarial training.
  static AttackConfig pga_train(double spr_db);
  static AttackConfig fgsm_at(double spr_db);

  /// Throws ConfigError when K < 1, beta <= 0 or the SPR is not finite.
  void validate() const;
  std::string label() const;

  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

json to_json(const AttackConfig& cfg);
AttackConfig attack_config_from_json(const json& j);

/// Additive perturbation of one signal; `delta` has the signal's shape.
struct Perturbation {
  IqSignal delta;
  double epsilon = 0.0;
  double achieved_loss = 0.0;
};

/// Largest float not above `eps`.
float epsilon_as_float(double eps);

/// Component-wise eps * sign(g), with sign(0) = 0.
std::vector<float> signed_step(std::span<const float> grad, double eps);

/// Per-component clamp to [-eps, eps].
void project_linf(std::span<float> delta, double eps);

/// Untargeted FGSM: delta = eps * sign(grad_x L(y)).
Perturbation fgsm(const Model<float>& model, const IqSignal& x, std::size_t label, double epsilon);

/// Targeted FGSM: delta = -eps * sign(grad_x L(target)).
Perturbation targeted_fgsm(const Model<float>& model, const IqSignal& x, std::size_t target, double epsilon);

struct PgaOptions {
  std::size_t iterations = 20;
  double step_fraction = 0.125;
  bool random_start = false;
  GradientMode gradient_mode = GradientMode::sign;
  bool targeted = false;  // if set, `label` is the target and its loss is descended
};

/// Projected gradient ascent on the l-infinity ball. Returns the iterate
/// (among delta^1..delta^K) with the best loss encountered.
Perturbation pga(const Model<float>& model, const IqSignal& x, std::size_t label, double epsilon,
                 const PgaOptions& options, Rng& rng);

/// Batched attack core on a [B,2,N] tensor with per-sample budgets.
/// `labels` are true labels (untargeted) or targets (targeted). Random
/// starts for row b draw from the stream keyed (seed, first_index + b).
struct BatchPerturbation {
  ad::Tensor<float> delta;
  std::vector<float> losses;
};

BatchPerturbation perturb_batch(const Model<float>& model, const ad::Tensor<float>& x,
                                std::span<const std::size_t> labels, std::span<const double> epsilons,
                                const PgaOptions& options, std::uint64_t seed, std::size_t first_index = 0);

/// PgaOptions equivalent of a config (FGSM == one full-budget sign step).
PgaOptions pga_options(const AttackConfig& cfg);

struct AttackBatchResult {
  std::vector<IqSignal> adversarial;
  std::vector<Perturbation> perturbations;
};

/// Attacks every signal with its own budget eps_i = spr_to_epsilon(x_i, spr).
/// Untargeted attacks use `labels`; cfg.target overrides them.
AttackBatchResult attack_batch(const Model<float>& model, std::span<const IqSignal> signals,
                               std::span<const std::size_t> labels, const AttackConfig& cfg,
                               std::size_t chunk_size = 256);

}  // namespace advamc
