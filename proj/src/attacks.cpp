#include "advamc/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "advamc/dataset.hpp"
#include "advamc/error.hpp"

namespace advamc {
namespace {

constexpr std::uint64_t kRandomStartTag = 0x72616e64;

const char* kind_name(AttackKind k) { return k == AttackKind::fgsm ? "fgsm" : "pga"; }
const char* mode_name(GradientMode m) { return m == GradientMode::sign ? "sign" : "raw"; }

float sign_of(float g) { return g > 0.0f ? 1.0f : (g < 0.0f ? -1.0f : 0.0f); }

void check_signal_shape(const Model<float>& model, const IqSignal& x) {
  if (x.size() != model.input_len() || x.q.size() != x.i.size()) {
    throw ShapeError("signal length " + std::to_string(x.size()) + " does not match model input " +
                     std::to_string(model.input_len()));
  }
}

IqSignal delta_signal(const float* row, std::size_t n, std::size_t sps) {
  IqSignal d;
  d.i.assign(row, row + n);
  d.q.assign(row + n, row + 2 * n);
  d.samples_per_symbol = sps;
  return d;
}

}  // namespace

AttackConfig AttackConfig::pga_eval(double spr_db) {
  AttackConfig c;
  c.spr_db = spr_db;
  c.iterations = 20;
  c.step_fraction = 0.125;
  return c;
}

AttackConfig AttackConfig::pga_train(double spr_db) {
  AttackConfig c;
  c.spr_db = spr_db;
  c.iterations = 7;
  c.step_fraction = 0.36;
  return c;
}

AttackConfig AttackConfig::fgsm_at(double spr_db) {
  AttackConfig c;
  c.kind = AttackKind::fgsm;
  c.spr_db = spr_db;
  c.iterations = 1;
  c.step_fraction = 1.0;
  return c;
}

void AttackConfig::validate() const {
  if (iterations < 1) throw ConfigError("attack iterations must be >= 1");
  if (!(step_fraction > 0.0) || !std::isfinite(step_fraction)) throw ConfigError("attack step_fraction must be > 0");
  if (!std::isfinite(spr_db)) throw ConfigError("attack spr_db must be finite");
}

std::string AttackConfig::label() const {
  std::string s = kind == AttackKind::fgsm ? "FGSM" : "PGA-" + std::to_string(iterations);
  char buf[32];
  std::snprintf(buf, sizeof buf, "@%gdB", spr_db);
  s += buf;
  if (target) s += "->" + std::to_string(*target);
  return s;
}

json to_json(const AttackConfig& c) {
  json j{{"kind", kind_name(c.kind)},           {"spr_db", c.spr_db},
         {"iterations", c.iterations},          {"step_fraction", c.step_fraction},
         {"random_start", c.random_start},      {"gradient_mode", mode_name(c.gradient_mode)},
         {"seed", c.seed}};
  j["target"] = c.target ? json(*c.target) : json(nullptr);
  return j;
}

AttackConfig attack_config_from_json(const json& j) {
  AttackConfig c;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "fgsm") {
    c = AttackConfig::fgsm_at(j.at("spr_db").get<double>());
  } else if (kind == "pga") {
    c.spr_db = j.at("spr_db").get<double>();
  } else {
    throw ConfigError("unknown attack kind '" + kind + "'");
  }
  c.iterations = j.value("iterations", c.iterations);
  c.step_fraction = j.value("step_fraction", c.step_fraction);
  c.random_start = j.value("random_start", false);
  c.seed = j.value("seed", std::uint64_t{0});
  const auto mode = j.value("gradient_mode", std::string("sign"));
  if (mode == "sign") {
    c.gradient_mode = GradientMode::sign;
  } else if (mode == "raw") {
    c.gradient_mode = GradientMode::raw;
  } else {
    throw ConfigError("unknown gradient_mode '" + mode + "'");
  }
  if (j.contains("target") && !j.at("target").is_null()) c.target = j.at("target").get<std::size_t>();
  c.validate();
  return c;
}

float epsilon_as_float(double eps) {
  float f = static_cast<float>(eps);
  if (static_cast<double>(f) > eps) f = std::nextafter(f, -std::numeric_limits<float>::infinity());
  return f;
}

std::vector<float> signed_step(std::span<const float> grad, double eps) {
  const float e = epsilon_as_float(eps);
  std::vector<float> out(grad.size());
  for (std::size_t k = 0; k < grad.size(); ++k) out[k] = e * sign_of(grad[k]);
  return out;
}

void project_linf(std::span<float> delta, double eps) {
  const float e = epsilon_as_float(eps);
  for (auto& v : delta) v = std::clamp(v, -e, e);
}

namespace {

Perturbation one_step(const Model<float>& model, const IqSignal& x, std::size_t label, double epsilon, bool toward) {
  check_signal_shape(model, x);
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
  const auto batch = to_batch(std::span(&x, 1));
  const std::size_t labels[1] = {label};
  const auto ig = input_gradient(model, *batch, labels);
  auto step = signed_step(ig.grad.data, epsilon);
  if (toward)
    for (auto& v : step) v = -v;
  const std::size_t n = x.size();
  Perturbation p;
  p.delta = delta_signal(step.data(), n, x.samples_per_symbol);
  p.epsilon = epsilon;
  auto adv = ad::make_tensor<float>(batch->shape, batch->data);
  for (std::size_t k = 0; k < adv->size(); ++k) adv->data[k] += step[k];
  p.achieved_loss = ad::cross_entropy_per_sample(*predict(model, adv), labels)[0];
  return p;
}

}  // namespace

Perturbation fgsm(const Model<float>& model, const IqSignal& x, std::size_t label, double epsilon) {
  return one_step(model, x, label, epsilon, false);
}

Perturbation targeted_fgsm(const Model<float>& model, const IqSignal& x, std::size_t target, double epsilon) {
  if (target >= model.n_classes()) throw LabelError("target class " + std::to_string(target) + " out of range");
  return one_step(model, x, target, epsilon, true);
}

BatchPerturbation perturb_batch(const Model<float>& model, const ad::Tensor<float>& x,
                                std::span<const std::size_t> labels, std::span<const double> epsilons,
                                const PgaOptions& opt, std::uint64_t seed, std::size_t first_index) {
  if (x.shape.size() != 3 || x.shape[1] != 2) throw ShapeError("attack input must be [B,2,N]");
  const std::size_t B = x.shape[0];
  const std::size_t row = 2 * x.shape[2];
  if (labels.size() != B || epsilons.size() != B) throw ShapeError("labels/epsilons must match the batch size");
  if (opt.iterations < 1) throw ConfigError("attack iterations must be >= 1");
  BatchPerturbation out{ad::Tensor<float>(x.shape), std::vector<float>(B, 0.0f)};
  if (B == 0) return out;

  std::vector<float> bound(B), step(B);
  for (std::size_t b = 0; b < B; ++b) {
    if (!(epsilons[b] >= 0.0)) throw ConfigError("epsilon must be >= 0");
    bound[b] = epsilon_as_float(epsilons[b]);
    step[b] = static_cast<float>(opt.step_fraction * epsilons[b]);
  }
  auto& delta = out.delta.data;
  if (opt.random_start) {
    for (std::size_t b = 0; b < B; ++b) {
      Rng rng(seed, {kRandomStartTag, first_index + b});
      for (std::size_t j = 0; j < row; ++j) {
        delta[b * row + j] = std::clamp(static_cast<float>(rng.uniform(-bound[b], bound[b])), -bound[b], bound[b]);
      }
    }
  }
  // Ascend the label loss, or descend the target loss.
  const float direction = opt.targeted ? -1.0f : 1.0f;
  std::vector<float> best_delta(delta.size());
  std::vector<float> best_objective(B, -std::numeric_limits<float>::infinity());
  const auto consider = [&](const std::vector<float>& losses) {
    for (std::size_t b = 0; b < B; ++b) {
      const float objective = direction * losses[b];
      if (objective > best_objective[b]) {
        best_objective[b] = objective;
        out.losses[b] = losses[b];
        std::copy_n(delta.begin() + static_cast<std::ptrdiff_t>(b * row), row,
                    best_delta.begin() + static_cast<std::ptrdiff_t>(b * row));
      }
    }
  };

  auto shifted = std::make_shared<ad::Tensor<float>>(x.shape);
  const auto load_shifted = [&] {
    for (std::size_t k = 0; k < x.size(); ++k) shifted->data[k] = x.data[k] + delta[k];
  };
  for (std::size_t it = 0; it < opt.iterations; ++it) {
    load_shifted();
    const auto ig = input_gradient(model, *shifted, labels);
    if (it > 0) consider(ig.losses);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t j = 0; j < row; ++j) {
        const std::size_t k = b * row + j;
        const float g = ig.grad.data[k];
        const float dir = opt.gradient_mode == GradientMode::sign ? sign_of(g) : g;
        delta[k] = std::clamp(delta[k] + direction * (step[b] * dir), -bound[b], bound[b]);
      }
    }
  }
  load_shifted();
  consider(ad::cross_entropy_per_sample(*predict(model, shifted), labels));
  delta = std::move(best_delta);
  return out;
}

Perturbation pga(const Model<float>& model, const IqSignal& x, std::size_t label, double epsilon,
                 const PgaOptions& options, Rng& rng) {
  check_signal_shape(model, x);
  const auto batch = to_batch(std::span(&x, 1));
  const std::size_t labels[1] = {label};
  const double eps[1] = {epsilon};
  auto res = perturb_batch(model, *batch, labels, eps, options, rng.next_u64(), 0);
  Perturbation p;
  p.delta = delta_signal(res.delta.data.data(), x.size(), x.samples_per_symbol);
  p.epsilon = epsilon;
  p.achieved_loss = res.losses[0];
  return p;
}

PgaOptions pga_options(const AttackConfig& cfg) {
  cfg.validate();
  PgaOptions o;
  if (cfg.kind == AttackKind::fgsm) {
    o.iterations = 1;
    o.step_fraction = 1.0;
    o.random_start = false;
    o.gradient_mode = GradientMode::sign;
  } else {
    o.iterations = cfg.iterations;
    o.step_fraction = cfg.step_fraction;
    o.random_start = cfg.random_start;
    o.gradient_mode = cfg.gradient_mode;
  }
  o.targeted = cfg.target.has_value();
  return o;
}

AttackBatchResult attack_batch(const Model<float>& model, std::span<const IqSignal> signals,
                               std::span<const std::size_t> labels, const AttackConfig& cfg, std::size_t chunk_size) {
  if (labels.size() != signals.size()) throw ShapeError("labels must match the number of signals");
  if (cfg.target && *cfg.target >= model.n_classes()) throw LabelError("attack target out of range");
  const PgaOptions opt = pga_options(cfg);
  AttackBatchResult out;
  out.adversarial.reserve(signals.size());
  out.perturbations.reserve(signals.size());
  chunk_size = std::max<std::size_t>(chunk_size, 1);
  for (std::size_t start = 0; start < signals.size(); start += chunk_size) {
    const std::size_t end = std::min(signals.size(), start + chunk_size);
    const auto chunk = signals.subspan(start, end - start);
    for (const auto& s : chunk) check_signal_shape(model, s);
    const auto x = to_batch(chunk);
    std::vector<std::size_t> ys(chunk.size());
    std::vector<double> eps(chunk.size());
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      ys[b] = cfg.target ? *cfg.target : labels[start + b];
      eps[b] = spr_to_epsilon(chunk[b], cfg.spr_db);
    }
    const auto res = perturb_batch(model, *x, ys, eps, opt, cfg.seed, start);
    const std::size_t n = model.input_len();
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      const float* row = res.delta.data.data() + b * 2 * n;
      Perturbation p;
      p.delta = delta_signal(row, n, chunk[b].samples_per_symbol);
      p.epsilon = eps[b];
      p.achieved_loss = res.losses[b];
      IqSignal adv = chunk[b];
      for (std::size_t t = 0; t < n; ++t) {
        adv.i[t] += p.delta.i[t];
        adv.q[t] += p.delta.q[t];
      }
      out.adversarial.push_back(std::move(adv));
      out.perturbations.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace advamc
