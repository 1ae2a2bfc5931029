#include "advamc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "advamc/error.hpp"
#include "advamc/parallel.hpp"

namespace advamc {
namespace {

constexpr std::uint64_t kChannelTag = 0x434e;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string spr_column(const std::optional<double>& s) {
  if (!s) return "Natural";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%gdB", *s);
  return buf;
}

struct Predictions {
  std::vector<std::size_t> clean, adv, adv_channel;
  std::vector<std::size_t> labels;
  std::vector<std::optional<double>> tags;
};

Predictions run(const Model<float>& model, const LabeledDataset& ds, std::span<const std::size_t> idx,
                const std::optional<AttackConfig>& attack, std::optional<double> channel_snr, std::uint64_t channel_seed,
                std::size_t chunk = 256) {
  if (idx.empty()) throw DataError("evaluation over an empty index set");
  Predictions p;
  p.labels.reserve(idx.size());
  for (auto k : idx) {
    if (k >= ds.size()) throw DataError("evaluation index out of range");
    p.labels.push_back(ds.labels[k]);
    p.tags.push_back(ds.signals[k].snr_db);
  }
  for (std::size_t s = 0; s < idx.size(); s += chunk) {
    const auto part = idx.subspan(s, std::min(chunk, idx.size() - s));
    const auto clean = classify(model, to_batch(ds.signals, part));
    p.clean.insert(p.clean.end(), clean.begin(), clean.end());
    if (!attack && !channel_snr) continue;

    std::vector<IqSignal> received;
    received.reserve(part.size());
    for (auto k : part) received.push_back(ds.signals[k]);
    if (attack) {
      std::vector<std::size_t> y(part.size());
      for (std::size_t b = 0; b < part.size(); ++b) y[b] = ds.labels[part[b]];
      auto res = attack_batch(model, received, y, *attack, part.size());
      received = std::move(res.adversarial);
      const auto adv = classify(model, to_batch(received));
      p.adv.insert(p.adv.end(), adv.begin(), adv.end());
    }
    if (channel_snr) {
      parallel_for(part.size(), [&](std::size_t b) {
        Rng rng(channel_seed, {kChannelTag, part[b]});
        received[b] = apply_awgn_referenced(received[b], *channel_snr, average_power(ds.signals[part[b]]), rng);
      });
      const auto noisy = classify(model, to_batch(received));
      p.adv_channel.insert(p.adv_channel.end(), noisy.begin(), noisy.end());
    }
  }
  if (p.adv.empty()) p.adv = p.clean;
  return p;
}

/// Security predictions take the place of the robustness ones.
Predictions through_channel(Predictions p) {
  p.adv = std::move(p.adv_channel);
  return p;
}

EvalReport report(Framework f, const Predictions& p, std::size_t n_classes, std::optional<double> filter) {
  EvalReport r;
  r.framework = f;
  r.n_signals = p.labels.size();
  std::size_t c = 0, a = 0;
  for (std::size_t k = 0; k < p.labels.size(); ++k) {
    c += p.clean[k] == p.labels[k];
    a += p.adv[k] == p.labels[k];
  }
  r.clean_accuracy = static_cast<double>(c) / static_cast<double>(r.n_signals);
  r.adv_accuracy = static_cast<double>(a) / static_cast<double>(r.n_signals);
  r.error_rate = 1.0 - r.adv_accuracy;
  r.fooling_rate = fooling_rate(p.clean, p.adv, p.labels);
  r.confusion = confusion_matrix(p.adv, p.labels, n_classes, p.tags, filter);
  r.clean_predictions = p.clean;
  r.adv_predictions = p.adv;
  return r;
}

}  // namespace

const char* framework_name(Framework f) { return f == Framework::robustness ? "robustness" : "security"; }

Framework framework_from_name(const std::string& s) {
  if (s == "robustness") return Framework::robustness;
  if (s == "security") return Framework::security;
  throw ConfigError("unknown framework '" + s + "'");
}

void EvalConfig::validate() const {
  if (framework == Framework::security && !std::isfinite(channel_snr_db)) {
    throw ConfigError("security framework needs a finite channel_snr_db");
  }
  if (attack) attack->validate();
}

json to_json(const EvalConfig& c) {
  json j{{"framework", framework_name(c.framework)},
         {"channel_snr_db", c.channel_snr_db},
         {"channel_seed", c.channel_seed}};
  j["attack"] = c.attack ? to_json(*c.attack) : json(nullptr);
  j["snr_filter_db"] = c.snr_filter_db ? json(*c.snr_filter_db) : json(nullptr);
  return j;
}

EvalConfig eval_config_from_json(const json& j) {
  EvalConfig c;
  c.framework = framework_from_name(j.value("framework", std::string("robustness")));
  c.channel_snr_db = j.value("channel_snr_db", c.channel_snr_db);
  c.channel_seed = j.value("channel_seed", c.channel_seed);
  if (j.contains("attack") && !j.at("attack").is_null()) c.attack = attack_config_from_json(j.at("attack"));
  if (j.contains("snr_filter_db") && !j.at("snr_filter_db").is_null()) c.snr_filter_db = j.at("snr_filter_db").get<double>();
  c.validate();
  return c;
}

std::string ConfusionMatrix::to_csv(std::span<const std::string> names) const {
  std::ostringstream os;
  os << "true\\pred";
  for (std::size_t j = 0; j < n_classes; ++j) os << ',' << (j < names.size() ? names[j] : std::to_string(j));
  os << '\n';
  for (std::size_t i = 0; i < n_classes; ++i) {
    os << (i < names.size() ? names[i] : std::to_string(i));
    for (std::size_t j = 0; j < n_classes; ++j) os << ',' << fmt(rate(i, j));
    os << '\n';
  }
  return os.str();
}

ConfusionMatrix confusion_matrix(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                                 std::size_t n_classes, std::span<const std::optional<double>> snr_tags,
                                 std::optional<double> snr_filter_db) {
  if (preds.size() != labels.size()) throw ShapeError("predictions and labels differ in length");
  if (!snr_tags.empty() && snr_tags.size() != labels.size()) throw ShapeError("SNR tags and labels differ in length");
  ConfusionMatrix m;
  m.n_classes = n_classes;
  m.counts.assign(n_classes * n_classes, 0);
  m.normalized.assign(n_classes * n_classes, 0.0);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] >= n_classes || preds[k] >= n_classes) throw LabelError("class index out of range in confusion matrix");
    if (snr_filter_db && !snr_tags.empty() && snr_tags[k] && *snr_tags[k] < *snr_filter_db) continue;
    ++m.counts[labels[k] * n_classes + preds[k]];
    ++m.total;
  }
  m.empty = m.total == 0;
  for (std::size_t i = 0; i < n_classes; ++i) {
    std::size_t row = 0;
    for (std::size_t j = 0; j < n_classes; ++j) row += m.count(i, j);
    if (row == 0) continue;
    for (std::size_t j = 0; j < n_classes; ++j)
      m.normalized[i * n_classes + j] = static_cast<double>(m.count(i, j)) / static_cast<double>(row);
  }
  return m;
}

double fooling_rate(std::span<const std::size_t> clean_preds, std::span<const std::size_t> adv_preds,
                    std::span<const std::size_t> labels) {
  if (clean_preds.size() != labels.size() || adv_preds.size() != labels.size()) {
    throw ShapeError("fooling_rate inputs differ in length");
  }
  std::size_t correct = 0, flipped = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (clean_preds[k] != labels[k]) continue;
    ++correct;
    flipped += adv_preds[k] != labels[k];
  }
  return correct == 0 ? 0.0 : static_cast<double>(flipped) / static_cast<double>(correct);
}

json to_json(const EvalReport& r, std::span<const std::string> names) {
  json cm = json::array();
  for (std::size_t i = 0; i < r.confusion.n_classes; ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < r.confusion.n_classes; ++j) row.push_back(r.confusion.count(i, j));
    cm.push_back(row);
  }
  json j{{"framework", framework_name(r.framework)},
         {"n_signals", r.n_signals},
         {"clean_accuracy", r.clean_accuracy},
         {"adv_accuracy", r.adv_accuracy},
         {"fooling_rate", r.fooling_rate},
         {"error_rate", r.error_rate},
         {"confusion_counts", cm},
         {"confusion_total", r.confusion.total},
         {"confusion_empty", r.confusion.empty},
         {"metadata", r.metadata}};
  if (!names.empty()) j["class_names"] = std::vector<std::string>(names.begin(), names.end());
  return j;
}

EvalReport eval_robustness(const Model<float>& model, const LabeledDataset& ds, std::span<const std::size_t> idx,
                           const std::optional<AttackConfig>& attack, std::optional<double> snr_filter_db) {
  auto r = report(Framework::robustness, run(model, ds, idx, attack, std::nullopt, 0), model.n_classes(), snr_filter_db);
  r.metadata["attack"] = attack ? to_json(*attack) : json(nullptr);
  return r;
}

EvalReport eval_security(const Model<float>& model, const LabeledDataset& ds, std::span<const std::size_t> idx,
                         const std::optional<AttackConfig>& attack, double channel_snr_db, std::uint64_t channel_seed,
                         std::optional<double> snr_filter_db) {
  if (!std::isfinite(channel_snr_db)) throw ConfigError("security framework needs a finite channel_snr_db");
  auto r = report(Framework::security, through_channel(run(model, ds, idx, attack, channel_snr_db, channel_seed)),
                  model.n_classes(),
                  snr_filter_db);
  r.metadata["attack"] = attack ? to_json(*attack) : json(nullptr);
  r.metadata["channel_snr_db"] = channel_snr_db;
  r.metadata["channel_seed"] = channel_seed;
  return r;
}

EvalReport evaluate(const Model<float>& model, const LabeledDataset& ds, std::span<const std::size_t> idx,
                    const EvalConfig& cfg) {
  cfg.validate();
  return cfg.framework == Framework::robustness
             ? eval_robustness(model, ds, idx, cfg.attack, cfg.snr_filter_db)
             : eval_security(model, ds, idx, cfg.attack, cfg.channel_snr_db, cfg.channel_seed, cfg.snr_filter_db);
}

std::vector<std::optional<double>> default_test_sprs() { return {std::nullopt, 25.0, 20.0, 15.0}; }

std::string SprGrid::to_csv() const {
  std::ostringstream os;
  os << "framework,train_regime";
  for (const auto& s : test_sprs) os << ',' << spr_column(s);
  os << '\n';
  for (std::size_t f = 0; f < frameworks.size(); ++f) {
    for (std::size_t r = 0; r < regimes.size(); ++r) {
      os << framework_name(frameworks[f]) << ',' << regimes[r];
      for (std::size_t s = 0; s < test_sprs.size(); ++s) os << ',' << fmt(at(f, r, s));
      os << '\n';
    }
  }
  return os.str();
}

json SprGrid::to_json() const {
  json j = json::object();
  std::vector<std::string> cols;
  for (const auto& s : test_sprs) cols.push_back(spr_column(s));
  j["columns"] = cols;
  j["regimes"] = regimes;
  for (std::size_t f = 0; f < frameworks.size(); ++f) {
    json table = json::object();
    for (std::size_t r = 0; r < regimes.size(); ++r) {
      std::vector<double> row;
      for (std::size_t s = 0; s < test_sprs.size(); ++s) row.push_back(at(f, r, s));
      table[regimes[r]] = row;
    }
    j[framework_name(frameworks[f])] = table;
  }
  return j;
}

SprGrid spr_grid(const std::vector<std::pair<std::string, const Model<float>*>>& models, const LabeledDataset& ds,
                 std::span<const std::size_t> idx, const GridOptions& opt) {
  SprGrid g;
  g.test_sprs = opt.test_sprs;
  g.frameworks = opt.frameworks;
  for (const auto& [name, m] : models) {
    if (m == nullptr) throw ConfigError("grid regime '" + name + "' has no model");
    g.regimes.push_back(name);
  }
  g.accuracy.assign(g.frameworks.size() * g.regimes.size() * g.test_sprs.size(), 0.0);
  for (std::size_t r = 0; r < models.size(); ++r) {
    const auto& model = *models[r].second;
    for (std::size_t s = 0; s < g.test_sprs.size(); ++s) {
      std::optional<AttackConfig> attack;
      if (g.test_sprs[s]) {
        attack = AttackConfig::pga_eval(*g.test_sprs[s]);
        attack->iterations = opt.iterations;
        attack->step_fraction = opt.step_fraction;
        attack->seed = opt.seed;
      }
      // One attack per cell, shared by both frameworks. Natural is noise-free in both.
      std::optional<double> channel;
      if (attack && std::find(g.frameworks.begin(), g.frameworks.end(), Framework::security) != g.frameworks.end()) {
        channel = opt.channel_snr_db;
      }
      Predictions p = run(model, ds, idx, attack, channel, opt.seed);
      const double robust = report(Framework::robustness, p, model.n_classes(), std::nullopt).adv_accuracy;
      for (std::size_t f = 0; f < g.frameworks.size(); ++f) {
        double acc = robust;
        if (g.frameworks[f] == Framework::security && channel) {
          acc = report(Framework::security, through_channel(p), model.n_classes(), std::nullopt).adv_accuracy;
        }
        g.accuracy[(f * g.regimes.size() + r) * g.test_sprs.size() + s] = acc;
      }
    }
  }
  return g;
}

SprGrid spr_grid(const std::map<std::string, std::filesystem::path>& checkpoints, const LabeledDataset& ds,
                 std::span<const std::size_t> idx, const GridOptions& opt) {
  for (const auto& [name, path] : checkpoints) {
    if (!std::filesystem::exists(path)) {
      throw ConfigError("checkpoints." + name + ": file '" + path.string() + "' not found");
    }
  }
  std::vector<Checkpoint> loaded;
  std::vector<std::string> names;
  for (const auto& [name, path] : checkpoints) {
    loaded.push_back(load_checkpoint(path));
    names.push_back(name);
  }
  std::vector<std::pair<std::string, const Model<float>*>> models;
  for (std::size_t k = 0; k < loaded.size(); ++k) models.emplace_back(names[k], &loaded[k].model);
  return spr_grid(models, ds, idx, opt);
}

}  // namespace advamc
