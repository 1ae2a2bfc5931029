#include "advamc/training.hpp"

#include <cstdio>
#include <sstream>

#include "advamc/autodiff/adam.hpp"
#include "advamc/error.hpp"

namespace advamc {
namespace {

constexpr std::uint64_t kShuffleTag = 0x5348;
constexpr std::uint64_t kDropoutTag = 0x4452;
constexpr std::uint64_t kAttackTag = 0x4154;

void require_splits(const LabeledDataset& ds) {
  if (ds.indices(Split::train).empty()) throw DataError("dataset has no training split");
  if (ds.indices(Split::val).empty()) throw DataError("dataset has no validation split");
}

std::vector<std::size_t> labels_of(const LabeledDataset& ds, std::span<const std::size_t> idx) {
  std::vector<std::size_t> y(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) y[k] = ds.labels[idx[k]];
  return y;
}

TrainResult run(const Model<float>& init, const LabeledDataset& ds, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  require_splits(ds);
  if (init.n_classes() != ds.n_classes()) throw ConfigError("model classes do not match the dataset");
  if (init.input_len() != ds.spec.samples_per_signal) throw ConfigError("model input length does not match the dataset");

  Model<float> model = init.clone();
  const auto val = ds.indices(Split::val);
  ad::AdamState<float> adam;
  const ad::AdamHyper hyper{cfg.learning_rate};
  std::optional<PgaOptions> inner;
  if (cfg.attack) inner = pga_options(*cfg.attack);

  TrainResult result;
  auto& hist = result.history;
  Model<float> best = model.clone();
  double best_score = -1.0;
  std::size_t since_best = 0;
  std::uint64_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t seen = 0;
    const auto batches = shuffle_batches(ds, cfg.batch_size, epoch, cfg.seed);
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& idx = batches[bi];
      auto x = to_batch(ds.signals, idx);
      const auto y = labels_of(ds, idx);
      if (inner) {
        std::vector<double> eps(idx.size());
        for (std::size_t b = 0; b < idx.size(); ++b) eps[b] = spr_to_epsilon(ds.signals[idx[b]], cfg.attack->spr_db);
        const auto pert = perturb_batch(model, *x, y, eps, *inner, derive_seed(cfg.seed, {kAttackTag, epoch, bi}));
        for (std::size_t k = 0; k < x->size(); ++k) x->data[k] += pert.delta.data[k];
      }
      ad::Tape<float> tape;
      const ForwardMode mode{true, derive_seed(cfg.seed, {kDropoutTag}), step};
      const auto logits = model.forward(x, &tape, mode);
      const auto loss = ad::softmax_cross_entropy(&tape, logits, y);
      loss_sum += static_cast<double>(loss->data[0]) * static_cast<double>(idx.size());
      seen += idx.size();
      tape.backward(loss);
      ad::adam_step(model.parameters(), adam, hyper);
      model.zero_grad();
      ++step;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.val_clean_accuracy = accuracy_on(model, ds, val);
    if (cfg.attack) rec.val_robust_accuracy = accuracy_on(model, ds, val, cfg.attack);
    hist.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    const double score = rec.val_robust_accuracy.value_or(rec.val_clean_accuracy);
    if (score > best_score) {
      best_score = score;
      best = model.clone();
      hist.best_epoch = epoch;
      since_best = 0;
    } else if (cfg.early_stop_patience > 0 && ++since_best >= cfg.early_stop_patience) {
      hist.stopped_early = true;
      break;
    }
  }
  hist.best_score = best_score;
  json meta{{"seed", cfg.seed},
            {"train_config", to_json(cfg)},
            {"epochs_run", hist.epochs.size()},
            {"best_epoch", hist.best_epoch},
            {"best_score", best_score},
            {"dataset_seed", ds.spec.seed}};
  meta["attack"] = cfg.attack ? to_json(*cfg.attack) : json(nullptr);
  result.checkpoint = Checkpoint{std::move(best), std::move(meta)};
  return result;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (attack) attack->validate();
}

json to_json(const TrainConfig& c) {
  json j{{"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"learning_rate", c.learning_rate},
         {"seed", c.seed},
         {"early_stop_patience", c.early_stop_patience}};
  j["attack"] = c.attack ? to_json(*c.attack) : json(nullptr);
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  if (j.contains("attack") && !j.at("attack").is_null()) c.attack = attack_config_from_json(j.at("attack"));
  c.validate();
  return c;
}

std::string TrainHistory::to_csv() const {
  std::ostringstream os;
  os << "epoch,train_loss,val_clean_accuracy,val_robust_accuracy\n";
  char buf[128];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,", e.epoch, e.train_loss, e.val_clean_accuracy);
    os << buf;
    if (e.val_robust_accuracy) {
      std::snprintf(buf, sizeof buf, "%.9g", *e.val_robust_accuracy);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

std::vector<std::vector<std::size_t>> shuffle_batches(const LabeledDataset& ds, std::size_t batch_size,
                                                      std::size_t epoch, std::uint64_t seed) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  auto order = ds.indices(Split::train);
  Rng rng(seed, {kShuffleTag, epoch});
  shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < order.size(); s += batch_size) {
    const auto e = std::min(order.size(), s + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s), order.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return out;
}

TrainResult train_standard(const Model<float>& init, const LabeledDataset& ds, const TrainConfig& cfg,
                   const EpochCallback& on_epoch) {
  TrainConfig c = cfg;
  c.attack.reset();
  return run(init, ds, c, on_epoch);
}

TrainResult train_adversarial(const Model<float>& init, const LabeledDataset& ds, const TrainConfig& cfg,
                   const EpochCallback& on_epoch) {
  if (!cfg.attack) throw ConfigError("adversarial training needs an attack config");
  if (cfg.attack->target) throw ConfigError("adversarial training attack must be untargeted");
  return run(init, ds, cfg, on_epoch);
}

TrainResult train(const Model<float>& init, const LabeledDataset& ds, const TrainConfig& cfg,
                   const EpochCallback& on_epoch) {
  return cfg.attack ? train_adversarial(init, ds, cfg, on_epoch) : train_standard(init, ds, cfg, on_epoch);
}

double accuracy_on(const Model<float>& model, const LabeledDataset& ds, std::span<const std::size_t> idx,
                   const std::optional<AttackConfig>& attack, std::size_t chunk) {
  if (idx.empty()) throw DataError("accuracy over an empty index set");
  std::size_t correct = 0;
  for (std::size_t s = 0; s < idx.size(); s += chunk) {
    const auto part = idx.subspan(s, std::min(chunk, idx.size() - s));
    auto x = to_batch(ds.signals, part);
    const auto y = labels_of(ds, part);
    if (attack) {
      std::vector<double> eps(part.size());
      for (std::size_t b = 0; b < part.size(); ++b) eps[b] = spr_to_epsilon(ds.signals[part[b]], attack->spr_db);
      const auto pert = perturb_batch(model, *x, y, eps, pga_options(*attack), attack->seed, s);
      for (std::size_t k = 0; k < x->size(); ++k) x->data[k] += pert.delta.data[k];
    }
    const auto pred = classify(model, x);
    for (std::size_t b = 0; b < part.size(); ++b) correct += pred[b] == y[b];
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

}  // namespace advamc
