#include "commands.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>

#include <spdlog/spdlog.h>

#include "advamc/analysis.hpp"
#include "advamc/binary_io.hpp"
#include "advamc/error.hpp"
#include "advamc/gradcheck.hpp"

namespace advamc::cli {
namespace fs = std::filesystem;

namespace {

void require_file(const fs::path& p, const std::string& key) {
  if (!fs::exists(p)) throw ConfigError("'" + key + "': file '" + p.string() + "' not found");
}

LabeledDataset load_data(const RunConfig& rc) {
  require_file(rc.dataset_path(), "dataset.file");
  auto ds = load_dataset(rc.dataset_path());
  if (ds.spec.samples_per_signal != rc.data.spec.samples_per_signal || ds.class_names != rc.data.spec.schemes) {
    throw ConfigError("'dataset': saved dataset '" + rc.dataset_path().string() + "' does not match the configured spec");
  }
  return ds;
}

/// Evaluation signals as (dataset, indices).
std::pair<LabeledDataset, std::vector<std::size_t>> eval_signals(const RunConfig& rc, const EvalSet& set,
                                                                 LabeledDataset ds) {
  if (set.signals_per_class) {
    DatasetSpec spec = ds.spec;
    spec.signals_per_class = *set.signals_per_class;
    spec.seed = set.seed;
    if (spec.seed == ds.spec.seed) spec.seed = derive_seed(set.seed, {0x65766c});
    spdlog::info("generating evaluation set: {} signals per class, seed {}", spec.signals_per_class, spec.seed);
    auto fresh = generate(spec);
    std::vector<std::size_t> all(fresh.size());
    for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
    return {std::move(fresh), std::move(all)};
  }
  std::vector<std::size_t> idx;
  if (set.split == "all") {
    idx.resize(ds.size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
  } else {
    idx = ds.indices(set.split == "test" ? Split::test : set.split == "val" ? Split::val : Split::train);
  }
  if (idx.empty()) throw DataError("evaluation split '" + set.split + "' is empty");
  (void)rc;
  return {std::move(ds), std::move(idx)};
}

Checkpoint load_ckpt(const RunConfig& rc, const std::string& ref, const std::string& key) {
  const auto path = rc.checkpoint_path(ref);
  require_file(path, key);
  return load_checkpoint(path);
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write(Manifest& m, const fs::path& p, std::string_view text) {
  io::write_text(p, text);
  m.artifact(p);
}

}  // namespace

Manifest::Manifest(std::string command, const RunConfig& rc) : command_(std::move(command)), rc_(rc) {}

void Manifest::artifact(const fs::path& path) {
  const auto bytes = io::read_file(path);
  artifacts_[fs::relative(path, rc_.out).generic_string()] = {{"bytes", bytes.size()},
                                                               {"fnv1a64", io::hex64(io::fnv1a64(bytes))}};
}

void Manifest::seed(const std::string& name, std::uint64_t value) { seeds_[name] = value; }

void Manifest::write() const {
  const std::string canon = rc_.snapshot.dump();
  const json m{{"command", command_},
               {"config", rc_.snapshot},
               {"config_hash", io::hex64(io::fnv1a64(canon))},
               {"seeds", seeds_},
               {"artifacts", artifacts_},
               {"threads", rc_.threads},
               {"created_utc", timestamp()}};
  io::write_text(rc_.out / ("manifest-" + command_ + ".json"), m.dump(2) + "\n");
}

void cmd_gen_data(const RunConfig& rc) {
  Manifest man("gen-data", rc);
  man.seed("dataset", rc.data.spec.seed);
  man.seed("split", rc.data.split_seed);
  spdlog::info("generating {} classes x {} signals", rc.data.spec.schemes.size(), rc.data.spec.signals_per_class);
  const auto ds = split(generate(rc.data.spec), rc.data.train_frac, rc.data.val_frac_of_train, rc.data.split_seed);
  save_dataset(ds, rc.dataset_path());
  man.artifact(rc.dataset_path());
  const json summary{{"signals", ds.size()},
                     {"classes", ds.class_names},
                     {"train", ds.indices(Split::train).size()},
                     {"val", ds.indices(Split::val).size()},
                     {"test", ds.indices(Split::test).size()},
                     {"empirical_snr_db", empirical_snr_db(ds, 1000)}};
  write(man, rc.out / "dataset_summary.json", summary.dump(2) + "\n");
  spdlog::info("wrote {}", rc.dataset_path().string());
  man.write();
}

void cmd_train(const RunConfig& rc, const std::vector<std::string>& only) {
  if (rc.regimes.empty()) throw ConfigError("'train' lists no regimes");
  for (const auto& name : only) {
    bool found = false;
    for (const auto& [n, c] : rc.regimes) found = found || n == name;
    if (!found) throw ConfigError("'train." + name + "' is not a configured regime");
  }
  const auto ds = load_data(rc);
  Manifest man("train", rc);
  man.seed("init", rc.model.init_seed);
  const auto init = rc.build_model(ds.n_classes(), ds.spec.samples_per_signal);
  for (const auto& [name, cfg] : rc.regimes) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    man.seed("train." + name, cfg.seed);
    spdlog::info("training '{}' ({})", name, cfg.attack ? "adversarial, " + cfg.attack->label() : "standard");
    const auto result = train(init, ds, cfg, [&](const EpochRecord& e) {
      if (e.val_robust_accuracy) {
        spdlog::info("  {} epoch {:2d} loss {:.4f} val {:.4f} robust {:.4f}", name, e.epoch, e.train_loss,
                     e.val_clean_accuracy, *e.val_robust_accuracy);
      } else {
        spdlog::info("  {} epoch {:2d} loss {:.4f} val {:.4f}", name, e.epoch, e.train_loss, e.val_clean_accuracy);
      }
    });
    json meta = result.checkpoint.metadata;
    meta["regime"] = name;
    meta["model"] = {{"architecture", rc.model.architecture}, {"init_seed", rc.model.init_seed}};
    const auto path = rc.out / (name + ".ckpt");
    save_checkpoint(path, result.checkpoint.model, meta);
    man.artifact(path);
    write(man, rc.out / (name + "_history.csv"), result.history.to_csv());
    spdlog::info("wrote {} (best epoch {})", path.string(), result.history.best_epoch);
  }
  man.write();
}

void cmd_attack_eval(const RunConfig& rc) {
  const auto& e = rc.eval;
  const auto ckpt = load_ckpt(rc, e.checkpoint, "eval.checkpoint");
  auto [ds, idx] = eval_signals(rc, e.set, load_data(rc));
  Manifest man("attack-eval", rc);
  man.seed("channel", e.config.channel_seed);
  if (e.config.attack) man.seed("attack", e.config.attack->seed);
  spdlog::info("{} evaluation of '{}' on {} signals ({})", framework_name(e.config.framework), e.checkpoint,
               idx.size(), e.config.attack ? e.config.attack->label() : "Natural");
  auto report = evaluate(ckpt.model, ds, idx, e.config);
  report.metadata["checkpoint"] = e.checkpoint;
  report.metadata["eval_config"] = to_json(e.config);
  write(man, rc.out / (e.report + ".json"), to_json(report, ds.class_names).dump(2) + "\n");
  write(man, rc.out / (e.report + "_confusion.csv"), report.confusion.to_csv(ds.class_names));
  spdlog::info("clean {:.4f} adversarial {:.4f} fooling {:.4f}", report.clean_accuracy, report.adv_accuracy,
               report.fooling_rate);
  man.write();
}

void cmd_grid(const RunConfig& rc) {
  std::map<std::string, fs::path> paths;
  if (rc.grid.checkpoints.empty()) {
    for (const auto& [name, cfg] : rc.regimes) paths[name] = rc.checkpoint_path(name);
  } else {
    for (const auto& [name, ref] : rc.grid.checkpoints) paths[name] = rc.checkpoint_path(ref);
  }
  if (paths.empty()) throw ConfigError("'grid.checkpoints' is empty and no training regimes are configured");
  for (const auto& [name, p] : paths) require_file(p, "grid.checkpoints." + name);
  auto [ds, idx] = eval_signals(rc, rc.grid.set, load_data(rc));
  Manifest man("grid", rc);
  man.seed("grid", rc.grid.options.seed);
  spdlog::info("SPR grid over {} regimes, {} signals", paths.size(), idx.size());
  const auto grid = spr_grid(paths, ds, idx, rc.grid.options);
  write(man, rc.out / "grid.csv", grid.to_csv());
  write(man, rc.out / "grid.json", grid.to_json().dump(2) + "\n");
  man.write();
}

void cmd_constellation(const RunConfig& rc) {
  const auto& c = rc.constellation;
  const auto standard = load_ckpt(rc, c.standard, "constellation.standard");
  const auto robust = load_ckpt(rc, c.robust, "constellation.robust");
  auto [ds, idx] = eval_signals(rc, c.set, load_data(rc));
  std::size_t target = 0;
  while (ds.class_names[target] != c.target) ++target;
  std::vector<std::size_t> pool;
  for (auto k : idx)
    if (ds.labels[k] != target && pool.size() < c.n_signals) pool.push_back(k);
  Manifest man("constellation", rc);
  spdlog::info("alignment study toward {} on {} signals at {} dB", c.target, pool.size(), c.spr_db);
  const auto report = alignment_study(standard.model, robust.model, ds, pool, target, c.spr_db);
  write(man, rc.out / "alignment.json", report.to_json().dump(2) + "\n");
  write(man, rc.out / "alignment.csv", report.to_csv());
  spdlog::info("mean alignment standard {:.4f} robust {:.4f}", report.mean_alignment_standard,
               report.mean_alignment_robust);

  const auto tc = constellation(c.target);
  AttackConfig fgsm = AttackConfig::fgsm_at(c.spr_db);
  fgsm.target = target;
  for (std::size_t p = 0; p < std::min(c.n_plots, pool.size()); ++p) {
    const auto& x = ds.signals[pool[p]];
    const std::size_t y[1] = {ds.labels[pool[p]]};
    const auto stem = rc.out / "constellation" / ("signal" + std::to_string(p) + "_" + ds.class_names[y[0]]);
    const auto eps = spr_to_epsilon(x, c.spr_db);
    const auto add = [&](const IqSignal& d) {
      IqSignal out = x;
      for (std::size_t t = 0; t < x.size(); ++t) {
        out.i[t] += d.i[t];
        out.q[t] += d.q[t];
      }
      return out;
    };
    const std::pair<const char*, const Model<float>*> models[] = {{"standard", &standard.model},
                                                                  {"robust", &robust.model}};
    for (const auto& [tag, model] : models) {
      const auto a = attack_batch(*model, std::span(&x, 1), y, fgsm);
      auto s = stem;
      s += std::string("_") + tag;
      constellation_export(x, a.adversarial[0], tc, s, ds.class_names[y[0]] + " -> " + c.target + " (" + tag + ")");
      man.artifact(fs::path(s) += ".csv");
      man.artifact(fs::path(s) += ".svg");
    }
    auto s = stem;
    s += "_oracle";
    constellation_export(x, add(oracle_targeted_perturbation(x, tc, eps).delta), tc, s,
                         ds.class_names[y[0]] + " -> " + c.target + " (oracle)");
    man.artifact(fs::path(s) += ".csv");
    man.artifact(fs::path(s) += ".svg");
  }
  man.write();
}

bool cmd_gradcheck(std::uint64_t seed, const fs::path& out) {
  const auto rep = run_gradcheck(seed);
  for (const auto& p : rep.primitives) {
    std::printf("%-28s cases %4zu  max rel err %.3e\n", p.primitive.c_str(), p.cases, p.max_rel_error);
  }
  std::printf("%-28s cases %4zu  max rel err %.3e\n", "model_input (32-bit)", rep.model_cases,
              rep.model_input_max_rel_error);
  std::printf("primitive max rel err %.3e (tol 1e-4), model %.3e (tol 1e-3): %s\n", rep.primitive_max_rel_error(),
              rep.model_input_max_rel_error, rep.passed() ? "PASS" : "FAIL");
  if (!out.empty()) io::write_text(out / "gradcheck.json", rep.to_json().dump(2) + "\n");
  return rep.passed();
}

}  // namespace advamc::cli
