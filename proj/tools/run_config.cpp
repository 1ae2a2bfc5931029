#include "run_config.hpp"

#include <cmath>
#include <set>

#include "advamc/binary_io.hpp"
#include "advamc/error.hpp"

namespace advamc::cli {
namespace {

/// Typed access to one JSON object; every lookup is recorded so leftover
/// keys can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  bool has(const std::string& k) {
    seen_.insert(k);
    return j_.contains(k);
  }
  bool null(const std::string& k) { return !has(k) || j_.at(k).is_null(); }

  template <class T>
  T get(const std::string& k, T fallback) {
    if (!has(k)) return fallback;
    try {
      return j_.at(k).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("'" + key(k) + "' has the wrong type");
    }
  }
  template <class T>
  T require(const std::string& k) {
    if (!has(k)) throw ConfigError("missing key '" + key(k) + "'");
    return get<T>(k, T{});
  }
  const json& raw(const std::string& k) {
    seen_.insert(k);
    return j_.at(k);
  }
  Section sub(const std::string& k) {
    seen_.insert(k);
    return Section(j_.at(k), key(k));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + key(it.key()) + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void check(bool ok, const Section& s, const std::string& k, const std::string& what) {
  if (!ok) throw ConfigError("'" + s.key(k) + "' " + what);
}

AttackConfig parse_attack(Section s, std::uint64_t seed) {
  AttackConfig a;
  const auto kind = s.require<std::string>("kind");
  const double spr = s.require<double>("spr_db");
  if (kind == "fgsm") {
    a = AttackConfig::fgsm_at(spr);
  } else if (kind == "pga") {
    a = AttackConfig::pga_eval(spr);
  } else {
    throw ConfigError("'" + s.key("kind") + "' must be \"fgsm\" or \"pga\"");
  }
  a.iterations = s.get<std::size_t>("iterations", a.iterations);
  a.step_fraction = s.get<double>("step_fraction", a.step_fraction);
  a.random_start = s.get<bool>("random_start", false);
  a.seed = s.get<std::uint64_t>("seed", seed);
  const auto mode = s.get<std::string>("gradient_mode", "sign");
  check(mode == "sign" || mode == "raw", s, "gradient_mode", "must be \"sign\" or \"raw\"");
  a.gradient_mode = mode == "sign" ? GradientMode::sign : GradientMode::raw;
  if (!s.null("target")) a.target = s.get<std::size_t>("target", 0);
  check(a.iterations >= 1, s, "iterations", "must be >= 1");
  check(a.step_fraction > 0.0, s, "step_fraction", "must be > 0");
  check(std::isfinite(spr), s, "spr_db", "must be finite");
  s.finish();
  return a;
}

EvalSet parse_eval_set(Section& parent, std::uint64_t seed) {
  EvalSet e;
  e.seed = seed;
  e.split = parent.get<std::string>("split", e.split);
  check(e.split == "test" || e.split == "val" || e.split == "train" || e.split == "all", parent, "split",
        "must be one of test, val, train, all");
  if (!parent.null("eval_set")) {
    auto s = parent.sub("eval_set");
    e.signals_per_class = s.require<std::size_t>("signals_per_class");
    e.seed = s.get<std::uint64_t>("seed", seed);
    check(*e.signals_per_class >= 1, s, "signals_per_class", "must be >= 1");
    s.finish();
  }
  return e;
}

}  // namespace

std::filesystem::path RunConfig::checkpoint_path(const std::string& ref) const {
  for (const auto& [name, cfg] : regimes)
    if (name == ref) return out / (name + ".ckpt");
  return ref;
}

Model<float> RunConfig::build_model(std::size_t n_classes, std::size_t input_len) const {
  if (model.architecture == "vt_cnn") {
    return Model<float>(vt_cnn_architecture(n_classes, input_len, model.width_scale, model.dropout), model.init_seed);
  }
  return Model<float>(resnet_architecture(n_classes, input_len, model.n_stacks, model.filters), model.init_seed);
}

json preset(const std::string& name) {
  const json pga_train20{{"kind", "pga"}, {"spr_db", 20.0}, {"iterations", 7}, {"step_fraction", 0.36}};
  if (name == "crml-tiny") {
    const auto spec = crml_tiny_spec();
    return {{"seed", 1},
            {"out", "out/crml-tiny"},
            {"threads", 0},
            {"dataset",
             {{"schemes", spec.schemes},
              {"signals_per_class", spec.signals_per_class},
              {"samples_per_signal", spec.samples_per_signal},
              {"samples_per_symbol", spec.samples_per_symbol},
              {"snr_db", spec.snr_db},
              {"train_frac", 0.70},
              {"val_frac_of_train", 0.05},
              {"file", "dataset.amcd"}}},
            {"model", {{"architecture", "vt_cnn"}, {"width_scale", 0.125}, {"dropout", 0.0}}},
            {"train",
             {{"natural", {{"epochs", 20}, {"batch_size", 32}, {"learning_rate", 1e-3}, {"early_stop_patience", 5}}},
              {"spr20",
               {{"epochs", 20},
                {"batch_size", 32},
                {"learning_rate", 1e-3},
                {"early_stop_patience", 5},
                {"attack", pga_train20}}}}},
            {"eval",
             {{"framework", "robustness"},
              {"attack", {{"kind", "pga"}, {"spr_db", 20.0}, {"iterations", 20}, {"step_fraction", 0.125}}},
              {"channel_snr_db", 20.0},
              {"checkpoint", "natural"},
              {"report", "eval"},
              {"split", "test"}}},
            {"grid",
             {{"test_sprs", {nullptr, 25.0, 20.0, 15.0}},
              {"frameworks", {"robustness", "security"}},
              {"iterations", 20},
              {"step_fraction", 0.125},
              {"channel_snr_db", 20.0},
              {"split", "test"}}},
            {"constellation",
             {{"standard", "natural"},
              {"robust", "spr20"},
              {"target", "BPSK"},
              {"spr_db", 20.0},
              {"n_signals", 200},
              {"n_plots", 4},
              {"split", "test"}}}};
  }
  if (name == "crml2018") {
    auto j = preset("crml-tiny");
    const auto spec = crml2018_spec();
    j["out"] = "out/crml2018";
    j["dataset"]["schemes"] = spec.schemes;
    j["dataset"]["signals_per_class"] = spec.signals_per_class;
    j["dataset"]["samples_per_signal"] = spec.samples_per_signal;
    j["model"] = {{"architecture", "vt_cnn"}, {"width_scale", 1.0}, {"dropout", 0.5}};
    for (auto& [k, v] : j["train"].items()) {
      v["epochs"] = 30;
      v["batch_size"] = 128;
    }
    j["train"]["spr15"] = j["train"]["spr20"];
    j["train"]["spr15"]["attack"]["spr_db"] = 15.0;
    j["constellation"]["n_signals"] = 1000;
    return j;
  }
  throw ConfigError("unknown preset '" + name + "' (expected crml-tiny or crml2018)");
}

json merge(json base, const json& patch) {
  if (!base.is_object() || !patch.is_object()) return patch;
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    base[it.key()] = base.contains(it.key()) ? merge(base[it.key()], it.value()) : it.value();
  }
  return base;
}

RunConfig parse_run_config(const json& doc_in, const Overrides& ov) {
  json doc = doc_in;
  if (ov.seed) doc["seed"] = *ov.seed;
  if (ov.out) doc["out"] = ov.out->string();
  if (ov.threads) doc["threads"] = *ov.threads;

  RunConfig rc;
  Section top(doc, "");
  rc.seed = top.get<std::uint64_t>("seed", rc.seed);
  rc.out = top.get<std::string>("out", rc.out.string());
  rc.threads = top.get<std::size_t>("threads", 0);

  {
    auto s = top.sub("dataset");
    auto& spec = rc.data.spec;
    spec.schemes = s.require<std::vector<std::string>>("schemes");
    spec.signals_per_class = s.require<std::size_t>("signals_per_class");
    spec.samples_per_signal = s.require<std::size_t>("samples_per_signal");
    spec.samples_per_symbol = s.require<std::size_t>("samples_per_symbol");
    spec.snr_db = s.require<double>("snr_db");
    spec.seed = s.get<std::uint64_t>("seed", rc.seed);
    rc.data.train_frac = s.get<double>("train_frac", rc.data.train_frac);
    rc.data.val_frac_of_train = s.get<double>("val_frac_of_train", rc.data.val_frac_of_train);
    rc.data.split_seed = s.get<std::uint64_t>("split_seed", rc.seed);
    rc.data.file = s.get<std::string>("file", rc.data.file);
    check(rc.data.train_frac > 0.0 && rc.data.train_frac < 1.0, s, "train_frac", "must be in (0, 1)");
    check(rc.data.val_frac_of_train >= 0.0 && rc.data.val_frac_of_train < 1.0, s, "val_frac_of_train",
          "must be in [0, 1)");
    s.finish();
    try {
      validate(spec);
    } catch (const Error& e) {
      throw ConfigError("'dataset': " + std::string(e.what()));
    }
  }
  {
    auto s = top.sub("model");
    rc.model.architecture = s.get<std::string>("architecture", rc.model.architecture);
    check(rc.model.architecture == "vt_cnn" || rc.model.architecture == "resnet", s, "architecture",
          "must be \"vt_cnn\" or \"resnet\"");
    rc.model.width_scale = s.get<double>("width_scale", rc.model.width_scale);
    rc.model.dropout = s.get<double>("dropout", rc.model.dropout);
    rc.model.n_stacks = s.get<std::size_t>("n_stacks", rc.model.n_stacks);
    rc.model.filters = s.get<std::size_t>("filters", rc.model.filters);
    rc.model.init_seed = s.get<std::uint64_t>("init_seed", rc.seed);
    check(rc.model.dropout >= 0.0 && rc.model.dropout < 1.0, s, "dropout", "must be in [0, 1)");
    s.finish();
    try {
      (void)rc.build_model(rc.data.spec.schemes.size(), rc.data.spec.samples_per_signal);
    } catch (const Error& e) {
      throw ConfigError("'model': " + std::string(e.what()));
    }
  }
  if (top.has("train")) {
    auto regimes = top.sub("train");
    const json& tj = top.raw("train");
    for (auto it = tj.begin(); it != tj.end(); ++it) {
      auto s = regimes.sub(it.key());
      TrainConfig t;
      t.epochs = s.get<std::size_t>("epochs", t.epochs);
      t.batch_size = s.get<std::size_t>("batch_size", t.batch_size);
      t.learning_rate = s.get<double>("learning_rate", t.learning_rate);
      t.seed = s.get<std::uint64_t>("seed", rc.seed);
      t.early_stop_patience = s.get<std::size_t>("early_stop_patience", t.early_stop_patience);
      if (!s.null("attack")) {
        t.attack = parse_attack(s.sub("attack"), t.seed);
        check(!t.attack->target, s, "attack", "must be untargeted for training");
      }
      check(t.epochs >= 1, s, "epochs", "must be >= 1");
      check(t.batch_size >= 1, s, "batch_size", "must be >= 1");
      check(t.learning_rate > 0.0, s, "learning_rate", "must be > 0");
      s.finish();
      rc.regimes.emplace_back(it.key(), t);
    }
    regimes.finish();
  }
  if (top.has("eval")) {
    auto s = top.sub("eval");
    auto& e = rc.eval;
    const auto fw = s.get<std::string>("framework", "robustness");
    check(fw == "robustness" || fw == "security", s, "framework", "must be \"robustness\" or \"security\"");
    e.config.framework = framework_from_name(fw);
    if (!s.null("attack")) e.config.attack = parse_attack(s.sub("attack"), rc.seed);
    e.config.channel_snr_db = s.get<double>("channel_snr_db", 20.0);
    e.config.channel_seed = s.get<std::uint64_t>("channel_seed", rc.seed);
    if (!s.null("snr_filter_db")) e.config.snr_filter_db = s.get<double>("snr_filter_db", 0.0);
    e.checkpoint = s.get<std::string>("checkpoint", e.checkpoint);
    e.report = s.get<std::string>("report", e.report);
    e.set = parse_eval_set(s, rc.seed);
    check(std::isfinite(e.config.channel_snr_db), s, "channel_snr_db", "must be finite");
    check(!e.report.empty() && e.report.find('/') == std::string::npos, s, "report", "must be a plain file stem");
    s.finish();
  }
  if (top.has("grid")) {
    auto s = top.sub("grid");
    auto& g = rc.grid;
    if (!s.null("checkpoints")) {
      g.checkpoints = s.get<std::map<std::string, std::string>>("checkpoints", {});
    }
    if (s.has("test_sprs")) {
      g.options.test_sprs.clear();
      for (const auto& v : s.raw("test_sprs")) {
        if (v.is_null()) {
          g.options.test_sprs.emplace_back(std::nullopt);
        } else if (v.is_number()) {
          g.options.test_sprs.emplace_back(v.get<double>());
        } else {
          throw ConfigError("'grid.test_sprs' entries must be numbers or null");
        }
      }
    }
    if (s.has("frameworks")) {
      g.options.frameworks.clear();
      for (const auto& f : s.get<std::vector<std::string>>("frameworks", {})) {
        check(f == "robustness" || f == "security", s, "frameworks", "entries must be robustness or security");
        g.options.frameworks.push_back(framework_from_name(f));
      }
    }
    g.options.iterations = s.get<std::size_t>("iterations", g.options.iterations);
    g.options.step_fraction = s.get<double>("step_fraction", g.options.step_fraction);
    g.options.channel_snr_db = s.get<double>("channel_snr_db", g.options.channel_snr_db);
    g.options.seed = s.get<std::uint64_t>("seed", rc.seed);
    g.set = parse_eval_set(s, rc.seed);
    check(g.options.iterations >= 1, s, "iterations", "must be >= 1");
    check(g.options.step_fraction > 0.0, s, "step_fraction", "must be > 0");
    s.finish();
  }
  if (top.has("constellation")) {
    auto s = top.sub("constellation");
    auto& c = rc.constellation;
    c.standard = s.get<std::string>("standard", c.standard);
    c.robust = s.get<std::string>("robust", c.robust);
    c.target = s.get<std::string>("target", c.target);
    c.spr_db = s.get<double>("spr_db", c.spr_db);
    c.n_signals = s.get<std::size_t>("n_signals", c.n_signals);
    c.n_plots = s.get<std::size_t>("n_plots", c.n_plots);
    c.set = parse_eval_set(s, rc.seed);
    bool known = false;
    for (const auto& n : rc.data.spec.schemes) known = known || n == c.target;
    check(known, s, "target", "must name one of the dataset schemes");
    s.finish();
  }
  top.finish();
  rc.snapshot = doc;
  return rc;
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& file, const std::string& preset_name,
                          const Overrides& ov) {
  json doc = preset(preset_name);
  if (file) {
    if (!std::filesystem::exists(*file)) throw ConfigError("config file '" + file->string() + "' not found");
    const auto bytes = io::read_file(*file);
    json user;
    try {
      user = json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
      throw ConfigError("config file '" + file->string() + "' is not valid JSON: " + e.what());
    }
    if (!user.is_object()) throw ConfigError("config file '" + file->string() + "' must hold a JSON object");
    // Regime tables are replaced wholesale.
    if (user.contains("train")) doc.erase("train");
    if (user.contains("grid") && user["grid"].contains("checkpoints")) doc["grid"].erase("checkpoints");
    doc = merge(doc, user);
  }
  return parse_run_config(doc, ov);
}

}  // namespace advamc::cli
