#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "../tools/commands.hpp"
#include "../tools/run_config.hpp"
#include "advamc/error.hpp"

using namespace advamc;
using namespace advamc::cli;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("advamc_cli_" + name);
  std::filesystem::remove_all(p);
  return p;
}

json micro(const std::filesystem::path& out) {
  auto j = preset("crml-tiny");
  j["out"] = out.string();
  j["dataset"]["schemes"] = {"BPSK", "QPSK", "8PSK"};
  j["dataset"]["signals_per_class"] = 30;
  j["dataset"]["samples_per_signal"] = 64;
  j["dataset"]["val_frac_of_train"] = 0.1;
  for (auto& [k, v] : j["train"].items()) {
    v["epochs"] = 2;
    v["batch_size"] = 16;
  }
  j["train"]["spr20"]["attack"]["iterations"] = 2;
  j["eval"]["attack"]["iterations"] = 2;
  j["grid"]["iterations"] = 2;
  j["constellation"]["n_signals"] = 20;
  j["constellation"]["n_plots"] = 1;
  return j;
}

}  // namespace

TEST_CASE("presets parse") {
  const auto tiny = parse_run_config(preset("crml-tiny"));
  CHECK(tiny.data.spec.schemes.size() == 8);
  CHECK(tiny.data.spec.signals_per_class == 500);
  CHECK(tiny.regimes.size() == 2);
  CHECK(tiny.checkpoint_path("natural") == tiny.out / "natural.ckpt");
  CHECK(tiny.checkpoint_path("elsewhere/m.ckpt") == std::filesystem::path("elsewhere/m.ckpt"));
  const auto full = parse_run_config(preset("crml2018"));
  CHECK(full.data.spec.schemes.size() == 16);
  CHECK(full.data.spec.samples_per_signal == 1024);
  CHECK(full.regimes.size() == 3);
  CHECK_THROWS_AS(preset("nope"), ConfigError);
}

TEST_CASE("seed overrides fill every stream") {
  const auto rc = parse_run_config(preset("crml-tiny"), Overrides{42, std::nullopt, std::nullopt});
  CHECK(rc.seed == 42);
  CHECK(rc.data.spec.seed == 42);
  CHECK(rc.data.split_seed == 42);
  CHECK(rc.model.init_seed == 42);
  for (const auto& [name, tc] : rc.regimes) CHECK(tc.seed == 42);
}

TEST_CASE("unknown and malformed keys are rejected") {
  auto j = preset("crml-tiny");
  j["dataset"]["bogus"] = 1;
  try {
    parse_run_config(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("dataset.bogus") != std::string::npos);
  }
  auto top = preset("crml-tiny");
  top["extra"] = true;
  CHECK_THROWS_AS(parse_run_config(top), ConfigError);
  auto typed = preset("crml-tiny");
  typed["dataset"]["signals_per_class"] = "many";
  CHECK_THROWS_AS(parse_run_config(typed), ConfigError);
  auto scheme = preset("crml-tiny");
  scheme["dataset"]["schemes"] = {"BPSK", "FM"};
  CHECK_THROWS_AS(parse_run_config(scheme), Error);
}

TEST_CASE("merge") {
  const json a{{"x", 1}, {"o", {{"p", 1}, {"q", 2}}}};
  const json b{{"o", {{"q", 3}}}, {"y", 2}};
  const json m = merge(a, b);
  CHECK(m == json{{"x", 1}, {"y", 2}, {"o", {{"p", 1}, {"q", 3}}}});
}

TEST_CASE("config file overlays the preset") {
  const auto dir = scratch("file");
  std::filesystem::create_directories(dir);
  const auto path = dir / "cfg.json";
  std::ofstream(path) << R"({"seed": 5, "dataset": {"snr_db": 10}, "train": {"only": {"epochs": 1}}})";
  const auto rc = load_run_config(path, "crml-tiny", {});
  CHECK(rc.seed == 5);
  CHECK(rc.data.spec.snr_db == 10.0);
  REQUIRE(rc.regimes.size() == 1);
  CHECK(rc.regimes[0].first == "only");
  CHECK_THROWS_AS(load_run_config(dir / "missing.json", "crml-tiny", {}), ConfigError);
}

TEST_CASE("micro pipeline writes its artifacts") {
  const auto out = scratch("pipeline");
  const auto rc = parse_run_config(micro(out));
  cmd_gen_data(rc);
  CHECK(std::filesystem::exists(out / "dataset.amcd"));
  cmd_train(rc);
  CHECK(std::filesystem::exists(out / "natural.ckpt"));
  CHECK(std::filesystem::exists(out / "spr20.ckpt"));
  CHECK(std::filesystem::exists(out / "natural_history.csv"));
  cmd_attack_eval(rc);
  CHECK(std::filesystem::exists(out / "eval.json"));
  CHECK(std::filesystem::exists(out / "eval_confusion.csv"));
  cmd_grid(rc);
  CHECK(std::filesystem::exists(out / "grid.csv"));
  cmd_constellation(rc);
  CHECK(std::filesystem::exists(out / "alignment.json"));
  const auto m = json::parse(std::ifstream(out / "manifest-train.json"));
  CHECK(m.contains("config_hash"));
  CHECK(m.at("artifacts").size() >= 2);

  auto missing = micro(out);
  missing["grid"]["checkpoints"] = {{"adv15", (out / "nope.ckpt").string()}};
  try {
    cmd_grid(parse_run_config(missing));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("adv15") != std::string::npos);
  }
  std::filesystem::remove_all(out);
}

TEST_CASE("documented example configuration parses") {
  std::ifstream in(std::string(ADVAMC_SOURCE_DIR) + "/docs/config.md");
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto text = ss.str();
  const auto start = text.find("```json\n");
  REQUIRE(start != std::string::npos);
  const auto end = text.find("```", start + 8);
  const auto rc = parse_run_config(json::parse(text.substr(start + 8, end - start - 8)));
  CHECK(rc.eval.config.framework == Framework::security);
  CHECK(rc.eval.set.signals_per_class == 256u);
  CHECK(rc.grid.checkpoints.size() == 2);
  CHECK(rc.regimes.size() == 2);
}
