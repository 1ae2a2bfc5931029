#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "advamc/error.hpp"
#include "advamc/parallel.hpp"
#include "commands.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kFailed = 2;

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("advamc"));
  spdlog::set_pattern("[%H:%M:%S] %v");

  CLI::App app{"Adversarial robustness workbench for modulation classifiers"};
  app.require_subcommand(1);
  std::optional<std::string> config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string preset_name = "crml-tiny";
  std::vector<std::string> regimes;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "JSON run configuration");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--threads", threads, "worker thread cap (0 = all cores)");
    sub->add_option("--preset", preset_name, "base preset")->check(CLI::IsMember({"crml-tiny", "crml2018"}));
  };
  auto* gen = app.add_subcommand("gen-data", "generate, split and save the dataset");
  auto* train = app.add_subcommand("train", "standard or adversarial training of every configured regime");
  auto* evalc = app.add_subcommand("attack-eval", "robustness or security evaluation of one checkpoint");
  auto* grid = app.add_subcommand("grid", "SPR accuracy grid over the training regimes");
  auto* cons = app.add_subcommand("constellation", "alignment study and constellation diagrams");
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every autodiff primitive");
  for (auto* s : {gen, train, evalc, grid, cons, grad}) common(s);
  train->add_option("--regime", regimes, "train only these regimes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInvalid;
  }

  using namespace advamc;
  cli::RunConfig rc;
  try {
    rc = cli::load_run_config(config ? std::optional<std::filesystem::path>(*config) : std::nullopt, preset_name,
                              {seed, out ? std::optional<std::filesystem::path>(*out) : std::nullopt, threads});
    set_max_threads(rc.threads);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return kInvalid;
  }

  try {
    if (*gen) cli::cmd_gen_data(rc);
    if (*train) cli::cmd_train(rc, regimes);
    if (*evalc) cli::cmd_attack_eval(rc);
    if (*grid) cli::cmd_grid(rc);
    if (*cons) cli::cmd_constellation(rc);
    if (*grad) return cli::cmd_gradcheck(rc.seed, out ? rc.out : std::filesystem::path{}) ? kOk : kFailed;
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kInvalid;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kFailed;
  }
  return kOk;
}
