#include <doctest.h>

#include <filesystem>

#include "advamc/error.hpp"
#include "advamc/evaluation.hpp"
#include "fixture.hpp"

using namespace advamc;

namespace {

std::vector<std::size_t> some_test(std::size_t n) {
  auto idx = fixture::trained().ds.indices(Split::test);
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back(idx[(k * 13) % idx.size()]);
  return out;
}

Model<float> constant_model(std::size_t cls) {
  Model<float> m(vt_cnn_architecture(8, 256, 0.125, 0.0), 1);
  const auto params = m.parameters();
  for (auto& v : params[params.size() - 2]->data) v = 0.0f;
  params.back()->data[cls] = 5.0f;
  return m;
}

}  // namespace

TEST_CASE("fooling rate") {
  const std::vector<std::size_t> y{0, 1, 2, 3}, clean{0, 1, 2, 0}, adv{0, 2, 2, 1};
  CHECK(fooling_rate(clean, adv, y) == doctest::Approx(1.0 / 3.0));
  CHECK(fooling_rate(clean, clean, y) == 0.0);
  const std::vector<std::size_t> wrong{1, 0, 0, 0};
  CHECK(fooling_rate(wrong, adv, y) == 0.0);
  CHECK_THROWS_AS(fooling_rate(clean, std::span(adv).first(2), y), ShapeError);
}

TEST_CASE("confusion matrix") {
  const std::vector<std::size_t> y{0, 0, 1, 1, 1}, p{0, 1, 1, 1, 0};
  const auto cm = confusion_matrix(p, y, 3);
  CHECK(cm.total == 5);
  CHECK_FALSE(cm.empty);
  CHECK(cm.count(0, 0) == 1);
  CHECK(cm.count(1, 0) == 1);
  CHECK(cm.rate(1, 1) == doctest::Approx(2.0 / 3.0));
  CHECK(cm.rate(2, 2) == 0.0);
  const std::vector<std::string> names{"a", "b", "c"};
  CHECK(cm.to_csv(names).rfind("true\\pred,a,b,c\n", 0) == 0);

  const std::vector<std::optional<double>> tags{10.0, 20.0, std::nullopt, 5.0, 30.0};
  const auto f = confusion_matrix(p, y, 3, tags, 15.0);
  CHECK(f.total == 3);
  const std::vector<std::optional<double>> low{1.0, 1.0, 1.0, 1.0, 1.0};
  const auto e = confusion_matrix(p, y, 3, low, 15.0);
  CHECK(e.empty);
  CHECK(e.total == 0);
  const std::vector<std::size_t> bad{0, 0, 3, 1, 1};
  CHECK_THROWS_AS(confusion_matrix(bad, y, 3), LabelError);
  CHECK_THROWS_AS(confusion_matrix(std::span(p).first(2), y, 3), ShapeError);
}

TEST_CASE("natural evaluation has no adversarial effect") {
  const auto& f = fixture::trained();
  const auto idx = some_test(200);
  const auto r = eval_robustness(f.model, f.ds, idx, std::nullopt);
  CHECK(r.adv_predictions == r.clean_predictions);
  CHECK(r.adv_accuracy == r.clean_accuracy);
  CHECK(r.fooling_rate == 0.0);
  CHECK(r.clean_accuracy == doctest::Approx(accuracy_on(f.model, f.ds, idx)));
  const auto s = eval_security(f.model, f.ds, idx, std::nullopt, 20.0, 3);
  CHECK(s.clean_accuracy == r.clean_accuracy);
}

TEST_CASE("constant classifier") {
  const auto& f = fixture::trained();
  const auto m = constant_model(2);
  const auto idx = f.ds.indices(Split::test);
  const auto r = eval_robustness(m, f.ds, idx, AttackConfig::fgsm_at(10));
  CHECK(r.clean_accuracy == doctest::Approx(1.0 / 8.0));
  CHECK(r.adv_accuracy == doctest::Approx(1.0 / 8.0));
  CHECK(r.fooling_rate == 0.0);
  CHECK(r.error_rate == doctest::Approx(7.0 / 8.0));
  for (std::size_t t = 0; t < 8; ++t) CHECK(r.confusion.rate(t, 2) == 1.0);
}

TEST_CASE("security with a noiseless channel equals robustness") {
  const auto& f = fixture::trained();
  const auto idx = some_test(200);
  const auto atk = AttackConfig::pga_eval(20);
  const auto r = eval_robustness(f.model, f.ds, idx, atk);
  const auto s = eval_security(f.model, f.ds, idx, atk, 200.0, 1);
  CHECK(std::abs(r.adv_accuracy - s.adv_accuracy) <= 0.005);
  CHECK(r.adv_accuracy < 0.5 * r.clean_accuracy);
  CHECK(r.framework == Framework::robustness);
  CHECK(s.framework == Framework::security);

  EvalConfig cfg;
  cfg.framework = Framework::security;
  cfg.attack = atk;
  cfg.channel_snr_db = 20.0;
  cfg.channel_seed = 4;
  const auto a = evaluate(f.model, f.ds, idx, cfg);
  const auto b = evaluate(f.model, f.ds, idx, cfg);
  CHECK(a.adv_predictions == b.adv_predictions);
  CHECK(eval_config_from_json(to_json(cfg)).channel_seed == 4);
  const auto j = to_json(a, f.ds.class_names);
  CHECK(j.at("framework") == "security");
  CHECK(j.at("confusion_counts").size() == 8);
}

TEST_CASE("spr grid") {
  const auto& f = fixture::trained();
  const auto idx = some_test(64);
  const auto c = constant_model(0);
  GridOptions opt;
  opt.iterations = 3;
  const auto g = spr_grid({{"trained", &f.model}, {"constant", &c}}, f.ds, idx, opt);
  CHECK(g.regimes.size() == 2);
  CHECK(g.test_sprs.size() == 4);
  CHECK(g.accuracy.size() == 2 * 2 * 4);
  CHECK(g.at(0, 0, 0) == doctest::Approx(accuracy_on(f.model, f.ds, idx)));
  CHECK(g.at(1, 0, 0) == g.at(0, 0, 0));
  CHECK(g.at(0, 0, 3) <= g.at(0, 0, 1));
  const auto csv = g.to_csv();
  CHECK(csv.rfind("framework,train_regime,Natural,25dB,20dB,15dB", 0) == 0);
  CHECK(g.to_json().at("security").at("constant").size() == 4);

  const std::map<std::string, std::filesystem::path> missing{{"adv15", "/nonexistent/adv15.ckpt"}};
  try {
    spr_grid(missing, f.ds, idx, opt);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("adv15") != std::string::npos);
  }
}

TEST_CASE("framework names") {
  CHECK(framework_from_name("robustness") == Framework::robustness);
  CHECK(std::string(framework_name(Framework::security)) == "security");
  CHECK_THROWS_AS(framework_from_name("x"), ConfigError);
}
