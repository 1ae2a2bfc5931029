#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "advamc/analysis.hpp"
#include "advamc/error.hpp"
#include "fixture.hpp"

using namespace advamc;

namespace {

IqSignal noisy(const std::string& scheme, std::size_t n_sym, std::size_t sps, double sigma2, std::uint64_t seed) {
  const auto c = constellation(scheme);
  Rng rng(seed);
  std::vector<SymbolIndex> sy(n_sym);
  for (auto& s : sy) s = static_cast<SymbolIndex>(rng.uniform_index(c.size()));
  auto x = modulate(c, sy, sps);
  const double sd = std::sqrt(sigma2);
  for (std::size_t t = 0; t < x.size(); ++t) {
    x.i[t] += static_cast<float>(sd * rng.normal());
    x.q[t] += static_cast<float>(sd * rng.normal());
  }
  return x;
}

/// log p(x | class) summed over every symbol sequence, from per-sample
/// Gaussian densities (constant factors dropped).
double brute_force_log_likelihood(const IqSignal& x, const Constellation& c, std::size_t sps, double sigma2) {
  const std::size_t n_sym = x.size() / sps;
  std::size_t n_seq = 1;
  for (std::size_t k = 0; k < n_sym; ++k) n_seq *= c.size();
  std::vector<double> logs;
  for (std::size_t code = 0; code < n_seq; ++code) {
    std::size_t rest = code;
    double lp = -static_cast<double>(n_sym) * std::log(static_cast<double>(c.size()));
    for (std::size_t k = 0; k < n_sym; ++k) {
      const auto s = c.states[rest % c.size()];
      rest /= c.size();
      for (std::size_t t = k * sps; t < (k + 1) * sps; ++t) {
        const double di = x.i[t] - s.real(), dq = x.q[t] - s.imag();
        lp -= (di * di + dq * dq) / (2.0 * sigma2);
      }
    }
    logs.push_back(lp);
  }
  const double m = *std::max_element(logs.begin(), logs.end());
  double acc = 0.0;
  for (double v : logs) acc += std::exp(v - m);
  return m + std::log(acc);
}

IqSignal constant_signal(cdouble v, std::size_t n_sym, std::size_t sps) {
  IqSignal s;
  s.samples_per_symbol = sps;
  s.i.assign(n_sym * sps, static_cast<float>(v.real()));
  s.q.assign(n_sym * sps, static_cast<float>(v.imag()));
  return s;
}

}  // namespace

TEST_CASE("ML classifier matches exhaustive enumeration") {
  const std::vector<std::string> schemes{"BPSK", "QPSK", "4ASK", "OOK", "8PSK"};
  for (std::size_t trial = 0; trial < 40; ++trial) {
    const std::size_t sps = 1 + trial % 3;
    const double snr = 2.0 + static_cast<double>(trial % 5) * 3.0;
    const auto prior = ml_prior(schemes, snr, sps);
    const auto x = noisy(schemes[trial % schemes.size()], 3, sps, prior.noise_variance, 100 + trial);
    std::vector<double> bf;
    for (const auto& c : prior.candidates) bf.push_back(brute_force_log_likelihood(x, c, sps, prior.noise_variance));
    const auto d = ml_classify(x, prior);
    const auto best = static_cast<std::size_t>(std::max_element(bf.begin(), bf.end()) - bf.begin());
    CHECK(d.predicted == best);
    for (std::size_t c = 1; c < bf.size(); ++c) {
      CHECK(d.log_likelihoods[c] - d.log_likelihoods[0] == doctest::Approx(bf[c] - bf[0]).epsilon(1e-6));
    }
  }
}

TEST_CASE("ML classifier on clean and single-symbol signals") {
  const std::vector<std::string> two{"BPSK", "QPSK"};
  const auto prior = ml_prior(two, 20.0, 4);
  CHECK(prior.noise_variance == doctest::Approx(0.005));
  const auto bpsk = constellation("BPSK");
  const SymbolIndex sy[] = {0, 1, 1, 0, 1};
  CHECK(ml_classify(modulate(bpsk, sy, 4), prior).predicted == 0);
  const auto qpsk = constellation("QPSK");
  CHECK(ml_classify(modulate(qpsk, sy, 4), prior).predicted == 1);
  const SymbolIndex one[] = {2};
  CHECK(ml_classify(modulate(qpsk, one, 4), prior).predicted == 1);

  CHECK_THROWS_AS(ml_classify(constant_signal({1, 0}, 1, 3), prior), ShapeError);
  CHECK_THROWS_AS(ml_prior(two, 20.0, 0), ConfigError);
  MlModelPrior empty;
  empty.noise_variance = 1.0;
  CHECK_THROWS_AS(empty.validate(), ConfigError);
}

TEST_CASE("nearest state and distance") {
  const auto bpsk = constellation("BPSK");
  CHECK(nearest_state(bpsk, {0.2, 5.0}) == 1);
  CHECK(nearest_state(bpsk, {0.0, 0.0}) == 0);
  const cdouble pts[] = {{1.0, 0.0}, {-0.5, 0.0}};
  CHECK(mean_distance_to_states(pts, bpsk) == doctest::Approx(0.25));
}

TEST_CASE("oracle perturbation moves QPSK onto BPSK") {
  const auto bpsk = constellation("BPSK");
  const auto x = constant_signal({1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)}, 4, 8);
  const auto full = oracle_targeted_perturbation(x, bpsk, 1.0);
  CHECK(full.delta.i[0] == doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-6));
  CHECK(full.delta.q[13] == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-6));

  const double eps = 0.1;
  const auto g = oracle_targeted_perturbation(x, bpsk, eps, BudgetMode::global_scale);
  const auto c = oracle_targeted_perturbation(x, bpsk, eps, BudgetMode::per_symbol_clamp);
  const float e = epsilon_as_float(eps);
  for (std::size_t t = 0; t < x.size(); ++t) {
    CHECK(std::abs(g.delta.i[t]) <= e);
    CHECK(std::abs(g.delta.q[t]) <= e);
    CHECK(std::abs(c.delta.q[t]) <= e);
  }
  CHECK(g.delta.q[0] == doctest::Approx(-eps).epsilon(1e-6));
  CHECK(g.delta.i[0] / g.delta.q[0] == doctest::Approx(-(std::sqrt(2.0) - 1.0)).epsilon(1e-5));
  CHECK(c.delta.i[0] == doctest::Approx(0.1).epsilon(1e-6));
  CHECK_THROWS_AS(oracle_targeted_perturbation(x, Constellation{}, 0.1), ConfigError);
}

TEST_CASE("oracle perturbation never increases the distance to the target") {
  const auto bpsk = constellation("BPSK");
  for (const char* scheme : {"QPSK", "8PSK", "16QAM", "4ASK"}) {
    const auto x = noisy(scheme, 64, 8, 0.005, 7);
    for (double eps : {0.01, 0.07, 0.3}) {
      const auto p = oracle_targeted_perturbation(x, bpsk, eps);
      IqSignal y = x;
      for (std::size_t t = 0; t < x.size(); ++t) {
        y.i[t] += p.delta.i[t];
        y.q[t] += p.delta.q[t];
      }
      const auto a = symbol_estimates(x), b = symbol_estimates(y);
      for (std::size_t k = 0; k < a.size(); ++k) {
        const auto s = bpsk.states[nearest_state(bpsk, a[k])];
        CHECK(std::abs(b[k] - s) <= std::abs(a[k] - s) + 1e-6);
      }
    }
  }
}

TEST_CASE("alignment") {
  const std::vector<float> a{1, 2, 3}, b{-1, -2, -3}, c{2, -1, 0}, z{0, 0, 0};
  CHECK(alignment(a, a) == doctest::Approx(1.0));
  CHECK(alignment(a, b) == doctest::Approx(-1.0));
  CHECK(alignment(a, c) == doctest::Approx(0.0));
  const std::vector<float> a3{3, 6, 9};
  CHECK(alignment(a, a3) == doctest::Approx(1.0));
  CHECK(alignment(c, a) == alignment(a, c));
  CHECK_THROWS_AS(alignment(a, z), ZeroPerturbation);
  CHECK_THROWS_AS(alignment(a, std::span(c).first(2)), ShapeError);

  const auto x = constant_signal({0.5, -0.25}, 4, 8);
  auto y = constant_signal({1.0, -0.5}, 4, 8);
  CHECK(alignment(x, y) == doctest::Approx(1.0));
  CHECK(symbol_shift_alignment(x, y) == doctest::Approx(1.0));
  y.i[0] = 0.0f;
  CHECK(symbol_shift_alignment(x, y) < 1.0);
}

TEST_CASE("constellation export") {
  const auto x = noisy("QPSK", 128, 2, 0.001, 3);
  const auto bpsk = constellation("BPSK");
  const auto p = oracle_targeted_perturbation(x, bpsk, 0.1);
  IqSignal y = x;
  for (std::size_t t = 0; t < x.size(); ++t) {
    y.i[t] += p.delta.i[t];
    y.q[t] += p.delta.q[t];
  }
  const auto stem = std::filesystem::temp_directory_path() / "advamc_constellation";
  const auto plot = constellation_export(x, y, bpsk, stem, "QPSK to BPSK");
  CHECK(plot.original.size() == 128);
  CHECK(mean_distance_to_states(plot.perturbed, bpsk) < mean_distance_to_states(plot.original, bpsk));

  std::ifstream csv(stem.string() + ".csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "symbol_idx,orig_i,orig_q,pert_i,pert_q");
  std::size_t rows = 0;
  while (std::getline(csv, line)) rows += !line.empty();
  CHECK(rows == 128);
  std::ifstream svg(stem.string() + ".svg");
  std::stringstream ss;
  ss << svg.rdbuf();
  CHECK(ss.str().rfind("<svg", 0) == 0);
  CHECK(ss.str().find("</svg>") != std::string::npos);

  const auto short_ = noisy("QPSK", 64, 2, 0.001, 3);
  CHECK_THROWS_AS(constellation_plot(x, short_, bpsk), ShapeError);
}

TEST_CASE("alignment study skips the target class") {
  const auto& f = fixture::trained();
  auto idx = f.ds.indices(Split::test);
  idx.resize(80);
  const auto bpsk = static_cast<std::size_t>(
      std::find(f.ds.class_names.begin(), f.ds.class_names.end(), "BPSK") - f.ds.class_names.begin());
  REQUIRE(bpsk < f.ds.n_classes());
  const auto r = alignment_study(f.model, f.model, f.ds, idx, bpsk, 20.0);
  CHECK(r.target_name == "BPSK");
  CHECK_FALSE(r.samples.empty());
  for (const auto& s : r.samples) {
    CHECK(s.label != bpsk);
    CHECK(s.alignment_standard == s.alignment_robust);
    CHECK(s.alignment_standard >= -1.0);
    CHECK(s.alignment_standard <= 1.0);
    CHECK(s.shift_oracle >= -1e-9);
  }
  CHECK(r.to_json().at("n_signals") == r.samples.size());
}
