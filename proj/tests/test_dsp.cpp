#include <doctest.h>

#include <cmath>
#include <set>

#include "advamc/dsp.hpp"
#include "advamc/error.hpp"

using namespace advamc;

namespace {

IqSignal iq(std::vector<float> i, std::vector<float> q) {
  IqSignal s;
  s.i = std::move(i);
  s.q = std::move(q);
  return s;
}

}  // namespace

TEST_CASE("every supported constellation has unit power and distinct states") {
  CHECK(supported_schemes().size() == 16);
  for (const auto& name : supported_schemes()) {
    const auto c = constellation(name);
    double p = 0.0;
    for (const auto& s : c.states) p += std::norm(s);
    CHECK(std::abs(p / static_cast<double>(c.size()) - 1.0) < 1e-12);
    for (std::size_t a = 0; a < c.size(); ++a)
      for (std::size_t b = a + 1; b < c.size(); ++b) CHECK(std::abs(c.states[a] - c.states[b]) > 1e-6);
    if (name != "OOK") CHECK(c.size() == (std::size_t{1} << c.bits_per_symbol));
  }
}

TEST_CASE("constellation sizes") {
  const std::pair<const char*, std::size_t> sizes[] = {
      {"OOK", 2},     {"4ASK", 4},   {"8ASK", 8},   {"BPSK", 2},    {"QPSK", 4},   {"8PSK", 8},
      {"16PSK", 16},  {"32PSK", 32}, {"16APSK", 16}, {"32APSK", 32}, {"64APSK", 64}, {"16QAM", 16},
      {"32QAM", 32},  {"64QAM", 64}, {"128QAM", 128}, {"256QAM", 256}};
  for (const auto& [n, k] : sizes) CHECK(constellation(n).size() == k);
}

TEST_CASE("BPSK and QPSK states") {
  const auto b = constellation("BPSK");
  REQUIRE(b.size() == 2);
  CHECK(b.states[0] == cdouble(-1.0, 0.0));
  CHECK(b.states[1] == cdouble(1.0, 0.0));
  const auto q = constellation("QPSK");
  for (const auto& s : q.states) {
    CHECK(std::abs(std::abs(s.real()) - 1.0 / std::sqrt(2.0)) < 1e-15);
    CHECK(std::abs(std::abs(s.imag()) - 1.0 / std::sqrt(2.0)) < 1e-15);
    CHECK(std::abs(std::norm(s) - 1.0) < 1e-15);
  }
}

TEST_CASE("16QAM is the odd grid scaled by 1/sqrt(mean power)") {
  // Enumerate the unscaled grid and its mean power independently.
  double acc = 0.0;
  std::set<std::pair<long, long>> expected;
  for (int i : {-3, -1, 1, 3})
    for (int q : {-3, -1, 1, 3}) {
      acc += i * i + q * q;
      expected.insert({i, q});
    }
  const double mean = acc / 16.0;
  CHECK(mean == doctest::Approx(10.0));
  std::set<std::pair<long, long>> got;
  for (const auto& s : constellation("16QAM").states) {
    got.insert({std::lround(s.real() * std::sqrt(mean)), std::lround(s.imag() * std::sqrt(mean))});
    CHECK(std::abs(s.real() * std::sqrt(mean) - std::round(s.real() * std::sqrt(mean))) < 1e-12);
  }
  CHECK(got == expected);
}

TEST_CASE("unknown scheme") {
  CHECK_THROWS_AS(constellation("GMSK"), UnsupportedScheme);
  CHECK_FALSE(is_supported_scheme("AM-DSB"));
}

TEST_CASE("modulate holds each state for sps samples") {
  const std::vector<SymbolIndex> sym{0, 1};
  const auto s = modulate(constellation("BPSK"), sym, 2);
  CHECK(s.i == std::vector<float>{-1, -1, 1, 1});
  CHECK(s.q == std::vector<float>{0, 0, 0, 0});
  CHECK(s.symbol_indices == sym);

  const std::vector<SymbolIndex> many(128, 3);
  CHECK(modulate(constellation("16QAM"), many, 8).size() == 1024);

  const std::vector<SymbolIndex> bad{2};
  CHECK_THROWS_AS(modulate(constellation("BPSK"), bad, 1), InvalidSymbol);
}

TEST_CASE("symbol centers recover the transmitted states") {
  const auto c = constellation("32APSK");
  std::vector<SymbolIndex> sym;
  for (SymbolIndex k = 0; k < 32; ++k) sym.push_back(k);
  const auto s = modulate(c, sym, 8);
  for (std::size_t k = 0; k < sym.size(); ++k) {
    CHECK(s.i[k * 8 + 4] == static_cast<float>(c.states[k].real()));
    CHECK(s.q[k * 8 + 4] == static_cast<float>(c.states[k].imag()));
  }
  const auto est = symbol_estimates(s);
  for (std::size_t k = 0; k < sym.size(); ++k) CHECK(std::abs(est[k] - c.states[k]) < 1e-6);
}

TEST_CASE("QPSK Monte Carlo power") {
  Rng rng(3);
  std::vector<SymbolIndex> sym(100000);
  for (auto& s : sym) s = static_cast<SymbolIndex>(rng.uniform_index(4));
  CHECK(std::abs(average_power(modulate(constellation("QPSK"), sym, 1)) - 1.0) < 0.01);
}

TEST_CASE("average_power") {
  CHECK(average_power(iq({1, 1}, {0, 0})) == 1.0);
  CHECK(average_power(iq({0, 0}, {0, 0})) == 0.0);
  CHECK(average_power(iq({3}, {4})) == 25.0);
  CHECK_THROWS_AS(average_power(IqSignal{}), EmptySignal);
}

TEST_CASE("AWGN variance and empirical SNR") {
  const std::vector<SymbolIndex> sym(1000000, 1);
  auto s = modulate(constellation("BPSK"), sym, 1);
  Rng rng(17);
  const auto noisy = apply_awgn(s, 20.0, rng);
  REQUIRE(noisy.snr_db);
  CHECK(*noisy.snr_db == 20.0);
  double ni = 0.0, nq = 0.0;
  for (std::size_t t = 0; t < s.size(); ++t) {
    ni += std::pow(noisy.i[t] - s.i[t], 2);
    nq += std::pow(noisy.q[t] - s.q[t], 2);
  }
  ni /= static_cast<double>(s.size());
  nq /= static_cast<double>(s.size());
  CHECK(ni == doctest::Approx(0.005).epsilon(0.01));
  CHECK(nq == doctest::Approx(0.005).epsilon(0.01));
  CHECK(std::abs(10.0 * std::log10(1.0 / (ni + nq)) - 20.0) < 0.05);
}

TEST_CASE("AWGN at 100 dB barely moves samples") {
  const std::vector<SymbolIndex> sym(10000, 0);
  const auto s = modulate(constellation("QPSK"), sym, 1);
  Rng rng(2);
  const auto n = apply_awgn(s, 100.0, rng);
  std::size_t far = 0;
  for (std::size_t t = 0; t < s.size(); ++t) far += std::abs(n.i[t] - s.i[t]) > 1e-4 || std::abs(n.q[t] - s.q[t]) > 1e-4;
  CHECK(far <= 10);
}

TEST_CASE("AWGN is reproducible and rejects zero power") {
  const std::vector<SymbolIndex> sym(64, 1);
  const auto s = modulate(constellation("8PSK"), sym, 4);
  Rng a(9), b(9);
  CHECK(apply_awgn(s, 10.0, a) == apply_awgn(s, 10.0, b));
  CHECK(apply_channel({Channel::Kind::awgn, 10.0, 4}, s) == apply_channel({Channel::Kind::awgn, 10.0, 4}, s));
  Rng c(1);
  CHECK_THROWS_AS(apply_awgn(iq({0, 0}, {0, 0}), 20.0, c), ZeroPowerSignal);
}

TEST_CASE("SPR to per-component radius") {
  // Saturated +-eps on I and Q gives perturbation power 2 eps^2 = P / 10^(spr/10).
  CHECK(spr_to_epsilon(1.0, 20.0) == doctest::Approx(0.07071067811865475).epsilon(1e-14));
  CHECK(spr_to_epsilon(1.0, 0.0) == doctest::Approx(0.7071067811865476).epsilon(1e-14));
  CHECK(spr_to_epsilon(4.0, 20.0) == doctest::Approx(0.1414213562373095).epsilon(1e-14));
  CHECK_THROWS_AS(spr_to_epsilon(iq({0}, {0}), 20.0), ZeroPowerSignal);
}

TEST_CASE("measured_spr") {
  const auto x = iq({1, 1}, {0, 0});
  CHECK(measured_spr(x, iq({0.1f, 0.1f}, {0, 0})) == doctest::Approx(20.0).epsilon(1e-6));
  CHECK(measured_spr(x, iq({1, 1}, {0, 0})) == doctest::Approx(0.0));
  CHECK_THROWS_AS(measured_spr(x, iq({0, 0}, {0, 0})), ZeroPowerPerturbation);
  CHECK_THROWS_AS(measured_spr(x, iq({1}, {0})), ShapeError);
}

TEST_CASE("saturated perturbation meets the SPR exactly, anything inside exceeds it") {
  const std::vector<SymbolIndex> sym{0, 1, 2, 3, 2, 1};
  const auto x = modulate(constellation("QPSK"), sym, 4);
  const double eps = spr_to_epsilon(x, 20.0);
  IqSignal d;
  Rng rng(1);
  for (std::size_t t = 0; t < x.size(); ++t) {
    d.i.push_back(static_cast<float>(rng.uniform() < 0.5 ? -eps : eps));
    d.q.push_back(static_cast<float>(rng.uniform() < 0.5 ? -eps : eps));
  }
  CHECK(measured_spr(x, d) == doctest::Approx(20.0).epsilon(1e-6));
  for (auto& v : d.i) v *= 0.5f;
  CHECK(measured_spr(x, d) > 20.0);
}
