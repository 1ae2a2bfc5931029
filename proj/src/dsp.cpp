#include "advamc/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "advamc/error.hpp"

namespace advamc {
namespace {

std::vector<cdouble> normalized(std::vector<cdouble> pts) {
  double power = 0.0;
  for (const auto& p : pts) power += std::norm(p);
  power /= static_cast<double>(pts.size());
  const double g = 1.0 / std::sqrt(power);
  for (auto& p : pts) p *= g;
  return pts;
}

std::vector<cdouble> pam(int levels) {
  std::vector<cdouble> pts;
  for (int k = 0; k < levels; ++k) pts.emplace_back(2.0 * k - (levels - 1), 0.0);
  return pts;
}

std::vector<cdouble> psk(int m, double offset) {
  std::vector<cdouble> pts;
  for (int k = 0; k < m; ++k) pts.push_back(std::polar(1.0, offset + 2.0 * std::numbers::pi * k / m));
  return pts;
}

// Square grid of odd levels, side x side, with |i| > corner_limit && |q| >
// corner_limit points removed (cross constellations).
std::vector<cdouble> qam(int side, int corner_limit) {
  std::vector<cdouble> pts;
  for (int a = 0; a < side; ++a) {
    for (int b = 0; b < side; ++b) {
      const double i = 2.0 * a - (side - 1);
      const double q = 2.0 * b - (side - 1);
      if (corner_limit > 0 && std::abs(i) > corner_limit && std::abs(q) > corner_limit) continue;
      pts.emplace_back(i, q);
    }
  }
  return pts;
}

struct Ring {
  int points;
  double radius;
};

std::vector<cdouble> apsk(std::initializer_list<Ring> rings) {
  std::vector<cdouble> pts;
  for (const auto& r : rings) {
    const double offset = std::numbers::pi / r.points;
    for (int k = 0; k < r.points; ++k) pts.push_back(std::polar(r.radius, offset + 2.0 * std::numbers::pi * k / r.points));
  }
  return pts;
}

std::vector<cdouble> raw_states(std::string_view s) {
  const double pi = std::numbers::pi;
  if (s == "OOK") return {{0.0, 0.0}, {1.0, 0.0}};
  if (s == "4ASK") return pam(4);
  if (s == "8ASK") return pam(8);
  if (s == "BPSK") return {{-1.0, 0.0}, {1.0, 0.0}};
  if (s == "QPSK") return psk(4, pi / 4);
  if (s == "8PSK") return psk(8, 0.0);
  if (s == "16PSK") return psk(16, 0.0);
  if (s == "32PSK") return psk(32, 0.0);
  if (s == "16APSK") return apsk({{4, 1.0}, {12, 2.57}});
  if (s == "32APSK") return apsk({{4, 1.0}, {12, 2.53}, {16, 4.20}});
  if (s == "64APSK") return apsk({{4, 1.0}, {12, 2.4}, {20, 4.3}, {28, 7.0}});
  if (s == "16QAM") return qam(4, 0);
  if (s == "32QAM") return qam(6, 3);
  if (s == "64QAM") return qam(8, 0);
  if (s == "128QAM") return qam(12, 7);
  if (s == "256QAM") return qam(16, 0);
  throw UnsupportedScheme("unsupported modulation scheme '" + std::string(s) + "'");
}

}  // namespace

const std::vector<std::string>& supported_schemes() {
  static const std::vector<std::string> schemes{"OOK",    "4ASK",   "8ASK",  "BPSK",  "QPSK",   "8PSK",
                                                "16PSK",  "32PSK",  "16APSK", "32APSK", "16QAM", "32QAM",
                                                "64QAM",  "128QAM", "256QAM", "64APSK"};
  return schemes;
}

bool is_supported_scheme(std::string_view scheme) {
  const auto& all = supported_schemes();
  return std::find(all.begin(), all.end(), scheme) != all.end();
}

Constellation constellation(std::string_view scheme) {
  Constellation c;
  c.scheme_name = std::string(scheme);
  c.states = normalized(raw_states(scheme));
  c.bits_per_symbol = static_cast<int>(std::lround(std::log2(static_cast<double>(c.states.size()))));
  return c;
}

IqSignal modulate(const Constellation& c, std::span<const SymbolIndex> symbols, std::size_t samples_per_symbol) {
  if (samples_per_symbol == 0) throw ConfigError("samples_per_symbol must be >= 1");
  IqSignal out;
  out.samples_per_symbol = samples_per_symbol;
  out.i.reserve(symbols.size() * samples_per_symbol);
  out.q.reserve(symbols.size() * samples_per_symbol);
  for (SymbolIndex s : symbols) {
    if (s >= c.states.size()) {
      throw InvalidSymbol("symbol index " + std::to_string(s) + " out of range for " + c.scheme_name);
    }
    const auto si = static_cast<float>(c.states[s].real());
    const auto sq = static_cast<float>(c.states[s].imag());
    out.i.insert(out.i.end(), samples_per_symbol, si);
    out.q.insert(out.q.end(), samples_per_symbol, sq);
  }
  out.symbol_indices.assign(symbols.begin(), symbols.end());
  return out;
}

double average_power(const IqSignal& signal) {
  if (signal.empty()) throw EmptySignal("average_power of an empty signal");
  if (signal.q.size() != signal.i.size()) throw ShapeError("I and Q planes differ in length");
  double acc = 0.0;
  for (std::size_t t = 0; t < signal.i.size(); ++t) {
    const double a = signal.i[t];
    const double b = signal.q[t];
    acc += a * a + b * b;
  }
  return acc / static_cast<double>(signal.i.size());
}

IqSignal apply_awgn_referenced(const IqSignal& signal, double snr_db, double reference_power, Rng& rng) {
  if (!std::isfinite(snr_db)) throw ConfigError("channel SNR must be finite");
  if (!(reference_power > 0.0)) throw ZeroPowerSignal("cannot reference noise to a zero-power signal");
  const double sigma = std::sqrt(reference_power / (2.0 * std::pow(10.0, snr_db / 10.0)));
  IqSignal out = signal;
  for (std::size_t t = 0; t < out.i.size(); ++t) {
    out.i[t] = static_cast<float>(out.i[t] + sigma * rng.normal());
    out.q[t] = static_cast<float>(out.q[t] + sigma * rng.normal());
  }
  out.snr_db = snr_db;
  return out;
}

IqSignal apply_awgn(const IqSignal& signal, double snr_db, Rng& rng) {
  return apply_awgn_referenced(signal, snr_db, average_power(signal), rng);
}

IqSignal apply_channel(const Channel& channel, const IqSignal& signal) {
  Rng rng(channel.seed);
  return apply_awgn(signal, channel.snr_db, rng);
}

double spr_to_epsilon(double signal_power, double spr_db) {
  if (!(signal_power > 0.0)) throw ZeroPowerSignal("SPR budget of a zero-power signal");
  return std::sqrt(signal_power / (2.0 * std::pow(10.0, spr_db / 10.0)));
}

double spr_to_epsilon(const IqSignal& signal, double spr_db) { return spr_to_epsilon(average_power(signal), spr_db); }

double measured_spr(const IqSignal& signal, const IqSignal& delta) {
  if (signal.size() != delta.size()) throw ShapeError("signal and perturbation lengths differ");
  const double pd = average_power(delta);
  if (!(pd > 0.0)) throw ZeroPowerPerturbation("measured_spr of a zero-power perturbation");
  return 10.0 * std::log10(average_power(signal) / pd);
}

std::vector<cdouble> symbol_estimates(const IqSignal& signal) {
  const std::size_t sps = signal.samples_per_symbol;
  if (sps == 0 || signal.size() % sps != 0) throw ShapeError("signal length is not a multiple of samples_per_symbol");
  const std::size_t n_sym = signal.size() / sps;
  std::vector<cdouble> est(n_sym);
  for (std::size_t k = 0; k < n_sym; ++k) {
    double si = 0.0, sq = 0.0;
    for (std::size_t t = k * sps; t < (k + 1) * sps; ++t) {
      si += signal.i[t];
      sq += signal.q[t];
    }
    est[k] = {si / static_cast<double>(sps), sq / static_cast<double>(sps)};
  }
  return est;
}

}  // namespace advamc
