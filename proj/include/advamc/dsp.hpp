#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advamc/rng.hpp"

namespace advamc {

using cdouble = std::complex<double>;
using SymbolIndex = std::uint16_t;

/// A digital modulation alphabet, normalized to unit average symbol power.
struct Constellation {
  std::string scheme_name;
  std::vector<cdouble> states;
  int bits_per_symbol = 0;

  std::size_t size() const noexcept { return states.size(); }
};

/// Complex baseband time series held as separate I and Q planes.
struct IqSignal {
  std::vector<float> i;
  std::vector<float> q;
  std::size_t samples_per_symbol = 1;
  std::vector<SymbolIndex> symbol_indices;  // empty when unknown
  std::optional<double> snr_db;

  std::size_t size() const noexcept { return i.size(); }
  bool empty() const noexcept { return i.empty(); }

  friend bool operator==(const IqSignal&, const IqSignal&) = default;
};

struct Channel {
  enum class Kind { awgn };
  Kind kind = Kind::awgn;
  double snr_db = 20.0;
  std::uint64_t seed = 0;
};

/// The sixteen digital schemes understood by constellation(), in canonical order.
const std::vector<std::string>& supported_schemes();
bool is_supported_scheme(std::string_view scheme);

/// Throws UnsupportedScheme for names outside supported_schemes().
Constellation constellation(std::string_view scheme);

/// Rectangular (NRZ) pulse: every state is held for samples_per_symbol samples.
IqSignal modulate(const Constellation& c, std::span<const SymbolIndex> symbols, std::size_t samples_per_symbol);

/// (1/N) sum(i^2 + q^2). Throws EmptySignal when N == 0.
double average_power(const IqSignal& signal);

/// Adds circular AWGN with per-component variance P / (2 * 10^(snr/10)),
/// P measured on the input. Output is tagged with snr_db.
IqSignal apply_awgn(const IqSignal& signal, double snr_db, Rng& rng);

/// Same as apply_awgn, but the noise power is set relative to
/// reference_power instead of the input's own power.
IqSignal apply_awgn_referenced(const IqSignal& signal, double snr_db, double reference_power, Rng& rng);

IqSignal apply_channel(const Channel& channel, const IqSignal& signal);

/// Per-component l-infinity radius for a perturbation budget of spr_db
/// relative to the signal: eps = sqrt(P / (2 * 10^(spr/10))). A perturbation
/// saturated at +-eps on every I and Q sample has exactly the nominal SPR.
double spr_to_epsilon(double signal_power, double spr_db);
double spr_to_epsilon(const IqSignal& signal, double spr_db);

/// 10 log10(P_signal / P_delta) in dB.
double measured_spr(const IqSignal& signal, const IqSignal& delta);

/// Mean of the samples within each symbol interval (sufficient statistic
/// for NRZ + AWGN). Throws ShapeError if N is not a multiple of sps.
std::vector<cdouble> symbol_estimates(const IqSignal& signal);

}  // namespace advamc
