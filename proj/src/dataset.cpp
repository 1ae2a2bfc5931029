#include "advamc/dataset.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "advamc/binary_io.hpp"
#include "advamc/error.hpp"
#include "advamc/parallel.hpp"
#include "advamc/rng.hpp"

namespace advamc {
namespace {

using json = nlohmann::json;

constexpr char kMagic[8] = {'A', 'M', 'C', 'D', 'S', 'E', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kFloatWidth = 4;
constexpr std::size_t kHeaderSize = 32;

// Stream-key tags so generation, splitting and shuffling never share streams.
constexpr std::uint64_t kGenerateTag = 0x67656e;
constexpr std::uint64_t kSplitTag = 0x73706c;

json spec_to_json(const DatasetSpec& s) {
  return {{"schemes", s.schemes},
          {"signals_per_class", s.signals_per_class},
          {"samples_per_signal", s.samples_per_signal},
          {"samples_per_symbol", s.samples_per_symbol},
          {"snr_db", s.snr_db},
          {"seed", s.seed}};
}

DatasetSpec spec_from_json(const json& j) {
  DatasetSpec s;
  s.schemes = j.at("schemes").get<std::vector<std::string>>();
  s.signals_per_class = j.at("signals_per_class").get<std::size_t>();
  s.samples_per_signal = j.at("samples_per_signal").get<std::size_t>();
  s.samples_per_symbol = j.at("samples_per_symbol").get<std::size_t>();
  s.snr_db = j.at("snr_db").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

}  // namespace

DatasetSpec crml_tiny_spec(std::uint64_t seed) {
  return {{"OOK", "BPSK", "QPSK", "8PSK", "4ASK", "16QAM", "64QAM", "16APSK"}, 500, 256, 8, 20.0, seed};
}

DatasetSpec crml2018_spec(std::uint64_t seed) { return {supported_schemes(), 10000, 1024, 8, 20.0, seed}; }

void validate(const DatasetSpec& spec) {
  if (spec.schemes.empty()) throw ConfigError("dataset needs at least one scheme");
  for (const auto& s : spec.schemes)
    if (!is_supported_scheme(s)) throw UnsupportedScheme("unsupported modulation scheme '" + s + "'");
  for (std::size_t a = 0; a < spec.schemes.size(); ++a)
    for (std::size_t b = a + 1; b < spec.schemes.size(); ++b)
      if (spec.schemes[a] == spec.schemes[b]) throw ConfigError("scheme '" + spec.schemes[a] + "' listed twice");
  if (spec.signals_per_class < 1) throw ConfigError("signals_per_class must be >= 1");
  if (spec.samples_per_symbol < 1) throw ConfigError("samples_per_symbol must be >= 1");
  if (spec.samples_per_signal < 1 || spec.samples_per_signal % spec.samples_per_symbol != 0) {
    throw ConfigError("samples_per_signal must be a positive multiple of samples_per_symbol");
  }
  if (!std::isfinite(spec.snr_db)) throw ConfigError("snr_db must be finite");
}

const char* split_name(Split s) {
  switch (s) {
    case Split::none: return "none";
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

std::vector<std::size_t> LabeledDataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < split_tags.size(); ++k)
    if (split_tags[k] == s) out.push_back(k);
  return out;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> idx) const {
  LabeledDataset out;
  out.class_names = class_names;
  out.spec = spec;
  for (std::size_t k : idx) {
    out.signals.push_back(signals.at(k));
    out.labels.push_back(labels.at(k));
    out.split_tags.push_back(split_tags.at(k));
  }
  return out;
}

LabeledDataset generate(const DatasetSpec& spec) {
  validate(spec);
  const std::size_t n_classes = spec.schemes.size();
  const std::size_t per = spec.signals_per_class;
  const std::size_t n_sym = spec.samples_per_signal / spec.samples_per_symbol;

  std::vector<Constellation> alphabets;
  for (const auto& s : spec.schemes) alphabets.push_back(constellation(s));

  LabeledDataset ds;
  ds.spec = spec;
  ds.class_names = spec.schemes;
  ds.signals.resize(n_classes * per);
  ds.labels.resize(n_classes * per);
  ds.split_tags.assign(n_classes * per, Split::none);

  parallel_for(n_classes * per, [&](std::size_t k) {
    const std::size_t c = k / per;
    const std::size_t j = k % per;
    Rng rng(spec.seed, {kGenerateTag, c, j});
    std::vector<SymbolIndex> symbols(n_sym);
    for (auto& s : symbols) s = static_cast<SymbolIndex>(rng.uniform_index(alphabets[c].size()));
    const IqSignal clean = modulate(alphabets[c], symbols, spec.samples_per_symbol);
    // An all-zero OOK draw has no power of its own; fall back to the
    // alphabet's unit average power.
    const double p = average_power(clean);
    ds.signals[k] = apply_awgn_referenced(clean, spec.snr_db, p > 0.0 ? p : 1.0, rng);
    ds.labels[k] = c;
  });
  return ds;
}

LabeledDataset split(LabeledDataset ds, double train_frac, double val_frac_of_train, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw InvalidSplit("train_frac must be in (0, 1)");
  if (!(val_frac_of_train >= 0.0 && val_frac_of_train < 1.0)) throw InvalidSplit("val_frac_of_train must be in [0, 1)");
  for (std::size_t c = 0; c < ds.n_classes(); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t k = 0; k < ds.size(); ++k)
      if (ds.labels[k] == c) members.push_back(k);
    Rng rng(seed, {kSplitTag, c});
    shuffle(members.begin(), members.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(members.size())));
    const auto n_val = static_cast<std::size_t>(std::llround(val_frac_of_train * static_cast<double>(n_train)));
    for (std::size_t r = 0; r < members.size(); ++r) {
      ds.split_tags[members[r]] = r < n_val ? Split::val : (r < n_train ? Split::train : Split::test);
    }
  }
  return ds;
}

std::vector<std::uint8_t> serialize(const LabeledDataset& ds) {
  const std::size_t n = ds.size();
  if (ds.labels.size() != n || ds.split_tags.size() != n) throw DataError("dataset arrays differ in length");
  const std::size_t len = n ? ds.signals[0].size() : 0;
  const std::size_t n_sym = n ? ds.signals[0].symbol_indices.size() : 0;
  json labels = json::array(), tags = json::array(), snr = json::array(), sps = json::array();
  for (std::size_t k = 0; k < n; ++k) {
    const auto& s = ds.signals[k];
    if (s.i.size() != len || s.q.size() != len) throw DataError("all signals must share one length");
    if (s.symbol_indices.size() != n_sym) throw DataError("all signals must carry the same number of symbols");
    labels.push_back(ds.labels[k]);
    tags.push_back(static_cast<int>(ds.split_tags[k]));
    snr.push_back(s.snr_db ? json(*s.snr_db) : json(nullptr));
    sps.push_back(s.samples_per_symbol);
  }
  const json meta{{"class_names", ds.class_names}, {"spec", spec_to_json(ds.spec)},
                  {"labels", labels},              {"split_tags", tags},
                  {"snr_db", snr},                 {"samples_per_symbol", sps}};
  const std::string text = meta.dump();

  io::Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.le<std::uint32_t>(kVersion);
  w.le<std::uint32_t>(kFloatWidth);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(n));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(len));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(n_sym));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  for (const auto& s : ds.signals) {
    for (float v : s.i) w.f32(v);
    for (float v : s.q) w.f32(v);
  }
  for (const auto& s : ds.signals)
    for (SymbolIndex v : s.symbol_indices) w.le<std::uint16_t>(v);
  w.text(text);
  return w.buffer();
}

LabeledDataset deserialize(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  r.need(kHeaderSize, "header");
  const auto magic = r.bytes(sizeof kMagic, "header");
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw FormatError("bad dataset magic", 0);
  const auto version = r.le<std::uint32_t>("header");
  if (version != kVersion) {
    throw VersionError("dataset format version " + std::to_string(version) + " unsupported (expected " +
                       std::to_string(kVersion) + ")");
  }
  const auto width = r.le<std::uint32_t>("header");
  if (width != kFloatWidth) throw FormatError("unsupported float width " + std::to_string(width), 12);
  const std::size_t n = r.le<std::uint32_t>("header");
  const std::size_t len = r.le<std::uint32_t>("header");
  const std::size_t n_sym = r.le<std::uint32_t>("header");
  const std::size_t meta_len = r.le<std::uint32_t>("header");

  LabeledDataset ds;
  ds.signals.resize(n);
  for (auto& s : ds.signals) {
    s.i.resize(len);
    s.q.resize(len);
    for (auto& v : s.i) v = r.f32("sample block");
    for (auto& v : s.q) v = r.f32("sample block");
  }
  for (auto& s : ds.signals) {
    s.symbol_indices.resize(n_sym);
    for (auto& v : s.symbol_indices) v = r.le<std::uint16_t>("symbol block");
  }
  const std::size_t meta_offset = r.offset();
  const std::string text = r.text(meta_len, "metadata");
  if (r.remaining() != 0) throw FormatError("trailing bytes after metadata", r.offset());

  try {
    const json meta = json::parse(text);
    ds.class_names = meta.at("class_names").get<std::vector<std::string>>();
    ds.spec = spec_from_json(meta.at("spec"));
    const auto& labels = meta.at("labels");
    const auto& tags = meta.at("split_tags");
    const auto& snr = meta.at("snr_db");
    const auto& sps = meta.at("samples_per_symbol");
    if (labels.size() != n || tags.size() != n || snr.size() != n || sps.size() != n) {
      throw FormatError("metadata arrays do not match signal count", meta_offset);
    }
    for (std::size_t k = 0; k < n; ++k) {
      const auto y = labels[k].get<std::size_t>();
      if (y >= ds.class_names.size()) throw FormatError("label out of range in metadata", meta_offset);
      ds.labels.push_back(y);
      const int t = tags[k].get<int>();
      if (t < 0 || t > 3) throw FormatError("bad split tag in metadata", meta_offset);
      ds.split_tags.push_back(static_cast<Split>(t));
      if (!snr[k].is_null()) ds.signals[k].snr_db = snr[k].get<double>();
      ds.signals[k].samples_per_symbol = sps[k].get<std::size_t>();
    }
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("metadata is not valid JSON: ") + e.what(), meta_offset + e.byte);
  } catch (const json::exception& e) {
    throw FormatError(std::string("metadata schema error: ") + e.what(), meta_offset);
  }
  return ds;
}

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path) { io::write_file(path, serialize(ds)); }

LabeledDataset load_dataset(const std::filesystem::path& path) { return deserialize(io::read_file(path)); }

ad::TensorPtr<float> to_batch(std::span<const IqSignal> signals) {
  const std::size_t n = signals.empty() ? 0 : signals[0].size();
  auto t = ad::make_tensor<float>({signals.size(), 2, n});
  for (std::size_t b = 0; b < signals.size(); ++b) {
    const auto& s = signals[b];
    if (s.size() != n || s.q.size() != n) throw ShapeError("batch signals differ in length");
    std::copy(s.i.begin(), s.i.end(), t->data.begin() + static_cast<std::ptrdiff_t>(b * 2 * n));
    std::copy(s.q.begin(), s.q.end(), t->data.begin() + static_cast<std::ptrdiff_t>(b * 2 * n + n));
  }
  return t;
}

ad::TensorPtr<float> to_batch(const std::vector<IqSignal>& signals, std::span<const std::size_t> idx) {
  std::vector<IqSignal> picked;
  picked.reserve(idx.size());
  for (std::size_t k : idx) picked.push_back(signals.at(k));
  return to_batch(picked);
}

IqSignal from_batch_row(const ad::Tensor<float>& batch, std::size_t b, std::size_t samples_per_symbol) {
  if (batch.shape.size() != 3 || batch.shape[1] != 2) throw ShapeError("expected a [B,2,N] batch");
  const std::size_t n = batch.shape[2];
  IqSignal s;
  const auto base = batch.data.begin() + static_cast<std::ptrdiff_t>(b * 2 * n);
  s.i.assign(base, base + static_cast<std::ptrdiff_t>(n));
  s.q.assign(base + static_cast<std::ptrdiff_t>(n), base + static_cast<std::ptrdiff_t>(2 * n));
  s.samples_per_symbol = samples_per_symbol;
  return s;
}

double empirical_snr_db(const LabeledDataset& ds, std::size_t max_signals) {
  const std::size_t n = std::min(max_signals, ds.size());
  if (n == 0) throw DataError("empirical SNR of an empty dataset");
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& s = ds.signals[k];
    const auto clean = modulate(constellation(ds.class_names[ds.labels[k]]), s.symbol_indices, s.samples_per_symbol);
    double ps = 0.0, pn = 0.0;
    for (std::size_t t = 0; t < s.size(); ++t) {
      const double di = static_cast<double>(s.i[t]) - clean.i[t];
      const double dq = static_cast<double>(s.q[t]) - clean.q[t];
      ps += static_cast<double>(clean.i[t]) * clean.i[t] + static_cast<double>(clean.q[t]) * clean.q[t];
      pn += di * di + dq * dq;
    }
    acc += 10.0 * std::log10(ps / pn);
  }
  return acc / static_cast<double>(n);
}

}  // namespace advamc
