#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "advamc/binary_io.hpp"
#include "advamc/dataset.hpp"
#include "advamc/error.hpp"

using namespace advamc;

namespace {

DatasetSpec small_spec(std::uint64_t seed = 4) { return {{"BPSK", "QPSK", "16QAM"}, 20, 64, 8, 20.0, seed}; }

}  // namespace

TEST_CASE("generate sizes and labels") {
  const auto ds = generate(small_spec());
  CHECK(ds.size() == 60);
  CHECK(ds.class_names == std::vector<std::string>{"BPSK", "QPSK", "16QAM"});
  for (std::size_t k = 0; k < ds.size(); ++k) {
    CHECK(ds.labels[k] == k / 20);
    CHECK(ds.signals[k].size() == 64);
    CHECK(ds.signals[k].symbol_indices.size() == 8);
    CHECK(ds.signals[k].snr_db == 20.0);
    CHECK(ds.split_tags[k] == Split::none);
  }

  const auto one = generate({{"BPSK", "OOK"}, 1, 8, 8, 20.0, 1});
  CHECK(one.size() == 2);
  CHECK(one.signals[0].symbol_indices.size() == 1);
}

TEST_CASE("full-scale spec arithmetic") {
  const auto s = crml2018_spec();
  CHECK(s.schemes.size() * s.signals_per_class == 160000);
  CHECK(s.samples_per_signal == 1024);
  const auto t = crml_tiny_spec();
  CHECK(t.schemes == std::vector<std::string>{"OOK", "BPSK", "QPSK", "8PSK", "4ASK", "16QAM", "64QAM", "16APSK"});
  CHECK(t.signals_per_class == 500);
  CHECK(t.samples_per_signal == 256);
}

TEST_CASE("generate is deterministic and seed-sensitive") {
  CHECK(serialize(generate(small_spec())) == serialize(generate(small_spec())));
  CHECK_FALSE(generate(small_spec(4)) == generate(small_spec(5)));
}

TEST_CASE("generated symbols match the clean waveform") {
  const auto ds = generate(small_spec());
  for (std::size_t k : {0u, 25u, 59u}) {
    const auto c = constellation(ds.class_names[ds.labels[k]]);
    const auto clean = modulate(c, ds.signals[k].symbol_indices, 8);
    double err = 0.0;
    for (std::size_t t = 0; t < 64; ++t) err = std::max(err, double(std::abs(clean.i[t] - ds.signals[k].i[t])));
    CHECK(err < 0.5);
  }
}

TEST_CASE("invalid specs") {
  auto s = small_spec();
  s.schemes.push_back("FM");
  CHECK_THROWS_AS(generate(s), UnsupportedScheme);
  s = small_spec();
  s.samples_per_signal = 60;
  CHECK_THROWS_AS(generate(s), ConfigError);
}

TEST_CASE("split counts follow the rounding rule") {
  DatasetSpec s{{"BPSK", "QPSK"}, 10000, 8, 8, 20.0, 1};
  const auto ds = split(generate(s), 0.70, 0.05, 3);
  for (std::size_t c = 0; c < 2; ++c) {
    std::map<Split, std::size_t> n;
    for (std::size_t k = 0; k < ds.size(); ++k)
      if (ds.labels[k] == c) ++n[ds.split_tags[k]];
    CHECK(n[Split::train] == 6650);
    CHECK(n[Split::val] == 350);
    CHECK(n[Split::test] == 3000);
    CHECK(n[Split::none] == 0);
  }
}

TEST_CASE("split edge cases and determinism") {
  DatasetSpec s{{"BPSK", "QPSK"}, 2, 8, 8, 20.0, 1};
  const auto ds = split(generate(s), 0.5, 0.0, 1);
  for (std::size_t c = 0; c < 2; ++c) {
    std::size_t tr = 0, te = 0;
    for (std::size_t k = 0; k < ds.size(); ++k) {
      if (ds.labels[k] != c) continue;
      tr += ds.split_tags[k] == Split::train;
      te += ds.split_tags[k] == Split::test;
    }
    CHECK(tr == 1);
    CHECK(te == 1);
  }
  const auto big = generate(small_spec());
  CHECK(split(big, 0.7, 0.05, 9).split_tags == split(big, 0.7, 0.05, 9).split_tags);
  CHECK_THROWS_AS(split(big, 1.0, 0.05, 1), InvalidSplit);
  CHECK_THROWS_AS(split(big, 0.0, 0.05, 1), InvalidSplit);
  CHECK_THROWS_AS(split(big, 0.7, 1.0, 1), InvalidSplit);
}

TEST_CASE("class balance in every split") {
  const auto ds = split(generate(crml_tiny_spec(2)), 0.7, 0.05, 2);
  std::map<Split, std::map<std::size_t, std::size_t>> n;
  for (std::size_t k = 0; k < ds.size(); ++k) ++n[ds.split_tags[k]][ds.labels[k]];
  for (auto& [split_kind, per] : n) {
    CHECK(per.size() == 8);
    for (auto& [c, count] : per) CHECK(count == per.begin()->second);
  }
}

TEST_CASE("serialize round trip and file layout") {
  const auto ds = split(generate(small_spec()), 0.7, 0.05, 1);
  const auto bytes = serialize(ds);
  CHECK(std::string(reinterpret_cast<const char*>(bytes.data()), 7) == "AMCDSET");
  io::Reader r(bytes);
  r.bytes(8, "magic");
  CHECK(r.le<std::uint32_t>("v") == 1);
  CHECK(r.le<std::uint32_t>("w") == 4);
  CHECK(r.le<std::uint32_t>("n") == 60);
  CHECK(r.le<std::uint32_t>("len") == 64);
  CHECK(r.le<std::uint32_t>("sym") == 8);
  const auto meta_len = r.le<std::uint32_t>("meta");
  CHECK(bytes.size() == 32 + 60 * 64 * 2 * 4 + 60 * 8 * 2 + meta_len);
  CHECK(deserialize(bytes) == ds);

  const auto path = std::filesystem::temp_directory_path() / "advamc_test_ds.amcd";
  save_dataset(ds, path);
  CHECK(load_dataset(path) == ds);
  std::filesystem::remove(path);
}

TEST_CASE("malformed dataset files") {
  const auto bytes = serialize(generate(small_spec()));
  auto truncated = bytes;
  truncated.resize(1000);
  CHECK_THROWS_AS(deserialize(truncated), FormatError);
  try {
    deserialize(std::span(bytes).first(20));
  } catch (const FormatError& e) {
    CHECK(e.offset() <= 20);
  }
  auto future = bytes;
  future[8] = 2;
  CHECK_THROWS_AS(deserialize(future), VersionError);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(deserialize(magic), FormatError);
  auto meta = bytes;
  meta.back() = '#';
  CHECK_THROWS_AS(deserialize(meta), FormatError);
  CHECK_THROWS_AS(load_dataset("/nonexistent/dir/file.amcd"), DataError);
}

TEST_CASE("batch packing") {
  const auto ds = generate(small_spec());
  const std::vector<std::size_t> idx{3, 40};
  const auto b = to_batch(ds.signals, idx);
  CHECK(b->shape == ad::Shape{2, 2, 64});
  CHECK(b->data[0] == ds.signals[3].i[0]);
  CHECK(b->data[64] == ds.signals[3].q[0]);
  CHECK(b->data[128 + 5] == ds.signals[40].i[5]);
  const auto row = from_batch_row(*b, 1, 8);
  CHECK(row.i == ds.signals[40].i);
  CHECK(row.q == ds.signals[40].q);
}

TEST_CASE("empirical SNR is near the spec") {
  const auto ds = generate(crml_tiny_spec(3));
  CHECK(std::abs(empirical_snr_db(ds, 1000) - 20.0) < 0.1);
}
