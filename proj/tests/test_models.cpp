#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "advamc/binary_io.hpp"
#include "advamc/error.hpp"
#include "advamc/models.hpp"
#include "advamc/rng.hpp"

using namespace advamc;

namespace {

ad::TensorPtr<float> random_batch(std::size_t b, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  auto t = ad::make_tensor<float>({b, 2, n});
  for (auto& v : t->data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

std::filesystem::path tmp(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("advamc_models_" + name);
}

}  // namespace

TEST_CASE("vt-cnn shapes at full and 1/8 width") {
  const auto full = infer_shapes(vt_cnn_architecture(16, 1024, 1.0));
  CHECK(full[1] == ad::Shape{256, 2, 1024});
  CHECK(full[4] == ad::Shape{80, 1, 1022});
  CHECK(full[8] == ad::Shape{256});
  CHECK(full.back() == ad::Shape{16});

  const auto arch = vt_cnn_architecture(8, 256, 0.125);
  const auto s = infer_shapes(arch);
  CHECK(s[1] == ad::Shape{32, 2, 256});
  CHECK(s[4] == ad::Shape{10, 1, 254});
  CHECK(s[8] == ad::Shape{32});

  Model<float> m(arch, 1);
  const auto y = predict(m, random_batch(4, 256, 2));
  CHECK(y->shape == ad::Shape{4, 8});
  CHECK_THROWS_AS(predict(m, random_batch(4, 128, 2)), ShapeError);
  CHECK_THROWS_AS(vt_cnn_architecture(8, 256, 0.001), ConfigError);
}

TEST_CASE("untrained vt-cnn is close to uniform") {
  for (double ws : {0.125, 0.5}) {
    const auto m = build_vt_cnn(8, 256, ws, 3);
    const auto logits = predict(m, random_batch(100, 256, 4));
    const auto p = ad::softmax_rows(*logits);
    double mean_max = 0.0;
    for (std::size_t b = 0; b < 100; ++b) mean_max += *std::max_element(p.begin() + b * 8, p.begin() + b * 8 + 8);
    INFO(ws);
    CHECK(mean_max / 100.0 < 0.5);
  }
}

TEST_CASE("resnet collapses I/Q and halves per stack") {
  const auto arch = resnet_architecture(16, 256, 3, 8);
  const auto s = infer_shapes(arch);
  CHECK(s[1] == ad::Shape{8, 1, 256});
  std::size_t last_conv = 0;
  for (std::size_t k = 0; k < arch.layers.size(); ++k)
    if (arch.layers[k].kind == LayerKind::conv) last_conv = k;
  CHECK(s[last_conv] == ad::Shape{8, 1, 32});
  CHECK(s.back() == ad::Shape{16});
  CHECK_THROWS_AS(resnet_architecture(16, 4, 3, 8), ConfigError);
}

TEST_CASE("residual unit with zero second conv is the identity") {
  Architecture a;
  a.name = "resnet";
  a.input_len = 16;
  a.n_classes = 32;
  LayerDesc rs;
  rs.kind = LayerKind::reshape;
  rs.target = {1, 2, 16};
  LayerDesc res;
  res.kind = LayerKind::residual;
  res.out_channels = 1;
  res.kernel_w = 3;
  res.pad_w = 1;
  LayerDesc fl;
  fl.kind = LayerKind::flatten;
  a.layers = {rs, res, fl};
  Model<float> m(a, 9);
  REQUIRE(m.parameters().size() == 4);
  for (auto& v : m.parameters()[2]->data) v = 0.0f;
  for (auto& v : m.parameters()[3]->data) v = 0.0f;
  const auto x = random_batch(3, 16, 5);
  CHECK(predict(m, x)->data == x->data);
}

TEST_CASE("argmax ties resolve to the lowest index") {
  ad::Tensor<float> t({2, 4}, std::vector<float>{1, 3, 3, 0, 2, 2, 2, 2});
  CHECK(argmax_rows(t) == std::vector<std::size_t>{1, 0});
}

TEST_CASE("empty batch") {
  const auto m = build_vt_cnn(8, 256, 0.125, 3);
  const auto y = predict(m, ad::make_tensor<float>({0, 2, 256}));
  CHECK(y->shape == ad::Shape{0, 8});
  CHECK(classify(m, ad::make_tensor<float>({0, 2, 256})).empty());
}

TEST_CASE("input gradient leaves parameter gradients untouched") {
  const auto m = build_vt_cnn(8, 256, 0.125, 3);
  const auto x = random_batch(2, 256, 6);
  const std::size_t y[] = {1, 4};
  const auto g = input_gradient(m, *x, y);
  CHECK(g.grad.shape == x->shape);
  CHECK(g.losses.size() == 2);
  for (const auto& p : m.parameters()) CHECK_FALSE(p->has_grad());
}

TEST_CASE("same seed, same weights") {
  const auto a = build_resnet(4, 64, 2, 4, 11), b = build_resnet(4, 64, 2, 4, 11), c = build_resnet(4, 64, 2, 4, 12);
  for (std::size_t k = 0; k < a.parameters().size(); ++k) CHECK(a.parameters()[k]->data == b.parameters()[k]->data);
  CHECK(a.parameters()[0]->data != c.parameters()[0]->data);
}

TEST_CASE("checkpoint round trip") {
  for (int kind = 0; kind < 2; ++kind) {
    const auto m = kind == 0 ? build_vt_cnn(8, 256, 0.125, 3) : build_resnet(8, 256, 3, 8, 3);
    const json meta{{"seed", 3}, {"regime", "natural"}};
    const auto path = tmp("rt.ckpt");
    save_checkpoint(path, m, meta);
    const auto ck = load_checkpoint(path);
    CHECK(ck.metadata == meta);
    CHECK(ck.model.architecture() == m.architecture());
    const auto x = random_batch(5, 256, 7);
    CHECK(predict(ck.model, x)->data == predict(m, x)->data);
  }
}

TEST_CASE("tampered checkpoints are rejected") {
  const auto m = build_vt_cnn(8, 256, 0.125, 3);
  const auto path = tmp("tamper.ckpt");
  save_checkpoint(path, m, json::object());
  const auto good = io::read_file(path);

  auto flipped = good;
  flipped[good.size() / 2] ^= 0x01;
  io::write_file(path, flipped);
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);

  auto cut = good;
  cut.resize(good.size() - 5);
  io::write_file(path, cut);
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);

  auto magic = good;
  magic[0] = 'X';
  io::write_file(path, magic);
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);

  io::write_file(path, std::vector<std::uint8_t>{1, 2});
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  std::filesystem::remove(path);
}

TEST_CASE("architecture descriptor round trips through json") {
  const auto a = resnet_architecture(16, 1024, 4, 16);
  CHECK(architecture_from_json(to_json(a)) == a);
  CHECK(architecture_hash(a) == architecture_hash(architecture_from_json(to_json(a))));
  CHECK(architecture_hash(a) != architecture_hash(resnet_architecture(16, 1024, 4, 8)));
}
