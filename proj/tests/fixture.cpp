#include "fixture.hpp"

namespace fixture {

const Trained& trained() {
  static const Trained t = [] {
    using namespace advamc;
    auto ds = split(generate(crml_tiny_spec(11)), 0.70, 0.05, 11);
    Model<float> init(vt_cnn_architecture(ds.n_classes(), 256, 0.125, 0.0), 5);
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.batch_size = 32;
    cfg.seed = 5;
    cfg.early_stop_patience = 0;
    auto r = train_standard(init, ds, cfg);
    return Trained{std::move(ds), std::move(r.checkpoint.model)};
  }();
  return t;
}

}  // namespace fixture
