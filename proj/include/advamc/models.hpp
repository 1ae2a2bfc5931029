#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "advamc/autodiff/ops.hpp"
#include "advamc/autodiff/tape.hpp"
#include "advamc/autodiff/tensor.hpp"

namespace advamc {

using json = nlohmann::json;

enum class LayerKind { reshape, conv, relu, dropout, flatten, dense, residual };

/// One entry of an architecture. Only the fields relevant to `kind` are
/// meaningful; the rest stay at their defaults so descriptors hash stably.
struct LayerDesc {
  LayerKind kind = LayerKind::relu;
  std::size_t out_channels = 0;  // conv, residual (filters), dense (units)
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
  std::size_t stride_w = 1;
  double p = 0.0;         // dropout
  ad::Shape target;       // reshape, excluding batch

  friend bool operator==(const LayerDesc&, const LayerDesc&) = default;
};

struct Architecture {
  std::string name;  // "vt_cnn" or "resnet"
  std::size_t n_classes = 0;
  std::size_t input_len = 0;
  std::vector<LayerDesc> layers;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

json to_json(const Architecture& arch);
Architecture architecture_from_json(const json& j);
/// Stable 64-bit hash of the canonical descriptor.
std::uint64_t architecture_hash(const Architecture& arch);

/// Per-sample activation shape after every layer (batch dimension
/// excluded). Throws ConfigError if consecutive layers do not compose.
std::vector<ad::Shape> infer_shapes(const Architecture& arch);

/// Parameter tensor shapes in model order.
std::vector<ad::Shape> parameter_shapes(const Architecture& arch);

/// How a forward pass runs. Dropout masks are keyed by (seed, layer, step).
struct ForwardMode {
  bool train = false;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;

  static ForwardMode eval() { return {}; }
};

template <class T>
class Model {
 public:
  Model() = default;
  /// Allocates parameters; He-uniform weights drawn from `init_seed`, zero biases.
  Model(Architecture arch, std::uint64_t init_seed);

  const Architecture& architecture() const noexcept { return arch_; }
  std::size_t n_classes() const noexcept { return arch_.n_classes; }
  std::size_t input_len() const noexcept { return arch_.input_len; }

  std::span<const ad::TensorPtr<T>> parameters() const noexcept { return params_; }
  std::size_t parameter_count() const;

  /// input [B,2,N] -> logits [B,n_classes].
  ad::TensorPtr<T> forward(const ad::TensorPtr<T>& input, ad::Tape<T>* tape, const ForwardMode& mode) const;

  void zero_grad();

  /// Deep copy (parameters are not shared with the source).
  Model clone() const;

  template <class U>
  Model<U> cast() const {
    Model<U> out;
    out.arch_ = arch_;
    for (const auto& p : params_) {
      auto q = ad::make_tensor<U>(p->shape, std::vector<U>(p->data.begin(), p->data.end()));
      q->requires_grad = p->requires_grad;
      out.params_.push_back(std::move(q));
    }
    return out;
  }

 private:
  template <class>
  friend class Model;

  Architecture arch_;
  std::vector<ad::TensorPtr<T>> params_;
};

extern template class Model<float>;
extern template class Model<double>;

/// VT_CNN2_BF-style network:
/// [1,2,N] -> Conv(256ws,1x3,same) -> ReLU -> Drop -> Conv(80ws,2x3,valid)
/// -> ReLU -> Drop -> Flatten -> Dense(256ws) -> ReLU -> Drop -> Dense(K).
Architecture vt_cnn_architecture(std::size_t n_classes, std::size_t input_len, double width_scale,
                                 double dropout = 0.5);

/// Residual network: stem conv collapses I/Q, then n_stacks of
/// {residual unit, stride-2 downsample}, then Dense(128) -> Dense(K).
Architecture resnet_architecture(std::size_t n_classes, std::size_t input_len, std::size_t n_stacks,
                                 std::size_t filters);

Model<float> build_vt_cnn(std::size_t n_classes, std::size_t input_len, double width_scale, std::uint64_t seed);
Model<float> build_resnet(std::size_t n_classes, std::size_t input_len, std::size_t n_stacks, std::size_t filters,
                          std::uint64_t seed);

/// Eval-mode logits for a [B,2,N] batch (dropout off, no tape).
template <class T>
ad::TensorPtr<T> predict(const Model<T>& model, const ad::TensorPtr<T>& batch);

/// Row-wise argmax; ties go to the lowest class index.
template <class T>
std::vector<std::size_t> argmax_rows(const ad::Tensor<T>& logits);

template <class T>
std::vector<std::size_t> classify(const Model<T>& model, const ad::TensorPtr<T>& batch);

/// Gradient of the summed per-sample cross-entropy w.r.t. the input, in
/// eval mode. Parameter gradients are left untouched. `losses` are the
/// per-sample losses at `x`.
template <class T>
struct InputGradient {
  ad::Tensor<T> grad;
  std::vector<T> losses;
};

template <class T>
InputGradient<T> input_gradient(const Model<T>& model, const ad::Tensor<T>& x, std::span<const std::size_t> labels);

struct Checkpoint {
  Model<float> model;
  json metadata = json::object();
};

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model, const json& metadata);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace advamc
