#include "advamc/models.hpp"

#include <algorithm>
#include <cmath>

#include "advamc/binary_io.hpp"
#include "advamc/rng.hpp"

namespace advamc {
namespace {

constexpr char kCheckpointMagic[8] = {'A', 'M', 'C', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::size_t kCheckpointHeader = 8 + 4 + 4 + 8;

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::reshape: return "reshape";
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::dropout: return "dropout";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::residual: return "residual";
  }
  return "?";
}

LayerKind kind_from_name(const std::string& s) {
  for (auto k : {LayerKind::reshape, LayerKind::conv, LayerKind::relu, LayerKind::dropout, LayerKind::flatten,
                 LayerKind::dense, LayerKind::residual}) {
    if (s == kind_name(k)) return k;
  }
  throw ConfigError("unknown layer kind '" + s + "'");
}

LayerDesc conv(std::size_t out, std::size_t kh, std::size_t kw, std::size_t ph, std::size_t pw, std::size_t sw = 1) {
  LayerDesc d;
  d.kind = LayerKind::conv;
  d.out_channels = out;
  d.kernel_h = kh;
  d.kernel_w = kw;
  d.pad_h = ph;
  d.pad_w = pw;
  d.stride_w = sw;
  return d;
}

LayerDesc simple(LayerKind k) {
  LayerDesc d;
  d.kind = k;
  return d;
}

LayerDesc dropout_layer(double p) {
  LayerDesc d;
  d.kind = LayerKind::dropout;
  d.p = p;
  return d;
}

LayerDesc dense_layer(std::size_t units) {
  LayerDesc d;
  d.kind = LayerKind::dense;
  d.out_channels = units;
  return d;
}

LayerDesc residual_layer(std::size_t filters) {
  LayerDesc d;
  d.kind = LayerKind::residual;
  d.out_channels = filters;
  d.kernel_h = 1;
  d.kernel_w = 3;
  d.pad_w = 1;
  return d;
}

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t pad, std::size_t stride) {
  if (in + 2 * pad < k) throw ConfigError("kernel wider than padded input");
  return (in + 2 * pad - k) / stride + 1;
}

// Parameter tensor shapes contributed by one layer given its input shape.
std::vector<ad::Shape> layer_params(const LayerDesc& l, const ad::Shape& in) {
  switch (l.kind) {
    case LayerKind::conv:
      return {{l.out_channels, in[0], l.kernel_h, l.kernel_w}, {l.out_channels}};
    case LayerKind::residual:
      return {{l.out_channels, in[0], l.kernel_h, l.kernel_w},
              {l.out_channels},
              {l.out_channels, l.out_channels, l.kernel_h, l.kernel_w},
              {l.out_channels}};
    case LayerKind::dense:
      return {{l.out_channels, in[0]}, {l.out_channels}};
    default:
      return {};
  }
}

ad::Conv2dGeometry geometry(const LayerDesc& l) {
  return {l.pad_h, l.pad_w, 1, l.stride_w};
}

}  // namespace

json to_json(const Architecture& arch) {
  json layers = json::array();
  for (const auto& l : arch.layers) {
    json j{{"kind", kind_name(l.kind)}};
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::residual:
        j["out_channels"] = l.out_channels;
        j["kernel"] = {l.kernel_h, l.kernel_w};
        j["padding"] = {l.pad_h, l.pad_w};
        j["stride_w"] = l.stride_w;
        break;
      case LayerKind::dense:
        j["units"] = l.out_channels;
        break;
      case LayerKind::dropout:
        j["p"] = l.p;
        break;
      case LayerKind::reshape:
        j["shape"] = l.target;
        break;
      default:
        break;
    }
    layers.push_back(std::move(j));
  }
  return {{"name", arch.name}, {"n_classes", arch.n_classes}, {"input_len", arch.input_len}, {"layers", layers}};
}

Architecture architecture_from_json(const json& j) {
  try {
    Architecture a;
    a.name = j.at("name").get<std::string>();
    a.n_classes = j.at("n_classes").get<std::size_t>();
    a.input_len = j.at("input_len").get<std::size_t>();
    for (const auto& lj : j.at("layers")) {
      LayerDesc l;
      l.kind = kind_from_name(lj.at("kind").get<std::string>());
      switch (l.kind) {
        case LayerKind::conv:
        case LayerKind::residual:
          l.out_channels = lj.at("out_channels").get<std::size_t>();
          l.kernel_h = lj.at("kernel").at(0).get<std::size_t>();
          l.kernel_w = lj.at("kernel").at(1).get<std::size_t>();
          l.pad_h = lj.at("padding").at(0).get<std::size_t>();
          l.pad_w = lj.at("padding").at(1).get<std::size_t>();
          l.stride_w = lj.at("stride_w").get<std::size_t>();
          break;
        case LayerKind::dense:
          l.out_channels = lj.at("units").get<std::size_t>();
          break;
        case LayerKind::dropout:
          l.p = lj.at("p").get<double>();
          break;
        case LayerKind::reshape:
          l.target = lj.at("shape").get<ad::Shape>();
          break;
        default:
          break;
      }
      a.layers.push_back(std::move(l));
    }
    return a;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed architecture descriptor: ") + e.what());
  }
}

std::uint64_t architecture_hash(const Architecture& arch) { return io::fnv1a64(to_json(arch).dump()); }

std::vector<ad::Shape> infer_shapes(const Architecture& arch) {
  ad::Shape cur{2, arch.input_len};
  std::vector<ad::Shape> shapes;
  for (std::size_t k = 0; k < arch.layers.size(); ++k) {
    const auto& l = arch.layers[k];
    const std::string where = "layer " + std::to_string(k) + " (" + kind_name(l.kind) + ")";
    switch (l.kind) {
      case LayerKind::reshape:
        if (ad::numel(l.target) != ad::numel(cur)) throw ConfigError(where + ": reshape changes element count");
        cur = l.target;
        break;
      case LayerKind::conv:
      case LayerKind::residual: {
        if (cur.size() != 3) throw ConfigError(where + ": expects [C,H,W] input");
        if (l.out_channels == 0) throw ConfigError(where + ": zero output channels");
        const std::size_t h = conv_out(cur[1], l.kernel_h, l.pad_h, 1);
        const std::size_t w = conv_out(cur[2], l.kernel_w, l.pad_w, l.stride_w);
        if (l.kind == LayerKind::residual && (cur[0] != l.out_channels || h != cur[1] || w != cur[2])) {
          throw ConfigError(where + ": residual unit must preserve shape");
        }
        cur = {l.out_channels, h, w};
        break;
      }
      case LayerKind::flatten:
        cur = {ad::numel(cur)};
        break;
      case LayerKind::dense:
        if (cur.size() != 1) throw ConfigError(where + ": dense expects a flat input");
        if (l.out_channels == 0) throw ConfigError(where + ": zero units");
        cur = {l.out_channels};
        break;
      case LayerKind::dropout:
        if (!(l.p >= 0.0 && l.p < 1.0)) throw ConfigError(where + ": dropout p must be in [0,1)");
        break;
      case LayerKind::relu:
        break;
    }
    shapes.push_back(cur);
  }
  if (cur != ad::Shape{arch.n_classes}) {
    throw ConfigError("final layer width " + ad::shape_str(cur) + " does not match n_classes " +
                      std::to_string(arch.n_classes));
  }
  return shapes;
}

std::vector<ad::Shape> parameter_shapes(const Architecture& arch) {
  const auto shapes = infer_shapes(arch);
  std::vector<ad::Shape> out;
  ad::Shape cur{2, arch.input_len};
  for (std::size_t k = 0; k < arch.layers.size(); ++k) {
    for (auto& s : layer_params(arch.layers[k], cur)) out.push_back(std::move(s));
    cur = shapes[k];
  }
  return out;
}

Architecture vt_cnn_architecture(std::size_t n_classes, std::size_t input_len, double width_scale, double dropout) {
  if (!(width_scale > 0.0) || !std::isfinite(width_scale)) throw ConfigError("width_scale must be positive");
  if (input_len < 8) throw ConfigError("VT-CNN needs input_len >= 8");
  if (n_classes < 1) throw ConfigError("n_classes must be >= 1");
  const auto scaled = [&](double base) {
    const auto w = static_cast<std::size_t>(std::llround(base * width_scale));
    if (w < 1) throw ConfigError("width_scale too small: a layer would have zero width");
    return w;
  };
  Architecture a;
  a.name = "vt_cnn";
  a.n_classes = n_classes;
  a.input_len = input_len;
  LayerDesc rs;
  rs.kind = LayerKind::reshape;
  rs.target = {1, 2, input_len};
  a.layers = {rs,
              conv(scaled(256), 1, 3, 0, 1),
              simple(LayerKind::relu),
              dropout_layer(dropout),
              conv(scaled(80), 2, 3, 0, 0),
              simple(LayerKind::relu),
              dropout_layer(dropout),
              simple(LayerKind::flatten),
              dense_layer(scaled(256)),
              simple(LayerKind::relu),
              dropout_layer(dropout),
              dense_layer(n_classes)};
  infer_shapes(a);
  return a;
}

Architecture resnet_architecture(std::size_t n_classes, std::size_t input_len, std::size_t n_stacks,
                                 std::size_t filters) {
  if (n_stacks < 1) throw ConfigError("resnet needs n_stacks >= 1");
  if (filters < 1) throw ConfigError("resnet needs filters >= 1");
  if (n_stacks >= 63 || input_len < (std::size_t{1} << n_stacks)) {
    throw ConfigError("input_len " + std::to_string(input_len) + " too short for " + std::to_string(n_stacks) +
                      " downsampling stacks");
  }
  Architecture a;
  a.name = "resnet";
  a.n_classes = n_classes;
  a.input_len = input_len;
  LayerDesc rs;
  rs.kind = LayerKind::reshape;
  rs.target = {1, 2, input_len};
  a.layers = {rs, conv(filters, 2, 3, 0, 1), simple(LayerKind::relu)};
  for (std::size_t s = 0; s < n_stacks; ++s) {
    a.layers.push_back(residual_layer(filters));
    a.layers.push_back(simple(LayerKind::relu));
    a.layers.push_back(conv(filters, 1, 3, 0, 1, 2));
    a.layers.push_back(simple(LayerKind::relu));
  }
  a.layers.push_back(simple(LayerKind::flatten));
  a.layers.push_back(dense_layer(128));
  a.layers.push_back(simple(LayerKind::relu));
  a.layers.push_back(dense_layer(n_classes));
  infer_shapes(a);
  return a;
}

template <class T>
Model<T>::Model(Architecture arch, std::uint64_t init_seed) : arch_(std::move(arch)) {
  const auto shapes = parameter_shapes(arch_);
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    const auto& s = shapes[k];
    auto p = ad::make_tensor<T>(s);
    p->requires_grad = true;
    if (s.size() > 1) {
      const std::size_t fan_in = ad::numel(s) / s[0];
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      Rng rng(init_seed, {0x1417, k});
      for (auto& v : p->data) v = static_cast<T>(rng.uniform(-bound, bound));
    }
    params_.push_back(std::move(p));
  }
}

template <class T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->size();
  return n;
}

template <class T>
void Model<T>::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

template <class T>
Model<T> Model<T>::clone() const {
  return cast<T>();
}

template <class T>
ad::TensorPtr<T> Model<T>::forward(const ad::TensorPtr<T>& input, ad::Tape<T>* tape, const ForwardMode& mode) const {
  const auto& x = *input;
  if (x.shape.size() != 3 || x.shape[1] != 2 || x.shape[2] != arch_.input_len) {
    throw ShapeError("model expects input [B,2," + std::to_string(arch_.input_len) + "], got " +
                     ad::shape_str(x.shape));
  }
  const std::size_t batch = x.shape[0];
  ad::TensorPtr<T> h = input;
  std::size_t pi = 0;
  for (std::size_t k = 0; k < arch_.layers.size(); ++k) {
    const auto& l = arch_.layers[k];
    switch (l.kind) {
      case LayerKind::reshape: {
        ad::Shape s{batch};
        s.insert(s.end(), l.target.begin(), l.target.end());
        h = ad::reshape(tape, h, std::move(s));
        break;
      }
      case LayerKind::conv:
        h = ad::conv2d(tape, h, params_[pi], params_[pi + 1], geometry(l));
        pi += 2;
        break;
      case LayerKind::residual: {
        auto a = ad::conv2d(tape, h, params_[pi], params_[pi + 1], geometry(l));
        a = ad::relu(tape, a);
        a = ad::conv2d(tape, a, params_[pi + 2], params_[pi + 3], geometry(l));
        h = ad::add(tape, h, a);
        pi += 4;
        break;
      }
      case LayerKind::relu:
        h = ad::relu(tape, h);
        break;
      case LayerKind::dropout:
        h = ad::dropout(tape, h, l.p, derive_seed(mode.seed, {k, mode.step}), mode.train);
        break;
      case LayerKind::flatten:
        h = ad::flatten(tape, h);
        break;
      case LayerKind::dense:
        h = ad::dense(tape, h, params_[pi], params_[pi + 1]);
        pi += 2;
        break;
    }
  }
  return h;
}

template class Model<float>;
template class Model<double>;

Model<float> build_vt_cnn(std::size_t n_classes, std::size_t input_len, double width_scale, std::uint64_t seed) {
  return Model<float>(vt_cnn_architecture(n_classes, input_len, width_scale), seed);
}

Model<float> build_resnet(std::size_t n_classes, std::size_t input_len, std::size_t n_stacks, std::size_t filters,
                          std::uint64_t seed) {
  return Model<float>(resnet_architecture(n_classes, input_len, n_stacks, filters), seed);
}

template <class T>
ad::TensorPtr<T> predict(const Model<T>& model, const ad::TensorPtr<T>& batch) {
  return model.forward(batch, nullptr, ForwardMode::eval());
}

template <class T>
std::vector<std::size_t> argmax_rows(const ad::Tensor<T>& logits) {
  if (logits.shape.size() != 2) throw ShapeError("argmax expects [B,K] logits");
  const std::size_t B = logits.shape[0], K = logits.shape[1];
  std::vector<std::size_t> out(B);
  for (std::size_t b = 0; b < B; ++b) {
    const T* row = logits.data.data() + b * K;
    out[b] = static_cast<std::size_t>(std::max_element(row, row + K) - row);
  }
  return out;
}

template <class T>
std::vector<std::size_t> classify(const Model<T>& model, const ad::TensorPtr<T>& batch) {
  return argmax_rows(*predict(model, batch));
}

template <class T>
InputGradient<T> input_gradient(const Model<T>& model, const ad::Tensor<T>& x, std::span<const std::size_t> labels) {
  auto input = std::make_shared<ad::Tensor<T>>(x.shape, x.data);
  ad::Tape<T> tape(ad::LeafPolicy::watched_only);
  tape.watch(input);
  const auto logits = model.forward(input, &tape, ForwardMode::eval());
  InputGradient<T> out;
  out.losses = ad::cross_entropy_per_sample(*logits, labels);
  const auto loss = ad::softmax_cross_entropy(&tape, logits, labels, ad::Reduction::sum);
  if (input->size() == 0) {
    out.grad = ad::Tensor<T>(x.shape);
    return out;
  }
  tape.backward(loss);
  out.grad = ad::Tensor<T>(x.shape, std::move(input->grad));
  return out;
}

template InputGradient<float> input_gradient(const Model<float>&, const ad::Tensor<float>&, std::span<const std::size_t>);
template InputGradient<double> input_gradient(const Model<double>&, const ad::Tensor<double>&,
                                              std::span<const std::size_t>);
template ad::TensorPtr<float> predict(const Model<float>&, const ad::TensorPtr<float>&);
template ad::TensorPtr<double> predict(const Model<double>&, const ad::TensorPtr<double>&);
template std::vector<std::size_t> argmax_rows(const ad::Tensor<float>&);
template std::vector<std::size_t> argmax_rows(const ad::Tensor<double>&);
template std::vector<std::size_t> classify(const Model<float>&, const ad::TensorPtr<float>&);
template std::vector<std::size_t> classify(const Model<double>&, const ad::TensorPtr<double>&);

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model, const json& metadata) {
  const json descriptor{{"architecture", to_json(model.architecture())},
                        {"architecture_hash", io::hex64(architecture_hash(model.architecture()))},
                        {"metadata", metadata}};
  const std::string text = descriptor.dump();
  io::Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.le<std::uint64_t>(model.parameter_count());
  w.text(text);
  for (const auto& p : model.parameters())
    for (float v : p->data) w.f32(v);
  const std::uint64_t h = io::fnv1a64(w.buffer());
  w.le<std::uint64_t>(h);
  io::write_file(path, w.buffer());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  io::Reader r(bytes);
  const auto magic = r.bytes(sizeof kCheckpointMagic, "checkpoint magic");
  if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic)) throw CheckpointError("'" + path.string() + "' is not a checkpoint");
  const auto version = r.le<std::uint32_t>("checkpoint version");
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  const auto text_len = r.le<std::uint32_t>("descriptor length");
  const auto n_params = r.le<std::uint64_t>("parameter count");
  const std::size_t expected = kCheckpointHeader + text_len + 4 * n_params + 8;
  if (bytes.size() != expected) {
    throw CheckpointError("checkpoint size " + std::to_string(bytes.size()) + " does not match declared layout (" +
                          std::to_string(expected) + " bytes)");
  }
  const auto stored_hash = io::Reader(std::span(bytes).subspan(bytes.size() - 8)).le<std::uint64_t>("content hash");
  if (io::fnv1a64(std::span(bytes).first(bytes.size() - 8)) != stored_hash) {
    throw CheckpointError("checkpoint content hash mismatch");
  }
  json descriptor;
  try {
    descriptor = json::parse(r.text(text_len, "descriptor"));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint descriptor unreadable: ") + e.what());
  }
  Architecture arch = architecture_from_json(descriptor.at("architecture"));
  if (descriptor.value("architecture_hash", std::string{}) != io::hex64(architecture_hash(arch))) {
    throw CheckpointError("architecture hash mismatch");
  }
  Checkpoint ck{Model<float>(arch, 0), descriptor.value("metadata", json::object())};
  if (ck.model.parameter_count() != n_params) {
    throw CheckpointError("parameter count " + std::to_string(n_params) + " does not match architecture (" +
                          std::to_string(ck.model.parameter_count()) + ")");
  }
  for (const auto& p : ck.model.parameters())
    for (auto& v : p->data) v = r.f32("parameter block");
  return ck;
}

}  // namespace advamc
