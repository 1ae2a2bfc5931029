#include "advamc/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>

#include "advamc/parallel.hpp"
#include "advamc/rng.hpp"

namespace advamc::ad {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t k = 0; k < shape.size(); ++k) os << (k ? "," : "") << shape[k];
  os << ']';
  return os.str();
}

namespace {

using idx = std::ptrdiff_t;

// Dot product with independent partial sums so the loop vectorizes without
// reassociation flags. The summation order is fixed.
template <class T>
T dot(const T* a, const T* b, idx n) {
  T acc[8] = {};
  idx k = 0;
  for (; k + 8 <= n; k += 8)
    for (int j = 0; j < 8; ++j) acc[j] += a[k + j] * b[k + j];
  T tail = 0;
  for (; k < n; ++k) tail += a[k] * b[k];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

// Output columns [lo, hi) whose input column ow*stride + kw - pad is inside [0, W).
struct ColRange {
  idx lo, hi;
};

ColRange col_range(idx kw, idx pad, idx stride, idx width, idx out_width) {
  idx lo = 0;
  if (pad - kw > 0) lo = (pad - kw + stride - 1) / stride;
  const idx last = width - 1 - kw + pad;
  idx hi = last < 0 ? 0 : last / stride + 1;
  hi = std::min(hi, out_width);
  return {lo, std::max(lo, hi)};
}

struct ConvDims {
  idx B, C, H, W, O, KH, KW, OH, OW, ph, pw, sh, sw;
};

template <class T>
ConvDims conv_dims(const Tensor<T>& in, const Tensor<T>& k, const Tensor<T>& bias, const Conv2dGeometry& g) {
  if (in.shape.size() != 4) throw ShapeError("conv2d input must be [B,C,H,W], got " + shape_str(in.shape));
  if (k.shape.size() != 4) throw ShapeError("conv2d kernel must be [O,C,KH,KW], got " + shape_str(k.shape));
  if (k.shape[1] != in.shape[1]) {
    throw ShapeError("conv2d channel mismatch: input " + shape_str(in.shape) + " kernel " + shape_str(k.shape));
  }
  if (bias.size() != k.shape[0]) throw ShapeError("conv2d bias length must equal output channels");
  if (g.stride_h == 0 || g.stride_w == 0) throw ShapeError("conv2d stride must be >= 1");
  ConvDims d{};
  d.B = static_cast<idx>(in.shape[0]);
  d.C = static_cast<idx>(in.shape[1]);
  d.H = static_cast<idx>(in.shape[2]);
  d.W = static_cast<idx>(in.shape[3]);
  d.O = static_cast<idx>(k.shape[0]);
  d.KH = static_cast<idx>(k.shape[2]);
  d.KW = static_cast<idx>(k.shape[3]);
  d.ph = static_cast<idx>(g.pad_h);
  d.pw = static_cast<idx>(g.pad_w);
  d.sh = static_cast<idx>(g.stride_h);
  d.sw = static_cast<idx>(g.stride_w);
  const idx span_h = d.H + 2 * d.ph - d.KH;
  const idx span_w = d.W + 2 * d.pw - d.KW;
  if (span_h < 0 || span_w < 0) {
    throw ShapeError("conv2d kernel " + shape_str(k.shape) + " larger than padded input " + shape_str(in.shape));
  }
  d.OH = span_h / d.sh + 1;
  d.OW = span_w / d.sw + 1;
  return d;
}

template <class T>
bool involve(Tape<T>* tape, const TensorPtr<T>& t) {
  return tape != nullptr && tape->involve(t);
}

}  // namespace

template <class T>
TensorPtr<T> conv2d(Tape<T>* tape, const TensorPtr<T>& input, const TensorPtr<T>& kernel, const TensorPtr<T>& bias,
                    const Conv2dGeometry& geom) {
  const ConvDims d = conv_dims(*input, *kernel, *bias, geom);
  auto out = make_tensor<T>({static_cast<std::size_t>(d.B), static_cast<std::size_t>(d.O),
                             static_cast<std::size_t>(d.OH), static_cast<std::size_t>(d.OW)});
  const T* in = input->data.data();
  const T* k = kernel->data.data();
  const T* bs = bias->data.data();
  T* o_ptr = out->data.data();

  parallel_for(static_cast<std::size_t>(d.B * d.O), [&](std::size_t job) {
    const idx b = static_cast<idx>(job) / d.O;
    const idx o = static_cast<idx>(job) % d.O;
    T* plane = o_ptr + (b * d.O + o) * d.OH * d.OW;
    std::fill(plane, plane + d.OH * d.OW, bs[o]);
    for (idx c = 0; c < d.C; ++c) {
      for (idx kh = 0; kh < d.KH; ++kh) {
        for (idx oh = 0; oh < d.OH; ++oh) {
          const idx ih = oh * d.sh + kh - d.ph;
          if (ih < 0 || ih >= d.H) continue;
          const T* irow = in + ((b * d.C + c) * d.H + ih) * d.W;
          T* orow = plane + oh * d.OW;
          for (idx kw = 0; kw < d.KW; ++kw) {
            const T w = k[((o * d.C + c) * d.KH + kh) * d.KW + kw];
            const auto [lo, hi] = col_range(kw, d.pw, d.sw, d.W, d.OW);
            if (d.sw == 1) {
              const T* src = irow + kw - d.pw;
              for (idx ow = lo; ow < hi; ++ow) orow[ow] += w * src[ow];
            } else {
              for (idx ow = lo; ow < hi; ++ow) orow[ow] += w * irow[ow * d.sw + kw - d.pw];
            }
          }
        }
      }
    }
  });

  const bool g_in = involve(tape, input);
  const bool g_k = involve(tape, kernel);
  const bool g_b = involve(tape, bias);
  if (g_in || g_k || g_b) {
    tape->record(out, [input, kernel, bias, out, d, g_in, g_k, g_b](Tape<T>& t) {
      const T* gout = t.grad(*out)->data();
      const T* in = input->data.data();
      const T* k = kernel->data.data();
      if (g_in) {
        T* gin = t.grad_buffer(*input).data();
        parallel_for(static_cast<std::size_t>(d.B), [&](std::size_t bj) {
          const idx b = static_cast<idx>(bj);
          for (idx o = 0; o < d.O; ++o) {
            for (idx c = 0; c < d.C; ++c) {
              for (idx kh = 0; kh < d.KH; ++kh) {
                for (idx oh = 0; oh < d.OH; ++oh) {
                  const idx ih = oh * d.sh + kh - d.ph;
                  if (ih < 0 || ih >= d.H) continue;
                  T* girow = gin + ((b * d.C + c) * d.H + ih) * d.W;
                  const T* gorow = gout + ((b * d.O + o) * d.OH + oh) * d.OW;
                  for (idx kw = 0; kw < d.KW; ++kw) {
                    const T w = k[((o * d.C + c) * d.KH + kh) * d.KW + kw];
                    const auto [lo, hi] = col_range(kw, d.pw, d.sw, d.W, d.OW);
                    if (d.sw == 1) {
                      T* dst = girow + kw - d.pw;
                      for (idx ow = lo; ow < hi; ++ow) dst[ow] += w * gorow[ow];
                    } else {
                      for (idx ow = lo; ow < hi; ++ow) girow[ow * d.sw + kw - d.pw] += w * gorow[ow];
                    }
                  }
                }
              }
            }
          }
        });
      }
      if (g_k || g_b) {
        T* gk = g_k ? t.grad_buffer(*kernel).data() : nullptr;
        T* gb = g_b ? t.grad_buffer(*bias).data() : nullptr;
        parallel_for(static_cast<std::size_t>(d.O), [&](std::size_t oj) {
          const idx o = static_cast<idx>(oj);
          if (gb) {
            T acc = 0;
            for (idx b = 0; b < d.B; ++b) {
              const T* plane = gout + (b * d.O + o) * d.OH * d.OW;
              for (idx j = 0; j < d.OH * d.OW; ++j) acc += plane[j];
            }
            gb[o] += acc;
          }
          if (!gk) return;
          std::vector<T> strided;
          for (idx c = 0; c < d.C; ++c) {
            for (idx kh = 0; kh < d.KH; ++kh) {
              for (idx kw = 0; kw < d.KW; ++kw) {
                const auto [lo, hi] = col_range(kw, d.pw, d.sw, d.W, d.OW);
                T acc = 0;
                for (idx b = 0; b < d.B; ++b) {
                  for (idx oh = 0; oh < d.OH; ++oh) {
                    const idx ih = oh * d.sh + kh - d.ph;
                    if (ih < 0 || ih >= d.H) continue;
                    const T* irow = in + ((b * d.C + c) * d.H + ih) * d.W;
                    const T* gorow = gout + ((b * d.O + o) * d.OH + oh) * d.OW;
                    if (d.sw == 1) {
                      acc += dot(gorow + lo, irow + lo + kw - d.pw, hi - lo);
                    } else {
                      strided.resize(static_cast<std::size_t>(hi - lo));
                      for (idx ow = lo; ow < hi; ++ow) strided[ow - lo] = irow[ow * d.sw + kw - d.pw];
                      acc += dot(gorow + lo, strided.data(), hi - lo);
                    }
                  }
                }
                gk[((o * d.C + c) * d.KH + kh) * d.KW + kw] += acc;
              }
            }
          }
        });
      }
    });
  }
  return out;
}

template <class T>
TensorPtr<T> dense(Tape<T>* tape, const TensorPtr<T>& input, const TensorPtr<T>& weight, const TensorPtr<T>& bias) {
  if (input->shape.size() != 2) throw ShapeError("dense input must be [B,F], got " + shape_str(input->shape));
  if (weight->shape.size() != 2 || weight->shape[1] != input->shape[1]) {
    throw ShapeError("dense weight " + shape_str(weight->shape) + " incompatible with input " + shape_str(input->shape));
  }
  if (bias->size() != weight->shape[0]) throw ShapeError("dense bias length must equal output width");
  const idx B = static_cast<idx>(input->shape[0]);
  const idx F = static_cast<idx>(input->shape[1]);
  const idx O = static_cast<idx>(weight->shape[0]);
  auto out = make_tensor<T>({static_cast<std::size_t>(B), static_cast<std::size_t>(O)});
  {
    const T* x = input->data.data();
    const T* w = weight->data.data();
    const T* bs = bias->data.data();
    T* y = out->data.data();
    parallel_for(static_cast<std::size_t>(B), [&](std::size_t bj) {
      const idx b = static_cast<idx>(bj);
      for (idx o = 0; o < O; ++o) y[b * O + o] = bs[o] + dot(w + o * F, x + b * F, F);
    });
  }

  const bool g_in = involve(tape, input);
  const bool g_w = involve(tape, weight);
  const bool g_b = involve(tape, bias);
  if (g_in || g_w || g_b) {
    tape->record(out, [input, weight, bias, out, B, F, O, g_in, g_w, g_b](Tape<T>& t) {
      const T* gy = t.grad(*out)->data();
      const T* x = input->data.data();
      const T* w = weight->data.data();
      if (g_in) {
        T* gx = t.grad_buffer(*input).data();
        parallel_for(static_cast<std::size_t>(B), [&](std::size_t bj) {
          const idx b = static_cast<idx>(bj);
          T* row = gx + b * F;
          for (idx o = 0; o < O; ++o) {
            const T g = gy[b * O + o];
            const T* wr = w + o * F;
            for (idx f = 0; f < F; ++f) row[f] += g * wr[f];
          }
        });
      }
      if (g_w || g_b) {
        T* gw = g_w ? t.grad_buffer(*weight).data() : nullptr;
        T* gb = g_b ? t.grad_buffer(*bias).data() : nullptr;
        parallel_for(static_cast<std::size_t>(O), [&](std::size_t oj) {
          const idx o = static_cast<idx>(oj);
          for (idx b = 0; b < B; ++b) {
            const T g = gy[b * O + o];
            if (gb) gb[o] += g;
            if (gw) {
              T* wr = gw + o * F;
              const T* xr = x + b * F;
              for (idx f = 0; f < F; ++f) wr[f] += g * xr[f];
            }
          }
        });
      }
    });
  }
  return out;
}

template <class T>
TensorPtr<T> relu(Tape<T>* tape, const TensorPtr<T>& input) {
  auto out = make_tensor<T>(input->shape);
  for (std::size_t k = 0; k < input->size(); ++k) out->data[k] = input->data[k] > T{0} ? input->data[k] : T{0};
  if (involve(tape, input)) {
    tape->record(out, [input, out](Tape<T>& t) {
      const auto& gy = *t.grad(*out);
      auto& gx = t.grad_buffer(*input);
      for (std::size_t k = 0; k < gx.size(); ++k)
        if (input->data[k] > T{0}) gx[k] += gy[k];
    });
  }
  return out;
}

template <class T>
TensorPtr<T> dropout(Tape<T>* tape, const TensorPtr<T>& input, double p, std::uint64_t mask_seed, bool train) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout probability must be in [0, 1)");
  if (!train || p == 0.0) return input;
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  Rng rng(mask_seed);
  auto mask = std::make_shared<std::vector<T>>(input->size());
  for (auto& m : *mask) m = rng.uniform() >= p ? scale : T{0};
  auto out = make_tensor<T>(input->shape);
  for (std::size_t k = 0; k < input->size(); ++k) out->data[k] = input->data[k] * (*mask)[k];
  if (involve(tape, input)) {
    tape->record(out, [input, out, mask](Tape<T>& t) {
      const auto& gy = *t.grad(*out);
      auto& gx = t.grad_buffer(*input);
      for (std::size_t k = 0; k < gx.size(); ++k) gx[k] += gy[k] * (*mask)[k];
    });
  }
  return out;
}

template <class T>
TensorPtr<T> reshape(Tape<T>* tape, const TensorPtr<T>& input, Shape shape) {
  if (numel(shape) != input->size()) {
    throw ShapeError("cannot reshape " + shape_str(input->shape) + " to " + shape_str(shape));
  }
  auto out = make_tensor<T>(std::move(shape), input->data);
  if (involve(tape, input)) {
    tape->record(out, [input, out](Tape<T>& t) {
      const auto& gy = *t.grad(*out);
      auto& gx = t.grad_buffer(*input);
      for (std::size_t k = 0; k < gx.size(); ++k) gx[k] += gy[k];
    });
  }
  return out;
}

template <class T>
TensorPtr<T> flatten(Tape<T>* tape, const TensorPtr<T>& input) {
  if (input->shape.empty()) throw ShapeError("flatten needs a batch dimension");
  const std::size_t batch = input->shape[0];
  const std::size_t features = batch == 0 ? numel(Shape(input->shape.begin() + 1, input->shape.end()))
                                          : input->size() / batch;
  return reshape(tape, input, {batch, features});
}

template <class T>
TensorPtr<T> add(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  if (a->shape != b->shape) throw ShapeError("add shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  auto out = make_tensor<T>(a->shape);
  for (std::size_t k = 0; k < a->size(); ++k) out->data[k] = a->data[k] + b->data[k];
  const bool ga = involve(tape, a);
  const bool gb = involve(tape, b);
  if (ga || gb) {
    tape->record(out, [a, b, out, ga, gb](Tape<T>& t) {
      const auto& gy = *t.grad(*out);
      if (ga) {
        auto& g = t.grad_buffer(*a);
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += gy[k];
      }
      if (gb) {
        auto& g = t.grad_buffer(*b);
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += gy[k];
      }
    });
  }
  return out;
}

template <class T>
TensorPtr<T> sum(Tape<T>* tape, const TensorPtr<T>& input) {
  T acc = 0;
  for (T v : input->data) acc += v;
  auto out = make_tensor<T>({1}, std::vector<T>{acc});
  if (involve(tape, input)) {
    tape->record(out, [input, out](Tape<T>& t) {
      const T g = (*t.grad(*out))[0];
      auto& gx = t.grad_buffer(*input);
      for (auto& v : gx) v += g;
    });
  }
  return out;
}

namespace {

template <class T>
void check_logits(const Tensor<T>& logits, std::span<const std::size_t> labels) {
  if (logits.shape.size() != 2) throw ShapeError("logits must be [B,K], got " + shape_str(logits.shape));
  if (labels.size() != logits.shape[0]) throw ShapeError("label count does not match batch size");
  for (std::size_t y : labels) {
    if (y >= logits.shape[1]) {
      throw LabelError("label " + std::to_string(y) + " out of range for " + std::to_string(logits.shape[1]) +
                       " classes");
    }
  }
}

template <class T>
T log_sum_exp(const T* row, std::size_t k) {
  const T m = *std::max_element(row, row + k);
  T s = 0;
  for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - m);
  return m + std::log(s);
}

}  // namespace

template <class T>
std::vector<T> cross_entropy_per_sample(const Tensor<T>& logits, std::span<const std::size_t> labels) {
  check_logits(logits, labels);
  const std::size_t B = logits.shape[0], K = logits.shape[1];
  std::vector<T> loss(B);
  for (std::size_t b = 0; b < B; ++b) {
    const T* row = logits.data.data() + b * K;
    loss[b] = log_sum_exp(row, K) - row[labels[b]];
  }
  return loss;
}

template <class T>
std::vector<T> softmax_rows(const Tensor<T>& logits) {
  if (logits.shape.size() != 2) throw ShapeError("logits must be [B,K], got " + shape_str(logits.shape));
  const std::size_t B = logits.shape[0], K = logits.shape[1];
  std::vector<T> p(logits.size());
  for (std::size_t b = 0; b < B; ++b) {
    const T* row = logits.data.data() + b * K;
    const T lse = log_sum_exp(row, K);
    for (std::size_t j = 0; j < K; ++j) p[b * K + j] = std::exp(row[j] - lse);
  }
  return p;
}

template <class T>
TensorPtr<T> softmax_cross_entropy(Tape<T>* tape, const TensorPtr<T>& logits, std::span<const std::size_t> labels,
                                   Reduction reduction) {
  const auto per = cross_entropy_per_sample(*logits, labels);
  const std::size_t B = logits->shape[0], K = logits->shape[1];
  T total = 0;
  for (T v : per) total += v;
  const T scale = (reduction == Reduction::mean && B > 0) ? T{1} / static_cast<T>(B) : T{1};
  auto out = make_tensor<T>({1}, std::vector<T>{total * scale});
  if (involve(tape, logits)) {
    std::vector<std::size_t> ys(labels.begin(), labels.end());
    tape->record(out, [logits, out, ys = std::move(ys), scale, B, K](Tape<T>& t) {
      const T g = (*t.grad(*out))[0] * scale;
      auto& gx = t.grad_buffer(*logits);
      const auto p = softmax_rows(*logits);
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t j = 0; j < K; ++j) {
          gx[b * K + j] += g * (p[b * K + j] - (j == ys[b] ? T{1} : T{0}));
        }
      }
    });
  }
  return out;
}

#define ADVAMC_INSTANTIATE_OPS(T)                                                                                  \
  template TensorPtr<T> conv2d<T>(Tape<T>*, const TensorPtr<T>&, const TensorPtr<T>&, const TensorPtr<T>&,         \
                                  const Conv2dGeometry&);                                                          \
  template TensorPtr<T> dense<T>(Tape<T>*, const TensorPtr<T>&, const TensorPtr<T>&, const TensorPtr<T>&);         \
  template TensorPtr<T> relu<T>(Tape<T>*, const TensorPtr<T>&);                                                    \
  template TensorPtr<T> dropout<T>(Tape<T>*, const TensorPtr<T>&, double, std::uint64_t, bool);                    \
  template TensorPtr<T> flatten<T>(Tape<T>*, const TensorPtr<T>&);                                                 \
  template TensorPtr<T> reshape<T>(Tape<T>*, const TensorPtr<T>&, Shape);                                          \
  template TensorPtr<T> add<T>(Tape<T>*, const TensorPtr<T>&, const TensorPtr<T>&);                                \
  template TensorPtr<T> sum<T>(Tape<T>*, const TensorPtr<T>&);                                                     \
  template TensorPtr<T> softmax_cross_entropy<T>(Tape<T>*, const TensorPtr<T>&, std::span<const std::size_t>,      \
                                                 Reduction);                                                       \
  template std::vector<T> cross_entropy_per_sample<T>(const Tensor<T>&, std::span<const std::size_t>);            \
  template std::vector<T> softmax_rows<T>(const Tensor<T>&);

ADVAMC_INSTANTIATE_OPS(float)
ADVAMC_INSTANTIATE_OPS(double)

#undef ADVAMC_INSTANTIATE_OPS

}  // namespace advamc::ad
