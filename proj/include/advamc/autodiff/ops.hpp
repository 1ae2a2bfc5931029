#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "advamc/autodiff/tape.hpp"
#include "advamc/autodiff/tensor.hpp"

// Differentiable primitives. Every op takes a nullable tape: with nullptr
// nothing is recorded (pure inference).

namespace advamc::ad {

struct Conv2dGeometry {
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
};

/// Cross-correlation. input [B,C,H,W], kernel [O,C,KH,KW], bias [O].
template <class T>
TensorPtr<T> conv2d(Tape<T>* tape, const TensorPtr<T>& input, const TensorPtr<T>& kernel, const TensorPtr<T>& bias,
                    const Conv2dGeometry& geom = {});

/// input [B,F], weight [O,F], bias [O] -> [B,O].
template <class T>
TensorPtr<T> dense(Tape<T>* tape, const TensorPtr<T>& input, const TensorPtr<T>& weight, const TensorPtr<T>& bias);

template <class T>
TensorPtr<T> relu(Tape<T>* tape, const TensorPtr<T>& input);

/// Inverted dropout: kept units are scaled by 1/(1-p). Identity when
/// !train or p == 0.
template <class T>
TensorPtr<T> dropout(Tape<T>* tape, const TensorPtr<T>& input, double p, std::uint64_t mask_seed, bool train);

/// [B, ...] -> [B, prod(...)].
template <class T>
TensorPtr<T> flatten(Tape<T>* tape, const TensorPtr<T>& input);

template <class T>
TensorPtr<T> reshape(Tape<T>* tape, const TensorPtr<T>& input, Shape shape);

template <class T>
TensorPtr<T> add(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b);

/// Sum of all elements, shape {1}.
template <class T>
TensorPtr<T> sum(Tape<T>* tape, const TensorPtr<T>& input);

enum class Reduction { mean, sum };

/// Softmax cross-entropy over logits [B,K] with integer labels, reduced to
/// a scalar. Uses log-sum-exp; throws LabelError for labels >= K.
template <class T>
TensorPtr<T> softmax_cross_entropy(Tape<T>* tape, const TensorPtr<T>& logits, std::span<const std::size_t> labels,
                                   Reduction reduction = Reduction::mean);

/// Unreduced per-row cross-entropy (no tape).
template <class T>
std::vector<T> cross_entropy_per_sample(const Tensor<T>& logits, std::span<const std::size_t> labels);

/// Row-wise softmax probabilities (no tape).
template <class T>
std::vector<T> softmax_rows(const Tensor<T>& logits);

}  // namespace advamc::ad
